#include "narrative/nn/ops.h"

#include <cmath>
#include <limits>

#include "narrative/error.h"

namespace narrative::nn {

namespace {

std::string shape_of(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows()) {
    throw ShapeError("linear: input " + shape_of(x) + " vs weight " + shape_of(w));
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw ShapeError("linear: bias " + shape_of(b) + " vs weight " + shape_of(w));
  }
  Tensor y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor* dw, Tensor* db) {
  if (dx) *dx = dy * w.transpose();
  if (dw) dw->noalias() += x.transpose() * dy;
  if (db) *db += dy.colwise().sum();
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  LayerNormCache* cache) {
  if (gamma.cols() != x.cols() || beta.cols() != x.cols()) {
    throw ShapeError("layer_norm: affine width does not match input " + shape_of(x));
  }
  const Eigen::Index n = x.cols();
  Tensor normalized(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const auto centered = x.row(r).array() - mean;
    const double var = centered.square().sum() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normalized.row(r) = centered * inv_std(r);
  }
  Tensor y = normalized.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                         Tensor* dx, Tensor* dgamma, Tensor* dbeta) {
  const Tensor& xhat = cache.normalized;
  if (dgamma) *dgamma += (dy.array() * xhat.array()).colwise().sum().matrix();
  if (dbeta) *dbeta += dy.colwise().sum();
  if (!dx) return;
  const double n = static_cast<double>(dy.cols());
  Tensor dxhat = dy.array().rowwise() * gamma.row(0).array();
  dx->resize(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double sum = dxhat.row(r).sum();
    const double dot = dxhat.row(r).dot(xhat.row(r));
    dx->row(r) = (cache.inv_std(r) / n) *
                 (n * dxhat.row(r).array() - sum - xhat.row(r).array() * dot).matrix();
  }
}

Tensor softmax(const Tensor& x) {
  Tensor y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.row(r).maxCoeff();
    if (!std::isfinite(mx)) {
      y.row(r).setZero();
      continue;
    }
    y.row(r) = (x.row(r).array() - mx).exp();
    // Vectorized exp leaves denormals for -inf inputs.
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (x(r, c) == -std::numeric_limits<double>::infinity()) y(r, c) = 0.0;
    }
    y.row(r) /= y.row(r).sum();
  }
  return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = y.row(r).dot(dy.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
  }
  return dx;
}

namespace {

constexpr double kLogFloor = 1e-12;

void check_labels(const Tensor& probs, std::span<const int> labels,
                  std::span<const double> weights) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw ShapeError("cross entropy: label count does not match rows");
  }
  if (static_cast<Eigen::Index>(weights.size()) != probs.cols()) {
    throw ShapeError("cross entropy: class weight count does not match columns");
  }
  for (int l : labels) {
    if (l < 0 || l >= probs.cols()) throw ArgumentError("cross entropy: label out of range");
  }
}

}  // namespace

double cross_entropy(const Tensor& probs, std::span<const int> labels,
                     std::span<const double> class_weights) {
  check_labels(probs, labels, class_weights);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    total -= class_weights[labels[i]] * std::log(probs(i, labels[i]) + kLogFloor);
  }
  return total / static_cast<double>(labels.size());
}

double softmax_cross_entropy_sum(const Tensor& logits, std::span<const int> labels,
                                 std::span<const double> class_weights, Tensor* probs,
                                 Tensor* dlogits) {
  Tensor p = softmax(logits);
  check_labels(p, labels, class_weights);
  double total = 0.0;
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const double w = class_weights[y];
    const double py = p(i, y);
    total -= w * std::log(py + kLogFloor);
    if (dlogits) {
      // d/dz_j of -w log(p_y + eps) = -w / (p_y + eps) * p_y * (1[j=y] - p_j)
      const double scale = -w * py / (py + kLogFloor);
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        (*dlogits)(i, j) = scale * ((j == y ? 1.0 : 0.0) - p(i, j));
      }
    }
  }
  if (probs) *probs = std::move(p);
  return total;
}

Tensor dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout rate must be in [0, 1)");
  Tensor mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

Tensor dropout(const Tensor& x, double rate, uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  Rng rng(seed);
  return x.cwiseProduct(dropout_mask(x.rows(), x.cols(), rate, rng));
}

Tensor positional_encoding(int length, int d) {
  if (d <= 0 || d % 2 != 0) throw ArgumentError("positional encoding width must be even");
  Tensor pe(length, d);
  for (int pos = 0; pos < length; ++pos) {
    for (int k = 0; k < d / 2; ++k) {
      const double angle =
          pos / std::pow(10000.0, static_cast<double>(2 * k) / static_cast<double>(d));
      pe(pos, 2 * k) = std::sin(angle);
      pe(pos, 2 * k + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor relu(const Tensor& x) { return x.cwiseMax(0.0); }

Tensor xavier_uniform(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-limit, limit);
  return t;
}

Tensor normal_init(int rows, int cols, double stddev, Rng& rng) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = stddev * rng.normal();
  return t;
}

}  // namespace narrative::nn
