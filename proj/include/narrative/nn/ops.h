#ifndef NARRATIVE_NN_OPS_H_
#define NARRATIVE_NN_OPS_H_

#include <cstdint>
#include <span>

#include "narrative/nn/tensor.h"
#include "narrative/util/rng.h"

namespace narrative::nn {

// y = xW + b with b broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Gradients of linear(). `dx` is overwritten; `dw` and `db` accumulate.
// Any output pointer may be null.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx,
                     Tensor* dw, Tensor* db);

struct LayerNormCache {
  Tensor normalized;       // pre-affine rows
  Eigen::VectorXd inv_std;
};

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5, LayerNormCache* cache = nullptr);

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma,
                         const Tensor& dy, Tensor* dx, Tensor* dgamma, Tensor* dbeta);

// Row-wise softmax with max-shift. Entries equal to -inf get probability 0.
Tensor softmax(const Tensor& x);

// dL/dx given dL/dy for y = softmax(x), row-wise.
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

// Mean over rows of -w[label] * log(p[label] + 1e-12).
double cross_entropy(const Tensor& probs, std::span<const int> labels,
                     std::span<const double> class_weights);

// Summed weighted negative log-likelihood of softmax(logits). Writes the
// probabilities and, when requested, the exact gradient w.r.t. the logits.
double softmax_cross_entropy_sum(const Tensor& logits, std::span<const int> labels,
                                 std::span<const double> class_weights, Tensor* probs,
                                 Tensor* dlogits);

// Inverted dropout mask: entries are 0 with probability `rate`, otherwise
// 1 / (1 - rate).
Tensor dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng);

Tensor dropout(const Tensor& x, double rate, uint64_t seed, bool training);

// Sinusoidal encoding; d must be even.
Tensor positional_encoding(int length, int d);

Tensor relu(const Tensor& x);

// Xavier/Glorot uniform initialisation.
Tensor xavier_uniform(int rows, int cols, Rng& rng);
Tensor normal_init(int rows, int cols, double stddev, Rng& rng);

}  // namespace narrative::nn

#endif  // NARRATIVE_NN_OPS_H_
