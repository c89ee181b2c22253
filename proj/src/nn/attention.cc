#include "narrative/nn/attention.h"

#include <cmath>
#include <limits>

#include "narrative/error.h"

namespace narrative::nn {

Tensor multi_head_attention(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                            const AttentionWeights& w, int n_heads, const AttentionMask* mask,
                            AttentionCache* cache, int blocks) {
  const Eigen::Index d = w.wq->cols();
  if (n_heads <= 0 || d % n_heads != 0) {
    throw ShapeError("attention width " + std::to_string(d) + " not divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  if (xk.rows() != xv.rows()) throw ShapeError("attention: key/value row mismatch");
  if (blocks <= 0 || xq.rows() % blocks != 0 || xk.rows() % blocks != 0) {
    throw ShapeError("attention: rows not divisible into blocks");
  }
  const Eigen::Index sq = xq.rows() / blocks;
  const Eigen::Index sk = xk.rows() / blocks;
  if (mask && (mask->rows() != sq || mask->cols() != sk)) {
    throw ShapeError("attention: mask shape does not match sequence lengths");
  }
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = linear(xq, *w.wq, *w.bq);
  Tensor k = linear(xk, *w.wk, *w.bk);
  Tensor v = linear(xv, *w.wv, *w.bv);
  Tensor concat(xq.rows(), d);
  std::vector<Tensor> probs;
  if (cache) probs.reserve(static_cast<size_t>(blocks) * n_heads);

  for (int b = 0; b < blocks; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      const auto qh = q.block(b * sq, h * dh, sq, dh);
      const auto kh = k.block(b * sk, h * dh, sk, dh);
      const auto vh = v.block(b * sk, h * dh, sk, dh);
      Tensor scores = (qh * kh.transpose()) * scale;
      if (mask) {
        for (Eigen::Index i = 0; i < sq; ++i) {
          for (Eigen::Index j = 0; j < sk; ++j) {
            if ((*mask)(i, j)) scores(i, j) = -std::numeric_limits<double>::infinity();
          }
        }
      }
      Tensor p = softmax(scores);
      concat.block(b * sq, h * dh, sq, dh) = p * vh;
      if (cache) probs.push_back(std::move(p));
    }
  }
  Tensor out = linear(concat, *w.wo, *w.bo);
  if (cache) {
    cache->xq = xq;
    cache->xk = xk;
    cache->xv = xv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->concat = std::move(concat);
    cache->blocks = blocks;
    cache->heads = n_heads;
    cache->probs = std::move(probs);
  }
  return out;
}

void multi_head_attention_backward(const AttentionCache& cache, const AttentionWeights& w,
                                   const Tensor& dout, Tensor* dxq, Tensor* dxk, Tensor* dxv,
                                   const AttentionGrads& grads) {
  const Eigen::Index d = w.wq->cols();
  const int blocks = cache.blocks;
  const int n_heads = cache.heads;
  const Eigen::Index sq = cache.q.rows() / blocks;
  const Eigen::Index sk = cache.k.rows() / blocks;
  const Eigen::Index dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor dconcat;
  linear_backward(cache.concat, *w.wo, dout, &dconcat, grads.wo, grads.bo);

  Tensor dq = Tensor::Zero(cache.q.rows(), d);
  Tensor dk = Tensor::Zero(cache.k.rows(), d);
  Tensor dv = Tensor::Zero(cache.v.rows(), d);
  for (int b = 0; b < blocks; ++b) {
    for (int h = 0; h < n_heads; ++h) {
      const Tensor& p = cache.probs[static_cast<size_t>(b) * n_heads + h];
      const auto qh = cache.q.block(b * sq, h * dh, sq, dh);
      const auto kh = cache.k.block(b * sk, h * dh, sk, dh);
      const auto vh = cache.v.block(b * sk, h * dh, sk, dh);
      const Tensor doh = dconcat.block(b * sq, h * dh, sq, dh);
      const Tensor dp = doh * vh.transpose();
      dv.block(b * sk, h * dh, sk, dh) += p.transpose() * doh;
      const Tensor ds = softmax_backward(p, dp) * scale;
      dq.block(b * sq, h * dh, sq, dh) += ds * kh;
      dk.block(b * sk, h * dh, sk, dh) += ds.transpose() * qh;
    }
  }
  linear_backward(cache.xq, *w.wq, dq, dxq, grads.wq, grads.bq);
  linear_backward(cache.xk, *w.wk, dk, dxk, grads.wk, grads.bk);
  linear_backward(cache.xv, *w.wv, dv, dxv, grads.wv, grads.bv);
}

void add_transformer_params(ParameterSet& params, const std::string& prefix, int d, Rng& rng,
                            int ffn_multiplier) {
  const int inner = ffn_multiplier * d;
  for (const char* name : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
    params.add(prefix + name + ".w", xavier_uniform(d, d, rng));
    params.add(prefix + name + ".b", Tensor::Zero(1, d));
  }
  params.add(prefix + "ln1.gamma", Tensor::Ones(1, d));
  params.add(prefix + "ln1.beta", Tensor::Zero(1, d));
  params.add(prefix + "ffn.w1", xavier_uniform(d, inner, rng));
  params.add(prefix + "ffn.b1", Tensor::Zero(1, inner));
  params.add(prefix + "ffn.w2", xavier_uniform(inner, d, rng));
  params.add(prefix + "ffn.b2", Tensor::Zero(1, d));
  params.add(prefix + "ln2.gamma", Tensor::Ones(1, d));
  params.add(prefix + "ln2.beta", Tensor::Zero(1, d));
}

TransformerWeights transformer_weights(const ParameterSet& p, const std::string& prefix) {
  auto v = [&](const char* n) { return &p.value(prefix + n); };
  return TransformerWeights{
      AttentionWeights{v("attn.q.w"), v("attn.q.b"), v("attn.k.w"), v("attn.k.b"),
                       v("attn.v.w"), v("attn.v.b"), v("attn.o.w"), v("attn.o.b")},
      v("ln1.gamma"), v("ln1.beta"), v("ffn.w1"), v("ffn.b1"),
      v("ffn.w2"),    v("ffn.b2"),   v("ln2.gamma"), v("ln2.beta")};
}

TransformerGrads transformer_grads(GradientBuffer& g, const std::string& prefix) {
  auto v = [&](const char* n) { return &g[prefix + n]; };
  return TransformerGrads{
      AttentionGrads{v("attn.q.w"), v("attn.q.b"), v("attn.k.w"), v("attn.k.b"),
                     v("attn.v.w"), v("attn.v.b"), v("attn.o.w"), v("attn.o.b")},
      v("ln1.gamma"), v("ln1.beta"), v("ffn.w1"), v("ffn.b1"),
      v("ffn.w2"),    v("ffn.b2"),   v("ln2.gamma"), v("ln2.beta")};
}

Tensor transformer_layer(const Tensor& x, const TransformerWeights& w, int n_heads,
                         TransformerCache* cache, int blocks, DropoutSpec dropout) {
  if (x.cols() != w.attn.wq->rows()) {
    throw ShapeError("transformer layer: input width " + std::to_string(x.cols()) +
                     " vs model width " + std::to_string(w.attn.wq->rows()));
  }
  TransformerCache local;
  TransformerCache& c = cache ? *cache : local;

  Tensor attn = multi_head_attention(x, x, x, w.attn, n_heads, nullptr,
                                     cache ? &c.attn : nullptr, blocks);
  if (dropout.active()) {
    c.attn_mask = dropout_mask(attn.rows(), attn.cols(), dropout.rate, *dropout.rng);
    attn = attn.cwiseProduct(c.attn_mask);
  } else {
    c.attn_mask.resize(0, 0);
  }
  Tensor hidden = layer_norm(x + attn, *w.ln1_gamma, *w.ln1_beta, 1e-5, &c.ln1);
  Tensor pre_relu = linear(hidden, *w.w1, *w.b1);
  Tensor post_relu = relu(pre_relu);
  Tensor ffn = linear(post_relu, *w.w2, *w.b2);
  if (dropout.active()) {
    c.ffn_mask = dropout_mask(ffn.rows(), ffn.cols(), dropout.rate, *dropout.rng);
    ffn = ffn.cwiseProduct(c.ffn_mask);
  } else {
    c.ffn_mask.resize(0, 0);
  }
  Tensor out = layer_norm(hidden + ffn, *w.ln2_gamma, *w.ln2_beta, 1e-5, &c.ln2);
  if (cache) {
    c.hidden = std::move(hidden);
    c.pre_relu = std::move(pre_relu);
    c.post_relu = std::move(post_relu);
  }
  return out;
}

Tensor transformer_layer_backward(const TransformerCache& c, const TransformerWeights& w,
                                  const Tensor& dout, const TransformerGrads& grads) {
  Tensor dsum2;
  layer_norm_backward(c.ln2, *w.ln2_gamma, dout, &dsum2, grads.ln2_gamma, grads.ln2_beta);
  Tensor dhidden = dsum2;
  Tensor dffn = c.ffn_mask.size() ? Tensor(dsum2.cwiseProduct(c.ffn_mask)) : dsum2;
  Tensor dpost;
  linear_backward(c.post_relu, *w.w2, dffn, &dpost, grads.w2, grads.b2);
  Tensor dpre = dpost.array() * (c.pre_relu.array() > 0.0).cast<double>();
  Tensor dh_ffn;
  linear_backward(c.hidden, *w.w1, dpre, &dh_ffn, grads.w1, grads.b1);
  dhidden += dh_ffn;

  Tensor dsum1;
  layer_norm_backward(c.ln1, *w.ln1_gamma, dhidden, &dsum1, grads.ln1_gamma, grads.ln1_beta);
  Tensor dattn = c.attn_mask.size() ? Tensor(dsum1.cwiseProduct(c.attn_mask)) : dsum1;
  Tensor dxq, dxk, dxv;
  multi_head_attention_backward(c.attn, w.attn, dattn, &dxq, &dxk, &dxv, grads.attn);
  return dsum1 + dxq + dxk + dxv;
}

}  // namespace narrative::nn
