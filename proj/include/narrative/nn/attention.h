#ifndef NARRATIVE_NN_ATTENTION_H_
#define NARRATIVE_NN_ATTENTION_H_

#include <optional>
#include <string>
#include <vector>

#include "narrative/nn/ops.h"
#include "narrative/nn/tensor.h"

namespace narrative::nn {

// Boolean mask over (query, key) positions; true entries are excluded.
using AttentionMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AttentionWeights {
  const Tensor* wq;
  const Tensor* bq;
  const Tensor* wk;
  const Tensor* bk;
  const Tensor* wv;
  const Tensor* bv;
  const Tensor* wo;
  const Tensor* bo;
};

struct AttentionGrads {
  Tensor* wq;
  Tensor* bq;
  Tensor* wk;
  Tensor* bk;
  Tensor* wv;
  Tensor* bv;
  Tensor* wo;
  Tensor* bo;
};

struct AttentionCache {
  Tensor xq, xk, xv;
  Tensor q, k, v;
  Tensor concat;
  int blocks = 1;
  int heads = 1;
  // Attention probabilities, indexed [block * heads + head], each Sq x Sk.
  std::vector<Tensor> probs;
};

// Scaled dot-product attention with `n_heads` heads and an output
// projection. Rows are split into `blocks` independent sequences of equal
// length, which lets many short sequences share one projection matmul.
Tensor multi_head_attention(const Tensor& xq, const Tensor& xk, const Tensor& xv,
                            const AttentionWeights& w, int n_heads,
                            const AttentionMask* mask = nullptr,
                            AttentionCache* cache = nullptr, int blocks = 1);

void multi_head_attention_backward(const AttentionCache& cache, const AttentionWeights& w,
                                   const Tensor& dout, Tensor* dxq, Tensor* dxk,
                                   Tensor* dxv, const AttentionGrads& grads);

struct TransformerWeights {
  AttentionWeights attn;
  const Tensor* ln1_gamma;
  const Tensor* ln1_beta;
  const Tensor* w1;
  const Tensor* b1;
  const Tensor* w2;
  const Tensor* b2;
  const Tensor* ln2_gamma;
  const Tensor* ln2_beta;
};

struct TransformerGrads {
  AttentionGrads attn;
  Tensor* ln1_gamma;
  Tensor* ln1_beta;
  Tensor* w1;
  Tensor* b1;
  Tensor* w2;
  Tensor* b2;
  Tensor* ln2_gamma;
  Tensor* ln2_beta;
};

// Registers one layer's parameters under `prefix` (feed-forward width
// ffn_multiplier * d).
void add_transformer_params(ParameterSet& params, const std::string& prefix, int d,
                            Rng& rng, int ffn_multiplier = 4);
TransformerWeights transformer_weights(const ParameterSet& params, const std::string& prefix);
TransformerGrads transformer_grads(GradientBuffer& grads, const std::string& prefix);

struct TransformerCache {
  AttentionCache attn;
  Tensor attn_mask;  // dropout mask on the attention sublayer (empty if none)
  LayerNormCache ln1;
  Tensor hidden;     // output of the first LayerNorm
  Tensor pre_relu;
  Tensor post_relu;
  Tensor ffn_mask;
  LayerNormCache ln2;
};

struct DropoutSpec {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

// Post-norm encoder layer:
//   H = LayerNorm(X + MHA(X, X, X))
//   out = LayerNorm(H + FFL(H)),  FFL = linear -> relu -> linear.
Tensor transformer_layer(const Tensor& x, const TransformerWeights& w, int n_heads,
                         TransformerCache* cache = nullptr, int blocks = 1,
                         DropoutSpec dropout = {});

// Returns dL/dx and accumulates parameter gradients.
Tensor transformer_layer_backward(const TransformerCache& cache, const TransformerWeights& w,
                                  const Tensor& dout, const TransformerGrads& grads);

}  // namespace narrative::nn

#endif  // NARRATIVE_NN_ATTENTION_H_
