#ifndef NARRATIVE_NN_ADAM_H_
#define NARRATIVE_NN_ADAM_H_

#include <map>
#include <string>

#include "narrative/nn/tensor.h"

namespace narrative::nn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

// One bias-corrected Adam update from the gradients stored in `params`.
void adam_step(ParameterSet& params, AdamState& state, double lr);

}  // namespace narrative::nn

#endif  // NARRATIVE_NN_ADAM_H_
