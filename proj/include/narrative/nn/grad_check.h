#ifndef NARRATIVE_NN_GRAD_CHECK_H_
#define NARRATIVE_NN_GRAD_CHECK_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "narrative/nn/tensor.h"

namespace narrative::nn {

// Evaluates the loss at `params`; when `grads` is non-null it also writes
// the analytic gradient into it.
using LossFunction = std::function<double(const ParameterSet& params, GradientBuffer* grads)>;

constexpr double kGradNormFloor = 1e-5;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::map<std::string, double> per_tensor;
  int coordinates = 0;
};

// Central differences on up to `samples_per_tensor` coordinates of every
// tensor (all coordinates for smaller tensors). The error of one tensor is
// ||analytic - numeric|| / max(||analytic||, ||numeric||, kGradNormFloor)
// over the checked coordinates. At small steps central differences carry
// roundoff near 1e-10 per coordinate, so tensors with a true gradient of
// zero (e.g. attention key biases) are judged against the floor.
GradCheckResult grad_check(const LossFunction& loss, const ParameterSet& params,
                           double step = 1e-3, int samples_per_tensor = 64,
                           uint64_t seed = 0);

// Same, but compares against a caller-supplied analytic gradient.
GradCheckResult grad_check_against(const LossFunction& loss, const ParameterSet& params,
                                   const GradientBuffer& analytic, double step = 1e-3,
                                   int samples_per_tensor = 64, uint64_t seed = 0);

}  // namespace narrative::nn

#endif  // NARRATIVE_NN_GRAD_CHECK_H_
