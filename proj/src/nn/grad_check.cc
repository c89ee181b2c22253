#include "narrative/nn/grad_check.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "narrative/util/rng.h"

namespace narrative::nn {

GradCheckResult grad_check_against(const LossFunction& loss, const ParameterSet& params,
                                   const GradientBuffer& analytic, double step,
                                   int samples_per_tensor, uint64_t seed) {
  GradCheckResult result;
  ParameterSet probe = params;
  Rng rng(seed);
  for (const auto& name : params.names()) {
    Tensor& value = probe.value(name);
    const Tensor& grad = analytic.at(name);
    const Eigen::Index size = value.size();
    std::vector<Eigen::Index> coords(static_cast<size_t>(size));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (size > samples_per_tensor) {
      rng.shuffle(coords);
      coords.resize(static_cast<size_t>(samples_per_tensor));
    }
    double diff2 = 0.0, analytic2 = 0.0, numeric2 = 0.0;
    for (Eigen::Index idx : coords) {
      double& x = value.data()[idx];
      const double saved = x;
      x = saved + step;
      const double plus = loss(probe, nullptr);
      x = saved - step;
      const double minus = loss(probe, nullptr);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = grad.data()[idx];
      diff2 += (a - numeric) * (a - numeric);
      analytic2 += a * a;
      numeric2 += numeric * numeric;
      ++result.coordinates;
    }
    const double denom = std::max({std::sqrt(analytic2), std::sqrt(numeric2), kGradNormFloor});
    const double err = std::sqrt(diff2) / denom;
    result.per_tensor[name] = err;
    if (err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_tensor = name;
    }
  }
  return result;
}

GradCheckResult grad_check(const LossFunction& loss, const ParameterSet& params, double step,
                           int samples_per_tensor, uint64_t seed) {
  GradientBuffer analytic = params.make_gradient_buffer();
  loss(params, &analytic);
  return grad_check_against(loss, params, analytic, step, samples_per_tensor, seed);
}

}  // namespace narrative::nn
