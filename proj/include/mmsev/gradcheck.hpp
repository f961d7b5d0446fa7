#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mmsev/params.hpp"

namespace mmsev {

/// A loss over the store's values. It must zero the store's gradients and
/// accumulate the analytic gradient of the returned loss into them.
using LossFn = std::function<double(ParamStore&)>;

struct ParamGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<ParamGradError> per_param;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Denominator floor for |a - n| / max(|a|, |n|, floor).
  double relative_floor = 1e-6;
};

/// Compares the analytic gradient against central differences for every
/// entry of every parameter. Throws DeterminismError if two evaluations at the
/// same point disagree. Parameter values are restored afterwards.
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params,
                           const GradCheckOptions& opts = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace mmsev
