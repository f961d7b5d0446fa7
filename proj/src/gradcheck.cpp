#include "mmsev/gradcheck.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "mmsev/errors.hpp"

namespace mmsev {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& params,
                           const GradCheckOptions& opts) {
  GradCheckReport report;
  if (params.size() == 0) return report;

  const double base = loss_fn(params);
  std::map<std::string, Matrix> analytic;
  for (const auto& [name, p] : params) analytic.emplace(name, p.grad);

  const double again = loss_fn(params);
  if (again != base) {
    throw DeterminismError(fmt::format(
        "loss function is not deterministic: {:.17g} then {:.17g} at identical parameters", base,
        again));
  }

  for (auto& [name, p] : params) {
    ParamGradError entry;
    entry.name = name;
    const Matrix& g = analytic.at(name);
    auto w = p.value.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double saved = w[i];
      w[i] = saved + opts.epsilon;
      const double up = loss_fn(params);
      w[i] = saved - opts.epsilon;
      const double down = loss_fn(params);
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double err = relative_error(g.values()[i], numeric, opts.relative_floor);
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = g.values()[i];
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.per_param.push_back(entry);
  }
  // leave the store holding the analytic gradient at the unperturbed point
  loss_fn(params);
  return report;
}

}  // namespace mmsev
