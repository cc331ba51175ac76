#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <type_traits>
#include <vector>

namespace malign::nn {

// A loss evaluation that also reports which piecewise-linear branch it took
// (ReLU signs, hinge activity). Coordinates whose +-h probes land on a
// different branch straddle a kink and are excluded from the comparison.
struct LossProbe {
  double value = 0.0;
  std::uint64_t branch = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, so exact zeros compare absolutely.
  double floor = 1e-7;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::size_t excluded = 0;
  double max_relative_error = 0.0;
  std::vector<std::size_t> failed;

  double pass_fraction() const { return checked ? static_cast<double>(passed) / static_cast<double>(checked) : 1.0; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central finite differences of `loss` with respect to params[i] for each i in
// `coordinates` (all coordinates when empty), compared against `analytic`.
// `loss` is called with params perturbed in place and must return either a
// double or a LossProbe.
template <typename Loss>
GradCheckReport check_gradient(std::span<double> params, std::span<const double> analytic, Loss&& loss,
                               std::span<const std::size_t> coordinates = {}, const GradCheckOptions& options = {}) {
  auto probe = [&]() -> LossProbe {
    if constexpr (std::is_same_v<std::invoke_result_t<Loss&>, LossProbe>) {
      return loss();
    } else {
      return LossProbe{static_cast<double>(loss()), 0};
    }
  };
  const std::uint64_t base_branch = probe().branch;
  GradCheckReport report;
  auto check_one = [&](std::size_t i) {
    const double saved = params[i];
    params[i] = saved + options.step;
    const LossProbe plus = probe();
    params[i] = saved - options.step;
    const LossProbe minus = probe();
    params[i] = saved;
    if (plus.branch != base_branch || minus.branch != base_branch) {
      ++report.excluded;
      return;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * options.step);
    const double err = relative_error(analytic[i], numeric, options.floor);
    ++report.checked;
    report.max_relative_error = std::max(report.max_relative_error, err);
    if (err < options.tolerance) {
      ++report.passed;
    } else {
      report.failed.push_back(i);
    }
  };
  if (coordinates.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) check_one(i);
  } else {
    for (std::size_t i : coordinates) check_one(i);
  }
  return report;
}

}  // namespace malign::nn
