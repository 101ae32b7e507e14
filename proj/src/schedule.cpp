#include "polydiff/schedule.hpp"

#include <cmath>

#include "polydiff/errors.hpp"

namespace polydiff {

std::string to_string(SigmaVariant v) {
  return v == SigmaVariant::AlgorithmTwo ? "algorithm2" : "posterior";
}

SigmaVariant sigma_variant_from_string(const std::string& s) {
  if (s == "algorithm2") return SigmaVariant::AlgorithmTwo;
  if (s == "posterior") return SigmaVariant::PosteriorEq3;
  throw ConfigError("unknown sigma variant '" + s + "' (expected 'algorithm2' or 'posterior')");
}

double DiffusionSchedule::sigma(int t) const {
  if (t < 1 || t > steps) throw StageError("sigma(t) outside 1..T");
  if (variant == SigmaVariant::AlgorithmTwo) return std::sqrt(beta[t]);
  return std::sqrt((1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t]);
}

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_first, double beta_last,
                                            SigmaVariant variant) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_first > 0.0 && beta_first < 1.0) || !(beta_last > 0.0 && beta_last < 1.0))
    throw ConfigError("beta bounds must lie in (0, 1)");
  if (beta_first > beta_last) throw ConfigError("beta_first must not exceed beta_last");

  DiffusionSchedule s;
  s.steps = steps;
  s.beta_first = beta_first;
  s.beta_last = beta_last;
  s.variant = variant;
  s.beta.resize(steps + 1);
  s.alpha.resize(steps + 1);
  s.alpha_bar.resize(steps + 1);
  s.drift_sum.resize(steps + 1);
  s.beta[0] = 0.0;
  s.alpha[0] = 1.0;
  s.alpha_bar[0] = 1.0;
  s.drift_sum[0] = 0.0;
  for (int t = 1; t <= steps; ++t) {
    s.beta[t] = steps == 1 ? beta_first
                           : beta_first + (beta_last - beta_first) *
                                              (static_cast<double>(t - 1) /
                                               static_cast<double>(steps - 1));
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    s.drift_sum[t] = std::sqrt(s.alpha[t]) * s.drift_sum[t - 1] + std::sqrt(1.0 - s.alpha[t]);
  }
  return s;
}

}  // namespace polydiff
