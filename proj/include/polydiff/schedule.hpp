#pragma once

#include <string>

#include <Eigen/Core>

namespace polydiff {

// Reverse-step noise scale: either sigma_t = sqrt(beta_t) (the sampling
// algorithm's choice, default) or the posterior variance
// sigma_t^2 = (1 - abar_{t-1}) / (1 - abar_t) * beta_t.
enum class SigmaVariant { AlgorithmTwo, PosteriorEq3 };

std::string to_string(SigmaVariant v);
SigmaVariant sigma_variant_from_string(const std::string& s);

// Linear beta schedule with every derived coefficient precomputed.
// Index convention: arrays run 0..T with index 0 the t=0 identity
// (alpha_bar[0] = 1, c[0] = 0); timesteps are 1-based.
struct DiffusionSchedule {
  int steps = 0;  // T
  double beta_first = 0.0;
  double beta_last = 0.0;
  SigmaVariant variant = SigmaVariant::AlgorithmTwo;

  Eigen::VectorXd beta;       // beta[t]
  Eigen::VectorXd alpha;      // 1 - beta[t]
  Eigen::VectorXd alpha_bar;  // prod_{i<=t} alpha[i]
  Eigen::VectorXd drift_sum;  // c_t = sqrt(alpha_t) c_{t-1} + sqrt(1 - alpha_t), c_0 = 0

  double sigma(int t) const;
  double c_total() const { return drift_sum[steps]; }

  // Throws ConfigError for T < 1, betas outside (0,1), or beta_first > beta_last.
  static DiffusionSchedule linear(int steps, double beta_first, double beta_last,
                                  SigmaVariant variant = SigmaVariant::AlgorithmTwo);
};

}  // namespace polydiff
