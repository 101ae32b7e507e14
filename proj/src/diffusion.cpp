#include "polydiff/diffusion.hpp"

#include <cmath>

#include "polydiff/errors.hpp"

namespace polydiff {

namespace {

void check_t(const DiffusionSchedule& s, int t) {
  if (t < 1 || t > s.steps) throw StageError("timestep outside 1..T");
}

}  // namespace

FrameMatrix forward_step(const FrameMatrix& x_prev, const FrameMatrix& z, const FrameMatrix& q,
                         const DiffusionSchedule& s, int t) {
  check_t(s, t);
  return std::sqrt(s.alpha[t]) * x_prev + std::sqrt(1.0 - s.alpha[t]) * (z + q);
}

FrameMatrix forward_closed(const FrameMatrix& x0, const FrameMatrix& zbar, const FrameMatrix& q,
                           const DiffusionSchedule& s, int t) {
  check_t(s, t);
  return std::sqrt(s.alpha_bar[t]) * x0 + std::sqrt(1.0 - s.alpha_bar[t]) * zbar +
         s.drift_sum[t] * q;
}

FrameMatrix marginal_mean(const FrameMatrix& x0, const FrameMatrix& q,
                          const DiffusionSchedule& s, int t) {
  check_t(s, t);
  return std::sqrt(s.alpha_bar[t]) * x0 + s.drift_sum[t] * q;
}

double marginal_std(const DiffusionSchedule& s, int t) {
  check_t(s, t);
  return std::sqrt(1.0 - s.alpha_bar[t]);
}

FrameMatrix reverse_drift(const FrameMatrix& q, const DiffusionSchedule& s, int k) {
  check_t(s, k);
  return (std::sqrt(1.0 - s.alpha_bar[k]) / std::sqrt(1.0 - s.alpha[k])) * q;
}

FrameMatrix reverse_step(const FrameMatrix& x_t, const FrameMatrix& z_hat, const FrameMatrix& q,
                         const DiffusionSchedule& s, int t, const FrameMatrix& z_new) {
  check_t(s, t);
  const FrameMatrix qp = reverse_drift(q, s, t);
  FrameMatrix mean =
      (x_t - (s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t])) * (z_hat + qp)) /
      std::sqrt(s.alpha[t]);
  if (t == 1) return mean;
  return mean + s.sigma(t) * z_new;
}

FrameMatrix drift_from_target(const FrameMatrix& x_target, const DiffusionSchedule& s) {
  return x_target / s.c_total();
}

FrameMatrix drift_from_pair(const FrameMatrix& x0, const FrameMatrix& x_target,
                            const DiffusionSchedule& s) {
  return (x_target - std::sqrt(s.alpha_bar[s.steps]) * x0) / s.c_total();
}

FrameMatrix sample_chain(const DenoiserFn& denoiser, const FrameMatrix& x_top,
                         const ContextVector& ctx, const DiffusionSchedule& s, int live_count,
                         std::uint64_t seed) {
  if (live_count < 1 || live_count > static_cast<int>(x_top.cols()))
    throw StageError("live count outside frame");
  Rng rng(seed);
  const FrameMatrix q = drift_from_target(x_top, s);
  FrameMatrix x = x_top;
  FrameMatrix z_new = FrameMatrix::Zero(3, x.cols());
  for (int t = s.steps; t >= 1; --t) {
    FrameMatrix z_hat = denoiser(x, time_scalar(t, s.steps), ctx);
    z_hat.rightCols(x.cols() - live_count).setZero();
    if (t > 1) {
      for (int i = 0; i < live_count; ++i) z_new.col(i) = rng.normal3();
    }
    x = reverse_step(x, z_hat, q, s, t, z_new);
  }
  return x;
}

CorruptedSample corrupt_for_training(const FrameMatrix& x0, const FrameMatrix& q, int live_count,
                                     const DiffusionSchedule& s, Rng& rng) {
  if (live_count < 1 || live_count > static_cast<int>(x0.cols()))
    throw StageError("live count outside frame");
  CorruptedSample cs;
  cs.t = rng.uniform_int(1, s.steps);
  cs.z = FrameMatrix::Zero(3, x0.cols());
  for (int i = 0; i < live_count; ++i) cs.z.col(i) = rng.normal3();
  cs.x_t = forward_closed(x0, cs.z, q, s, cs.t);
  return cs;
}

}  // namespace polydiff
