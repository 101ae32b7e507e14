#pragma once

#include <functional>
#include <vector>

#include "polydiff/context.hpp"
#include "polydiff/frame.hpp"
#include "polydiff/rng.hpp"
#include "polydiff/schedule.hpp"

namespace polydiff {

// Diffusion with a constant per-slot drift q: each forward step draws noise
// centered on q instead of zero,
//   x_t = sqrt(alpha_t) x_{t-1} + sqrt(1 - alpha_t) (z_{t-1} + q),
// which accumulates into the closed form
//   x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) zbar_t + c_t q,  zbar_t ~ N(0, I).
// All operations are shape-generic over 3xN matrices.

FrameMatrix forward_step(const FrameMatrix& x_prev, const FrameMatrix& z, const FrameMatrix& q,
                         const DiffusionSchedule& s, int t);

FrameMatrix forward_closed(const FrameMatrix& x0, const FrameMatrix& zbar, const FrameMatrix& q,
                           const DiffusionSchedule& s, int t);

FrameMatrix marginal_mean(const FrameMatrix& x0, const FrameMatrix& q,
                          const DiffusionSchedule& s, int t);

double marginal_std(const DiffusionSchedule& s, int t);

// Per-step reverse drift q'_k = sqrt(1 - abar_k) / sqrt(1 - alpha_k) * q.
FrameMatrix reverse_drift(const FrameMatrix& q, const DiffusionSchedule& s, int k);

// One reverse step.  z_new is ignored at t = 1, where the chain is
// deterministic.  With z_hat = z_new = 0 this exactly inverts the zero-noise
// forward step.
FrameMatrix reverse_step(const FrameMatrix& x_t, const FrameMatrix& z_hat, const FrameMatrix& q,
                         const DiffusionSchedule& s, int t, const FrameMatrix& z_new);

// Drift that centers the forward endpoint mean on x_target when the clean
// frame is unknown (inference): q = x_target / c_T.
FrameMatrix drift_from_target(const FrameMatrix& x_target, const DiffusionSchedule& s);

// Drift for a known (clean, target) pair: q = (x_target - sqrt(abar_T) x0) / c_T,
// which makes the analytic endpoint mean equal x_target exactly.
FrameMatrix drift_from_pair(const FrameMatrix& x0, const FrameMatrix& x_target,
                            const DiffusionSchedule& s);

using DenoiserFn =
    std::function<FrameMatrix(const FrameMatrix& x, double t_scalar, const ContextVector& ctx)>;

// Full reverse chain from x_T with inference drift q = x_T / c_T.  Noise and
// denoiser output are masked to the live slots, so zero-padded slots stay
// exactly zero.  Deterministic given the seed.
FrameMatrix sample_chain(const DenoiserFn& denoiser, const FrameMatrix& x_top,
                         const ContextVector& ctx, const DiffusionSchedule& s, int live_count,
                         std::uint64_t seed);

struct CorruptedSample {
  FrameMatrix x_t;
  FrameMatrix z;  // target noise, zero on padded slots
  int t = 0;
};

// Draws t ~ U{1..T} and z ~ N(0, I) on live slots, forms x_t by the closed form.
CorruptedSample corrupt_for_training(const FrameMatrix& x0, const FrameMatrix& q, int live_count,
                                     const DiffusionSchedule& s, Rng& rng);

struct TrainingItem {
  FrameMatrix x0;
  FrameMatrix q;
  ContextVector context;
  int live_count = kFrameSlots;
};

// One optimization step: corrupts every item of the batch, then hands
// (inputs, time scalars, contexts, noise targets, masks) to the trainer,
// which owns the loss, gradients, and parameter update.  Returns the loss.
template <typename Trainer>
double training_step(Trainer& trainer, const std::vector<TrainingItem>& batch,
                     const DiffusionSchedule& s, Rng& rng, double lr) {
  std::vector<FrameMatrix> inputs, targets, masks;
  std::vector<double> t_scalars;
  std::vector<ContextVector> contexts;
  inputs.reserve(batch.size());
  targets.reserve(batch.size());
  masks.reserve(batch.size());
  t_scalars.reserve(batch.size());
  contexts.reserve(batch.size());
  for (const TrainingItem& item : batch) {
    CorruptedSample cs = corrupt_for_training(item.x0, item.q, item.live_count, s, rng);
    t_scalars.push_back(time_scalar(cs.t, s.steps));
    inputs.push_back(std::move(cs.x_t));
    targets.push_back(std::move(cs.z));
    FrameMatrix m = zero_frame();
    m.leftCols(item.live_count).setOnes();
    masks.push_back(std::move(m));
    contexts.push_back(item.context);
  }
  return trainer.train_batch(inputs, t_scalars, contexts, targets, masks, lr);
}

}  // namespace polydiff
