#pragma once

#include <vector>

#include "polydiff/denoiser_net.hpp"
#include "polydiff/diffusion.hpp"
#include "polydiff/optimizer.hpp"

namespace polydiff {

// Owns loss and parameter updates for the denoiser.  The loss is mean squared
// error over live slots only: sum(mask * (pred - target)^2) / sum(mask), with
// the mask counting three channels per live slot.  Items are processed in
// batch order and gradients accumulate in index order, so a run is
// reproducible regardless of machine.
template <typename S>
class DenoiserTrainer {
 public:
  DenoiserTrainer(CondUnet<S>& net, Adam<S>& opt) : net_(&net), opt_(&opt) {}

  double train_batch(const std::vector<FrameMatrix>& inputs, const std::vector<double>& t_scalars,
                     const std::vector<ContextVector>& contexts,
                     const std::vector<FrameMatrix>& targets, const std::vector<FrameMatrix>& masks,
                     double lr) {
    net_->set_training(true);
    net_->params().zero_grads();
    double denom = 0.0;
    for (const FrameMatrix& m : masks) denom += m.sum();
    double num = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const MatX<S> x = frame_to_features<S>(inputs[i]);
      const MatX<S> y = net_->forward(x, static_cast<S>(t_scalars[i]),
                                      VecX<S>(contexts[i].cast<S>()));
      const MatX<S> mask = frame_to_features<S>(masks[i]);
      const MatX<S> diff =
          ((y - frame_to_features<S>(targets[i])).array() * mask.array()).matrix();
      num += static_cast<double>(diff.squaredNorm());
      net_->backward(diff * static_cast<S>(2.0 / denom));
    }
    opt_->step(net_->params(), lr);
    return num / denom;
  }

  // Loss of the current parameters on a batch, without touching them.
  double eval_batch(const std::vector<FrameMatrix>& inputs, const std::vector<double>& t_scalars,
                    const std::vector<ContextVector>& contexts,
                    const std::vector<FrameMatrix>& targets,
                    const std::vector<FrameMatrix>& masks) {
    const bool was_training = net_->training();
    net_->set_training(false);
    double denom = 0.0, num = 0.0;
    for (const FrameMatrix& m : masks) denom += m.sum();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const MatX<S> y = net_->forward(frame_to_features<S>(inputs[i]),
                                      static_cast<S>(t_scalars[i]),
                                      VecX<S>(contexts[i].cast<S>()));
      const MatX<S> mask = frame_to_features<S>(masks[i]);
      num += static_cast<double>(
          ((y - frame_to_features<S>(targets[i])).array() * mask.array()).matrix().squaredNorm());
    }
    net_->set_training(was_training);
    return num / denom;
  }

 private:
  CondUnet<S>* net_;
  Adam<S>* opt_;
};

// Wraps an evaluation-mode network as the reverse-chain denoiser callback.
// The network reference must outlive the returned function.
inline DenoiserFn make_denoiser(CondUnet<float>& net) {
  net.set_training(false);
  return [&net](const FrameMatrix& x, double t_scalar, const ContextVector& ctx) {
    const MatX<float> y =
        net.forward(frame_to_features<float>(x), static_cast<float>(t_scalar),
                    VecX<float>(ctx.cast<float>()));
    return features_to_frame(y);
  };
}

}  // namespace polydiff
