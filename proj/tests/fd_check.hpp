#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "polydiff/net_layers.hpp"
#include "polydiff/rng.hpp"

namespace polydiff {

// Central-difference validation of analytic parameter gradients.
//
// `loss(do_backward)` must run a fresh forward pass with the current
// parameter values, return the scalar loss, and when `do_backward` is set
// also accumulate gradients into the store.  For every tensor a random
// subset of entries is perturbed; returns the worst relative error, where
// the scale mixes absolute and relative so near-zero derivatives do not
// blow up the ratio.
struct FdResult {
  double worst = 0.0;
  std::string worst_tensor;
};

inline FdResult check_param_gradients(ParamStore<double>& store,
                                      const std::function<double(bool)>& loss, Rng& rng,
                                      int samples_per_tensor = 6, double h = 1e-5) {
  store.zero_grads();
  loss(true);
  std::vector<VecX<double>> grads;
  grads.reserve(static_cast<std::size_t>(store.count()));
  for (int i = 0; i < store.count(); ++i) grads.push_back(store.at(i).grad);

  FdResult res;
  for (int ti = 0; ti < store.count(); ++ti) {
    auto& tensor = store.at(ti);
    const int n = static_cast<int>(tensor.value.size());
    const int take = std::min(samples_per_tensor, n);
    for (int si = 0; si < take; ++si) {
      const int idx = (take == n) ? si : rng.uniform_int(0, n - 1);
      const double v0 = tensor.value[idx];
      tensor.value[idx] = v0 + h;
      const double lp = loss(false);
      tensor.value[idx] = v0 - h;
      const double lm = loss(false);
      tensor.value[idx] = v0;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = grads[static_cast<std::size_t>(ti)][idx];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
      if (rel > res.worst) {
        res.worst = rel;
        res.worst_tensor = tensor.name;
      }
    }
  }
  return res;
}

// Same treatment for gradients with respect to an input matrix.  `dx` must
// already hold the analytic input gradient for the unperturbed input.
inline double check_input_gradient(MatX<double>& x, const MatX<double>& dx,
                                   const std::function<double()>& loss, Rng& rng,
                                   int samples = 20, double h = 1e-5) {
  double worst = 0.0;
  const int n = static_cast<int>(x.size());
  for (int si = 0; si < std::min(samples, n); ++si) {
    const int idx = rng.uniform_int(0, n - 1);
    const double v0 = x.data()[idx];
    x.data()[idx] = v0 + h;
    const double lp = loss();
    x.data()[idx] = v0 - h;
    const double lm = loss();
    x.data()[idx] = v0;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = dx.data()[idx];
    worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3}));
  }
  return worst;
}

inline MatX<double> random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  MatX<double> m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

}  // namespace polydiff
