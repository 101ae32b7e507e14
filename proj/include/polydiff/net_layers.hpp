#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "polydiff/errors.hpp"
#include "polydiff/rng.hpp"

namespace polydiff {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Feature maps are stored pixel-major: an [H*W, C] matrix whose row p holds
// the channels of pixel p = y * W + x.  Convolutions then reduce to one GEMM
// against an im2col matrix, which is where training spends its time.

enum class InitKind { KaimingUniform, BiasUniform, One, Zero };

template <typename S>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  InitKind init = InitKind::Zero;
  int fan_in = 1;
  VecX<S> value;
  VecX<S> grad;

  int size() const {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
  }
};

template <typename S>
class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape, InitKind init, int fan_in) {
    ParamTensor<S> t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.init = init;
    t.fan_in = fan_in;
    t.value = VecX<S>::Zero(t.size());
    t.grad = VecX<S>::Zero(t.size());
    tensors_.push_back(std::move(t));
    return static_cast<int>(tensors_.size()) - 1;
  }

  ParamTensor<S>& at(int i) { return tensors_[static_cast<std::size_t>(i)]; }
  const ParamTensor<S>& at(int i) const { return tensors_[static_cast<std::size_t>(i)]; }
  int count() const { return static_cast<int>(tensors_.size()); }

  std::int64_t total_params() const {
    std::int64_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& t : tensors_) t.grad.setZero();
  }

  // Deterministic initialization: tensors are visited in registration order
  // and each draws a fixed number of values from the stream.
  void init_params(Rng& rng) {
    for (auto& t : tensors_) {
      switch (t.init) {
        case InitKind::KaimingUniform: {
          const double bound = std::sqrt(6.0 / static_cast<double>(t.fan_in));
          for (int i = 0; i < t.size(); ++i)
            t.value[i] = static_cast<S>(rng.uniform(-bound, bound));
          break;
        }
        case InitKind::BiasUniform: {
          const double bound = 1.0 / std::sqrt(static_cast<double>(t.fan_in));
          for (int i = 0; i < t.size(); ++i)
            t.value[i] = static_cast<S>(rng.uniform(-bound, bound));
          break;
        }
        case InitKind::One:
          t.value.setOnes();
          break;
        case InitKind::Zero:
          t.value.setZero();
          break;
      }
    }
  }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

 private:
  std::vector<ParamTensor<S>> tensors_;
};

template <typename S>
Eigen::Map<MatX<S>> as_matrix(ParamTensor<S>& t, int rows, int cols) {
  if (rows * cols != t.size()) throw StageError("parameter view shape mismatch: " + t.name);
  return Eigen::Map<MatX<S>>(t.value.data(), rows, cols);
}

template <typename S>
Eigen::Map<MatX<S>> grad_matrix(ParamTensor<S>& t, int rows, int cols) {
  if (rows * cols != t.size()) throw StageError("parameter view shape mismatch: " + t.name);
  return Eigen::Map<MatX<S>>(t.grad.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// 3x3 convolution, stride 1, zero padding 1.  Weight layout [9*Cin, Cout],
// kernel offsets ordered (dy, dx) row-major from (-1,-1) to (1,1).
template <typename S>
class Conv3x3 {
 public:
  Conv3x3() = default;
  Conv3x3(ParamStore<S>& store, const std::string& name, int cin, int cout)
      : store_(&store), cin_(cin), cout_(cout) {
    wi_ = store.add(name + ".weight", {9 * cin, cout}, InitKind::KaimingUniform, 9 * cin);
    bi_ = store.add(name + ".bias", {cout}, InitKind::BiasUniform, 9 * cin);
  }

  MatX<S> forward(const MatX<S>& x, int h, int w) {
    height_ = h;
    width_ = w;
    build_col(x);
    auto wm = as_matrix(store_->at(wi_), 9 * cin_, cout_);
    MatX<S> y = col_ * wm;
    y.rowwise() += store_->at(bi_).value.transpose();
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    auto wm = as_matrix(store_->at(wi_), 9 * cin_, cout_);
    grad_matrix(store_->at(wi_), 9 * cin_, cout_).noalias() += col_.transpose() * dy;
    store_->at(bi_).grad += dy.colwise().sum().transpose();
    const MatX<S> dcol = dy * wm.transpose();
    return scatter_col(dcol);
  }

 private:
  void build_col(const MatX<S>& x) {
    const int hw = height_ * width_;
    col_.resize(hw, 9 * cin_);
    col_.setZero();
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx = k % 3 - 1;
      const int y0 = std::max(0, -dy), y1 = height_ - std::max(0, dy);
      const int x0 = std::max(0, -dx), x1 = width_ - std::max(0, dx);
      const int run = x1 - x0;
      if (run <= 0) continue;
      const int shift = dy * width_ + dx;
      for (int y = y0; y < y1; ++y) {
        const int row = y * width_ + x0;
        col_.block(row, k * cin_, run, cin_) = x.block(row + shift, 0, run, cin_);
      }
    }
  }

  MatX<S> scatter_col(const MatX<S>& dcol) const {
    MatX<S> dx = MatX<S>::Zero(height_ * width_, cin_);
    for (int k = 0; k < 9; ++k) {
      const int dy = k / 3 - 1, dx_off = k % 3 - 1;
      const int y0 = std::max(0, -dy), y1 = height_ - std::max(0, dy);
      const int x0 = std::max(0, -dx_off), x1 = width_ - std::max(0, dx_off);
      const int run = x1 - x0;
      if (run <= 0) continue;
      const int shift = dy * width_ + dx_off;
      for (int y = y0; y < y1; ++y) {
        const int row = y * width_ + x0;
        dx.block(row + shift, 0, run, cin_) += dcol.block(row, k * cin_, run, cin_);
      }
    }
    return dx;
  }

  ParamStore<S>* store_ = nullptr;
  int cin_ = 0, cout_ = 0, height_ = 0, width_ = 0;
  int wi_ = -1, bi_ = -1;
  MatX<S> col_;
};

// ---------------------------------------------------------------------------
// 2x2 transposed convolution with stride 2 (exact x2 upsampling).  Weight
// layout [Cin, 4*Cout]: block k = (dy, dx) row-major maps an input pixel to
// output pixel (2y+dy, 2x+dx).
template <typename S>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(ParamStore<S>& store, const std::string& name, int cin, int cout)
      : store_(&store), cin_(cin), cout_(cout) {
    wi_ = store.add(name + ".weight", {cin, 4 * cout}, InitKind::KaimingUniform, 4 * cin);
    bi_ = store.add(name + ".bias", {cout}, InitKind::BiasUniform, 4 * cin);
  }

  MatX<S> forward(const MatX<S>& x, int h, int w) {
    height_ = h;
    width_ = w;
    x_cache_ = x;
    auto wm = as_matrix(store_->at(wi_), cin_, 4 * cout_);
    const MatX<S> p = x * wm;  // [HW, 4*Cout]
    const int wo = 2 * w;
    MatX<S> y(4 * h * w, cout_);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        const int in_row = yy * w + xx;
        for (int k = 0; k < 4; ++k) {
          const int out_row = (2 * yy + k / 2) * wo + (2 * xx + k % 2);
          y.row(out_row) = p.block(in_row, k * cout_, 1, cout_);
        }
      }
    y.rowwise() += store_->at(bi_).value.transpose();
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    const int wo = 2 * width_;
    MatX<S> dp(height_ * width_, 4 * cout_);
    for (int yy = 0; yy < height_; ++yy)
      for (int xx = 0; xx < width_; ++xx) {
        const int in_row = yy * width_ + xx;
        for (int k = 0; k < 4; ++k) {
          const int out_row = (2 * yy + k / 2) * wo + (2 * xx + k % 2);
          dp.block(in_row, k * cout_, 1, cout_) = dy.row(out_row);
        }
      }
    auto wm = as_matrix(store_->at(wi_), cin_, 4 * cout_);
    grad_matrix(store_->at(wi_), cin_, 4 * cout_).noalias() += x_cache_.transpose() * dp;
    store_->at(bi_).grad += dy.colwise().sum().transpose();
    return dp * wm.transpose();
  }

 private:
  ParamStore<S>* store_ = nullptr;
  int cin_ = 0, cout_ = 0, height_ = 0, width_ = 0;
  int wi_ = -1, bi_ = -1;
  MatX<S> x_cache_;
};

// ---------------------------------------------------------------------------
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore<S>& store, const std::string& name, int in, int out)
      : store_(&store), in_(in), out_(out) {
    wi_ = store.add(name + ".weight", {out, in}, InitKind::KaimingUniform, in);
    bi_ = store.add(name + ".bias", {out}, InitKind::BiasUniform, in);
  }

  VecX<S> forward(const VecX<S>& x) {
    x_cache_ = x;
    auto wm = as_matrix(store_->at(wi_), out_, in_);
    return wm * x + store_->at(bi_).value;
  }

  VecX<S> backward(const VecX<S>& dy) {
    auto wm = as_matrix(store_->at(wi_), out_, in_);
    grad_matrix(store_->at(wi_), out_, in_).noalias() += dy * x_cache_.transpose();
    store_->at(bi_).grad += dy;
    return wm.transpose() * dy;
  }

 private:
  ParamStore<S>* store_ = nullptr;
  int in_ = 0, out_ = 0;
  int wi_ = -1, bi_ = -1;
  VecX<S> x_cache_;
};

// ---------------------------------------------------------------------------
// Per-channel normalization over the spatial extent of one sample, with
// learned affine parameters and running statistics for eval mode.  Statistics
// are per sample (not across a batch), which keeps results independent of
// batch composition; running stats use the biased variance.
template <typename S>
class ChannelNorm {
 public:
  ChannelNorm() = default;
  ChannelNorm(ParamStore<S>& store, const std::string& name, int channels, double momentum = 0.1,
              double eps = 1e-5)
      : store_(&store), c_(channels), momentum_(static_cast<S>(momentum)), eps_(static_cast<S>(eps)) {
    gi_ = store.add(name + ".gamma", {channels}, InitKind::One, channels);
    bi_ = store.add(name + ".beta", {channels}, InitKind::Zero, channels);
    running_mean_ = VecX<S>::Zero(channels);
    running_var_ = VecX<S>::Ones(channels);
  }

  MatX<S> forward(const MatX<S>& x, bool training) {
    training_ = training;
    const auto n = static_cast<S>(x.rows());
    mean_.resize(c_);
    var_.resize(c_);
    inv_std_.resize(c_);
    xhat_.resize(x.rows(), c_);
    if (training) {
      for (int ch = 0; ch < c_; ++ch) {
        mean_[ch] = x.col(ch).mean();
        var_[ch] = (x.col(ch).array() - mean_[ch]).square().sum() / n;
      }
      running_mean_ = (S{1} - momentum_) * running_mean_ + momentum_ * mean_;
      running_var_ = (S{1} - momentum_) * running_var_ + momentum_ * var_;
    } else {
      mean_ = running_mean_;
      var_ = running_var_;
    }
    const VecX<S>& gamma = store_->at(gi_).value;
    const VecX<S>& beta = store_->at(bi_).value;
    MatX<S> y(x.rows(), c_);
    for (int ch = 0; ch < c_; ++ch) {
      inv_std_[ch] = S{1} / std::sqrt(var_[ch] + eps_);
      xhat_.col(ch) = (x.col(ch).array() - mean_[ch]) * inv_std_[ch];
      y.col(ch) = (gamma[ch] * xhat_.col(ch).array() + beta[ch]).matrix();
    }
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    const VecX<S>& gamma = store_->at(gi_).value;
    VecX<S>& dgamma = store_->at(gi_).grad;
    VecX<S>& dbeta = store_->at(bi_).grad;
    const auto n = static_cast<S>(dy.rows());
    MatX<S> dx(dy.rows(), c_);
    for (int ch = 0; ch < c_; ++ch) {
      dgamma[ch] += dy.col(ch).dot(xhat_.col(ch));
      dbeta[ch] += dy.col(ch).sum();
      if (!training_) {
        dx.col(ch) = dy.col(ch) * (gamma[ch] * inv_std_[ch]);
        continue;
      }
      const VecX<S> dxhat = dy.col(ch) * gamma[ch];
      const S mean_dxhat = dxhat.mean();
      const S mean_dxhat_xhat = dxhat.dot(xhat_.col(ch)) / n;
      dx.col(ch) =
          ((dxhat.array() - mean_dxhat - xhat_.col(ch).array() * mean_dxhat_xhat) * inv_std_[ch])
              .matrix();
    }
    return dx;
  }

  VecX<S>& running_mean() { return running_mean_; }
  VecX<S>& running_var() { return running_var_; }

 private:
  ParamStore<S>* store_ = nullptr;
  int c_ = 0;
  S momentum_ = S{0.1}, eps_ = S{1e-5};
  int gi_ = -1, bi_ = -1;
  bool training_ = true;
  VecX<S> mean_, var_, inv_std_;
  MatX<S> xhat_;
  VecX<S> running_mean_, running_var_;
};

// ---------------------------------------------------------------------------
// Exact (erf-based) GELU so that derivatives match the forward map to
// machine precision in the finite-difference suite.
template <typename S>
class Gelu {
 public:
  MatX<S> forward(const MatX<S>& x) {
    x_cache_ = x;
    return x.unaryExpr([](S v) { return gelu_value(v); });
  }

  MatX<S> backward(const MatX<S>& dy) {
    const MatX<S> d = x_cache_.unaryExpr([](S v) { return gelu_slope(v); });
    return dy.cwiseProduct(d);
  }

  static S gelu_value(S v) { return S{0.5} * v * (S{1} + std::erf(v * kInvSqrt2)); }
  static S gelu_slope(S v) {
    const S cdf = S{0.5} * (S{1} + std::erf(v * kInvSqrt2));
    const S pdf = std::exp(S{-0.5} * v * v) * kInvSqrt2Pi;
    return cdf + v * pdf;
  }

 private:
  static constexpr S kInvSqrt2 = static_cast<S>(0.7071067811865476);
  static constexpr S kInvSqrt2Pi = static_cast<S>(0.3989422804014327);
  MatX<S> x_cache_;
};

template <typename S>
class Relu {
 public:
  MatX<S> forward(const MatX<S>& x) {
    mask_ = x.unaryExpr([](S v) { return v > S{0} ? S{1} : S{0}; });
    return x.cwiseProduct(mask_);
  }
  MatX<S> backward(const MatX<S>& dy) { return dy.cwiseProduct(mask_); }

 private:
  MatX<S> mask_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2.  Ties pick the first element in window scan
// order (top-left, top-right, bottom-left, bottom-right).
template <typename S>
class MaxPool2 {
 public:
  MatX<S> forward(const MatX<S>& x, int h, int w) {
    height_ = h;
    width_ = w;
    const int c = static_cast<int>(x.cols());
    const int ho = h / 2, wo = w / 2;
    MatX<S> y(ho * wo, c);
    argmax_.resize(static_cast<std::size_t>(ho * wo) * static_cast<std::size_t>(c));
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx) {
        const int out_row = yy * wo + xx;
        const int r0 = (2 * yy) * w + 2 * xx;
        const int rows[4] = {r0, r0 + 1, r0 + w, r0 + w + 1};
        for (int ch = 0; ch < c; ++ch) {
          S best = x(rows[0], ch);
          int best_k = 0;
          for (int k = 1; k < 4; ++k) {
            const S v = x(rows[k], ch);
            if (v > best) {
              best = v;
              best_k = k;
            }
          }
          y(out_row, ch) = best;
          argmax_[static_cast<std::size_t>(out_row) * c + ch] = static_cast<std::uint8_t>(best_k);
        }
      }
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    const int c = static_cast<int>(dy.cols());
    const int ho = height_ / 2, wo = width_ / 2;
    MatX<S> dx = MatX<S>::Zero(height_ * width_, c);
    for (int yy = 0; yy < ho; ++yy)
      for (int xx = 0; xx < wo; ++xx) {
        const int out_row = yy * wo + xx;
        const int r0 = (2 * yy) * width_ + 2 * xx;
        const int rows[4] = {r0, r0 + 1, r0 + width_, r0 + width_ + 1};
        for (int ch = 0; ch < c; ++ch) {
          const int k = argmax_[static_cast<std::size_t>(out_row) * c + ch];
          dx(rows[k], ch) += dy(out_row, ch);
        }
      }
    return dx;
  }

 private:
  int height_ = 0, width_ = 0;
  std::vector<std::uint8_t> argmax_;
};

}  // namespace polydiff
