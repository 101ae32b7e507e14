#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "polydiff/context.hpp"
#include "polydiff/frame.hpp"
#include "polydiff/net_layers.hpp"

namespace polydiff {

// Conditioned U-Net that predicts per-slot noise for a 3-channel 32x32 frame.
//
//   input [1024, 3]
//     init:  residual conv block 3 -> W                      (32x32)
//     down1: RB W -> 2W, RB 2W -> 2W, maxpool                (16x16)
//     down2: RB 2W -> 2W, RB 2W -> 2W, maxpool               (8x8)
//     up0:   conv 2W -> 2W, norm, ReLU                       (8x8)
//     fuse:  ctx_embed1 * h + time_embed1                    (channel-wise)
//     up1:   concat skip d2 | transposed conv 4W -> 2W | ReLU | RB | RB  (16x16)
//     fuse:  ctx_embed2 * h + time_embed2
//     up2:   concat skip d1 | transposed conv 4W -> W | ReLU | RB | RB   (32x32)
//     out:   concat skip r0 | conv 2W -> W | norm | ReLU | conv W -> 3
//
// Embeddings are two-layer fully connected stacks with GELU (1 -> 2W for the
// timestep scalar, 29 -> 2W for the context bits).  The default width W = 64
// gives the 64/128 channel progression.
struct NetConfig {
  int base_width = 64;
  int in_channels = 3;
  int context_dim = kContextBits;
  int side = kFrameSide;

  bool operator==(const NetConfig&) const = default;
};

// Residual block: two (conv, norm, GELU) stages; the residual path takes the
// block input when channel counts match, otherwise the first stage output,
// and the sum is scaled by 1/sqrt(2).
template <typename S>
class ResidualConvBlock {
 public:
  ResidualConvBlock() = default;
  ResidualConvBlock(ParamStore<S>& store, const std::string& name, int cin, int cout)
      : conv1_(store, name + ".conv1", cin, cout),
        conv2_(store, name + ".conv2", cout, cout),
        norm1_(store, name + ".norm1", cout),
        norm2_(store, name + ".norm2", cout),
        same_(cin == cout) {}

  MatX<S> forward(const MatX<S>& x, int h, int w, bool training) {
    y1_ = gelu1_.forward(norm1_.forward(conv1_.forward(x, h, w), training));
    const MatX<S> y2 = gelu2_.forward(norm2_.forward(conv2_.forward(y1_, h, w), training));
    if (same_) x_cache_ = x;
    const MatX<S>& skip = same_ ? x_cache_ : y1_;
    return (skip + y2) * kInvSqrt2;
  }

  MatX<S> backward(const MatX<S>& dout) {
    const MatX<S> d = dout * kInvSqrt2;
    MatX<S> dy1 = conv2_.backward(norm2_.backward(gelu2_.backward(d)));
    if (!same_) dy1 += d;
    MatX<S> dx = conv1_.backward(norm1_.backward(gelu1_.backward(dy1)));
    if (same_) dx += d;
    return dx;
  }

  ChannelNorm<S>& norm1() { return norm1_; }
  ChannelNorm<S>& norm2() { return norm2_; }

 private:
  static constexpr S kInvSqrt2 = static_cast<S>(0.7071067811865476);
  Conv3x3<S> conv1_, conv2_;
  ChannelNorm<S> norm1_, norm2_;
  Gelu<S> gelu1_, gelu2_;
  bool same_ = false;
  MatX<S> y1_, x_cache_;
};

// Two-layer fully connected embedding with GELU between the layers.
template <typename S>
class EmbedFC {
 public:
  EmbedFC() = default;
  EmbedFC(ParamStore<S>& store, const std::string& name, int in, int out)
      : fc1_(store, name + ".fc1", in, out), fc2_(store, name + ".fc2", out, out) {}

  VecX<S> forward(const VecX<S>& x) {
    const MatX<S> h = gelu_.forward(fc1_.forward(x));
    return fc2_.forward(VecX<S>(h));
  }

  void backward(const VecX<S>& dy) {
    const MatX<S> dh = gelu_.backward(fc2_.backward(dy));
    fc1_.backward(VecX<S>(dh));
  }

 private:
  Linear<S> fc1_, fc2_;
  Gelu<S> gelu_;
};

template <typename S>
class DownStage {
 public:
  DownStage() = default;
  DownStage(ParamStore<S>& store, const std::string& name, int cin, int cout)
      : rb1_(store, name + ".rb1", cin, cout), rb2_(store, name + ".rb2", cout, cout) {}

  MatX<S> forward(const MatX<S>& x, int h, int w, bool training) {
    h_ = h;
    w_ = w;
    const MatX<S> a = rb1_.forward(x, h, w, training);
    const MatX<S> b = rb2_.forward(a, h, w, training);
    return pool_.forward(b, h, w);
  }

  MatX<S> backward(const MatX<S>& dy) {
    return rb1_.backward(rb2_.backward(pool_.backward(dy)));
  }

  ResidualConvBlock<S>& rb1() { return rb1_; }
  ResidualConvBlock<S>& rb2() { return rb2_; }

 private:
  ResidualConvBlock<S> rb1_, rb2_;
  MaxPool2<S> pool_;
  int h_ = 0, w_ = 0;
};

template <typename S>
class UpStage {
 public:
  UpStage() = default;
  UpStage(ParamStore<S>& store, const std::string& name, int cin, int cout)
      : convt_(store, name + ".convt", cin, cout),
        rb1_(store, name + ".rb1", cout, cout),
        rb2_(store, name + ".rb2", cout, cout) {}

  // x is [h*w, cin]; output is [(2h)*(2w), cout].
  MatX<S> forward(const MatX<S>& x, int h, int w, bool training) {
    const MatX<S> a = relu_.forward(convt_.forward(x, h, w));
    const MatX<S> b = rb1_.forward(a, 2 * h, 2 * w, training);
    return rb2_.forward(b, 2 * h, 2 * w, training);
  }

  MatX<S> backward(const MatX<S>& dy) {
    return convt_.backward(relu_.backward(rb1_.backward(rb2_.backward(dy))));
  }

  ResidualConvBlock<S>& rb1() { return rb1_; }
  ResidualConvBlock<S>& rb2() { return rb2_; }

 private:
  ConvTranspose2x2<S> convt_;
  Relu<S> relu_;
  ResidualConvBlock<S> rb1_, rb2_;
};

template <typename S>
class CondUnet {
 public:
  explicit CondUnet(const NetConfig& cfg, std::uint64_t init_seed = 0) : cfg_(cfg) {
    const int w = cfg.base_width;
    init_ = ResidualConvBlock<S>(store_, "init", cfg.in_channels, w);
    down1_ = DownStage<S>(store_, "down1", w, 2 * w);
    down2_ = DownStage<S>(store_, "down2", 2 * w, 2 * w);
    up0_conv_ = Conv3x3<S>(store_, "up0.conv", 2 * w, 2 * w);
    up0_norm_ = ChannelNorm<S>(store_, "up0.norm", 2 * w);
    time1_ = EmbedFC<S>(store_, "time_embed1", 1, 2 * w);
    ctx1_ = EmbedFC<S>(store_, "ctx_embed1", cfg.context_dim, 2 * w);
    time2_ = EmbedFC<S>(store_, "time_embed2", 1, 2 * w);
    ctx2_ = EmbedFC<S>(store_, "ctx_embed2", cfg.context_dim, 2 * w);
    up1_ = UpStage<S>(store_, "up1", 4 * w, 2 * w);
    up2_ = UpStage<S>(store_, "up2", 4 * w, w);
    out_conv1_ = Conv3x3<S>(store_, "out.conv1", 2 * w, w);
    out_norm_ = ChannelNorm<S>(store_, "out.norm", w);
    out_conv2_ = Conv3x3<S>(store_, "out.conv2", w, cfg.in_channels);
    Rng rng(init_seed);
    store_.init_params(rng);
  }

  const NetConfig& config() const { return cfg_; }
  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  // x: [side*side, in_channels] pixel-major feature map.
  MatX<S> forward(const MatX<S>& x, S t_scalar, const VecX<S>& ctx) {
    const int side = cfg_.side;
    const int half = side / 2, quarter = side / 4;
    const int w = cfg_.base_width;

    r0_ = init_.forward(x, side, side, training_);
    d1_ = down1_.forward(r0_, side, side, training_);
    d2_ = down2_.forward(d1_, half, half, training_);

    u0_ = relu0_.forward(up0_norm_.forward(up0_conv_.forward(d2_, quarter, quarter), training_));

    VecX<S> t_in(1);
    t_in[0] = t_scalar;
    temb1_ = time1_.forward(t_in);
    cemb1_ = ctx1_.forward(ctx);
    temb2_ = time2_.forward(t_in);
    cemb2_ = ctx2_.forward(ctx);

    // Channel-wise conditioning: scale by the context embedding, shift by the
    // timestep embedding.
    f1_ = u0_;
    for (int ch = 0; ch < 2 * w; ++ch)
      f1_.col(ch) = (u0_.col(ch).array() * cemb1_[ch] + temb1_[ch]).matrix();

    MatX<S> cat1(quarter * quarter, 4 * w);
    cat1 << f1_, d2_;
    u1_ = up1_.forward(cat1, quarter, quarter, training_);

    f2_ = u1_;
    for (int ch = 0; ch < 2 * w; ++ch)
      f2_.col(ch) = (u1_.col(ch).array() * cemb2_[ch] + temb2_[ch]).matrix();

    MatX<S> cat2(half * half, 4 * w);
    cat2 << f2_, d1_;
    u2_ = up2_.forward(cat2, half, half, training_);

    MatX<S> cat3(side * side, 2 * w);
    cat3 << u2_, r0_;
    const MatX<S> o1 =
        out_relu_.forward(out_norm_.forward(out_conv1_.forward(cat3, side, side), training_));
    return out_conv2_.forward(o1, side, side);
  }

  // Accumulates parameter gradients and returns the input gradient.
  MatX<S> backward(const MatX<S>& dout) {
    const int w = cfg_.base_width;

    const MatX<S> do1 = out_conv2_.backward(dout);
    const MatX<S> dcat3 = out_conv1_.backward(out_norm_.backward(out_relu_.backward(do1)));
    MatX<S> du2 = dcat3.leftCols(w);
    MatX<S> dr0 = dcat3.rightCols(w);

    const MatX<S> dcat2 = up2_.backward(du2);
    MatX<S> df2 = dcat2.leftCols(2 * w);
    MatX<S> dd1 = dcat2.rightCols(2 * w);

    // Fusion backward: d_u1 = df2 * cemb2 (channel-wise), plus embedding grads.
    VecX<S> dcemb2 = VecX<S>::Zero(2 * w), dtemb2 = VecX<S>::Zero(2 * w);
    MatX<S> du1(u1_.rows(), 2 * w);
    for (int ch = 0; ch < 2 * w; ++ch) {
      dcemb2[ch] = df2.col(ch).dot(u1_.col(ch));
      dtemb2[ch] = df2.col(ch).sum();
      du1.col(ch) = df2.col(ch) * cemb2_[ch];
    }

    const MatX<S> dcat1 = up1_.backward(du1);
    MatX<S> df1 = dcat1.leftCols(2 * w);
    MatX<S> dd2 = dcat1.rightCols(2 * w);

    VecX<S> dcemb1 = VecX<S>::Zero(2 * w), dtemb1 = VecX<S>::Zero(2 * w);
    MatX<S> du0(u0_.rows(), 2 * w);
    for (int ch = 0; ch < 2 * w; ++ch) {
      dcemb1[ch] = df1.col(ch).dot(u0_.col(ch));
      dtemb1[ch] = df1.col(ch).sum();
      du0.col(ch) = df1.col(ch) * cemb1_[ch];
    }

    ctx2_.backward(dcemb2);
    time2_.backward(dtemb2);
    ctx1_.backward(dcemb1);
    time1_.backward(dtemb1);

    dd2 += up0_conv_.backward(up0_norm_.backward(relu0_.backward(du0)));
    dd1 += down2_.backward(dd2);
    dr0 += down1_.backward(dd1);
    return init_.backward(dr0);
  }

  // Non-trainable buffers (normalization running statistics) in fixed order.
  std::vector<std::pair<std::string, VecX<S>*>> buffers() {
    std::vector<std::pair<std::string, VecX<S>*>> out;
    const auto add = [&out](const std::string& name, ChannelNorm<S>& n) {
      out.emplace_back(name + ".running_mean", &n.running_mean());
      out.emplace_back(name + ".running_var", &n.running_var());
    };
    add("init.norm1", init_.norm1());
    add("init.norm2", init_.norm2());
    add("down1.rb1.norm1", down1_rb1().norm1());
    add("down1.rb1.norm2", down1_rb1().norm2());
    add("down1.rb2.norm1", down1_rb2().norm1());
    add("down1.rb2.norm2", down1_rb2().norm2());
    add("down2.rb1.norm1", down2_rb1().norm1());
    add("down2.rb1.norm2", down2_rb1().norm2());
    add("down2.rb2.norm1", down2_rb2().norm1());
    add("down2.rb2.norm2", down2_rb2().norm2());
    add("up0.norm", up0_norm_);
    add("up1.rb1.norm1", up1_rb1().norm1());
    add("up1.rb1.norm2", up1_rb1().norm2());
    add("up1.rb2.norm1", up1_rb2().norm1());
    add("up1.rb2.norm2", up1_rb2().norm2());
    add("up2.rb1.norm1", up2_rb1().norm1());
    add("up2.rb1.norm2", up2_rb1().norm2());
    add("up2.rb2.norm1", up2_rb2().norm1());
    add("up2.rb2.norm2", up2_rb2().norm2());
    add("out.norm", out_norm_);
    return out;
  }

 private:
  ResidualConvBlock<S>& down1_rb1() { return down1_.rb1(); }
  ResidualConvBlock<S>& down1_rb2() { return down1_.rb2(); }
  ResidualConvBlock<S>& down2_rb1() { return down2_.rb1(); }
  ResidualConvBlock<S>& down2_rb2() { return down2_.rb2(); }
  ResidualConvBlock<S>& up1_rb1() { return up1_.rb1(); }
  ResidualConvBlock<S>& up1_rb2() { return up1_.rb2(); }
  ResidualConvBlock<S>& up2_rb1() { return up2_.rb1(); }
  ResidualConvBlock<S>& up2_rb2() { return up2_.rb2(); }

  NetConfig cfg_;
  ParamStore<S> store_;
  bool training_ = true;

  ResidualConvBlock<S> init_;
  DownStage<S> down1_, down2_;
  Conv3x3<S> up0_conv_;
  ChannelNorm<S> up0_norm_;
  Relu<S> relu0_;
  EmbedFC<S> time1_, ctx1_, time2_, ctx2_;
  UpStage<S> up1_, up2_;
  Conv3x3<S> out_conv1_;
  ChannelNorm<S> out_norm_;
  Relu<S> out_relu_;
  Conv3x3<S> out_conv2_;

  MatX<S> r0_, d1_, d2_, u0_, u1_, u2_, f1_, f2_;
  VecX<S> temb1_, cemb1_, temb2_, cemb2_;
};

// Frame (3 x 1024, double) <-> feature map ([1024, 3], scalar S).
template <typename S>
MatX<S> frame_to_features(const FrameMatrix& f) {
  return f.transpose().template cast<S>();
}

template <typename S>
FrameMatrix features_to_frame(const MatX<S>& m) {
  return m.transpose().template cast<double>();
}

}  // namespace polydiff
