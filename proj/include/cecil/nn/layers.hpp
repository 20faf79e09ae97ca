#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cecil/nn/tensor.hpp"

namespace cecil::nn {

struct Param {
  std::string name;
  std::vector<float> value;
  std::vector<float> grad;

  explicit Param(std::string n, std::size_t size)
      : name(std::move(n)), value(size, 0.0f), grad(size, 0.0f) {}
};

// Pinned He-normal initializer: mt19937 + hand-rolled Box-Muller so the
// draw sequence is identical on every platform (std::normal_distribution is
// implementation-defined).
inline void he_normal_init(std::vector<float>& w, int fan_in, std::mt19937& gen) {
  const double stddev = std::sqrt(2.0 / double(fan_in));
  for (auto& x : w) {
    double u1 = (double(gen()) + 1.0) / 4294967296.0;
    double u2 = double(gen()) / 4294967296.0;
    x = float(stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2));
  }
}

// Layers hold the activations they need between forward and backward; a net
// instance is owned by exactly one training loop at a time.
class Layer {
public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
  virtual std::string describe() const = 0;
};

namespace detail {

inline void im2col(const float* x, int c, int h, int w, int k, int stride, int pad,
                   int oh, int ow, float* col) {
  // col is (c*k*k) x (oh*ow), row-major
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + std::size_t((ci * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            row[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(std::size_t(ci) * h + iy) * w + ix]
                                    : 0.0f;
          }
        }
      }
}

inline void col2im_add(const float* col, int c, int h, int w, int k, int stride,
                       int pad, int oh, int ow, float* dx) {
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + std::size_t((ci * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            dx[(std::size_t(ci) * h + iy) * w + ix] += row[oy * ow + ox];
          }
        }
      }
}

}  // namespace detail

class Conv2d : public Layer {
public:
  Conv2d(int cin, int cout, int k, int stride, int pad, std::mt19937& gen,
         std::string name)
      : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(pad),
        weight_(name + ".weight", std::size_t(cout) * cin * k * k) {
    he_normal_init(weight_.value, cin * k * k, gen);
  }

  Tensor forward(const Tensor& x, bool) override {
    x_ = x;
    int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
    int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
    Tensor y(x.n, cout_, oh, ow);
    std::vector<float> col(std::size_t(cin_) * k_ * k_ * oh * ow);
    ConstMatMap W(weight_.value.data(), cout_, cin_ * k_ * k_);
    for (int i = 0; i < x.n; ++i) {
      detail::im2col(x.sample(i), cin_, x.h, x.w, k_, stride_, pad_, oh, ow, col.data());
      ConstMatMap C(col.data(), cin_ * k_ * k_, oh * ow);
      MatMap Y(y.sample(i), cout_, oh * ow);
      Y.noalias() = W * C;
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    int oh = dy.h, ow = dy.w;
    Tensor dx(x_.n, cin_, x_.h, x_.w);
    std::vector<float> col(std::size_t(cin_) * k_ * k_ * oh * ow);
    std::vector<float> dcol(col.size());
    ConstMatMap W(weight_.value.data(), cout_, cin_ * k_ * k_);
    MatMap dW(weight_.grad.data(), cout_, cin_ * k_ * k_);
    for (int i = 0; i < dy.n; ++i) {
      detail::im2col(x_.sample(i), cin_, x_.h, x_.w, k_, stride_, pad_, oh, ow,
                     col.data());
      ConstMatMap C(col.data(), cin_ * k_ * k_, oh * ow);
      ConstMatMap dY(dy.sample(i), cout_, oh * ow);
      dW.noalias() += dY * C.transpose();
      MatMap dC(dcol.data(), cin_ * k_ * k_, oh * ow);
      dC.noalias() = W.transpose() * dY;
      detail::col2im_add(dcol.data(), cin_, x_.h, x_.w, k_, stride_, pad_, oh, ow,
                         dx.sample(i));
    }
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override { out.push_back(&weight_); }

  std::string describe() const override {
    return "conv" + std::to_string(k_) + "x" + std::to_string(k_) + "(" +
           std::to_string(cin_) + "->" + std::to_string(cout_) + ",s" +
           std::to_string(stride_) + ")";
  }

private:
  int cin_, cout_, k_, stride_, pad_;
  Param weight_;
  Tensor x_;
};

// Group normalization. Statistics are per sample, so evaluation needs no
// running averages and results do not depend on batch composition.
class GroupNorm : public Layer {
public:
  GroupNorm(int channels, int groups, std::string name)
      : c_(channels), g_(groups),
        gamma_(name + ".gamma", std::size_t(channels)),
        beta_(name + ".beta", std::size_t(channels)) {
    require(channels % groups == 0, "GroupNorm: channels not divisible by groups");
    std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0f);
  }

  Tensor forward(const Tensor& x, bool) override {
    xhat_ = x;
    invstd_.assign(std::size_t(x.n) * g_, 0.0f);
    const int cg = c_ / g_;
    const std::size_t hw = std::size_t(x.h) * x.w;
    const std::size_t m = std::size_t(cg) * hw;
    Tensor y(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i) {
      const float* xs = x.sample(i);
      float* xh = xhat_.sample(i);
      float* ys = y.sample(i);
      for (int gi = 0; gi < g_; ++gi) {
        const float* gx = xs + std::size_t(gi) * m;
        double mean = 0;
        for (std::size_t j = 0; j < m; ++j) mean += gx[j];
        mean /= double(m);
        double var = 0;
        for (std::size_t j = 0; j < m; ++j) {
          double d = gx[j] - mean;
          var += d * d;
        }
        var /= double(m);
        float inv = float(1.0 / std::sqrt(var + kEps));
        invstd_[std::size_t(i) * g_ + gi] = inv;
        float* gxh = xh + std::size_t(gi) * m;
        float* gy = ys + std::size_t(gi) * m;
        for (int cc = 0; cc < cg; ++cc) {
          int ch = gi * cg + cc;
          float gam = gamma_.value[std::size_t(ch)], bet = beta_.value[std::size_t(ch)];
          for (std::size_t j = 0; j < hw; ++j) {
            std::size_t off = std::size_t(cc) * hw + j;
            float v = (gx[off] - float(mean)) * inv;
            gxh[off] = v;
            gy[off] = gam * v + bet;
          }
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    const int cg = c_ / g_;
    const std::size_t hw = std::size_t(dy.h) * dy.w;
    const std::size_t m = std::size_t(cg) * hw;
    Tensor dx(dy.n, dy.c, dy.h, dy.w);
    for (int i = 0; i < dy.n; ++i) {
      const float* dys = dy.sample(i);
      const float* xh = xhat_.sample(i);
      float* dxs = dx.sample(i);
      for (int ch = 0; ch < c_; ++ch) {
        const float* dyc = dys + std::size_t(ch) * hw;
        const float* xhc = xh + std::size_t(ch) * hw;
        double dg = 0, db = 0;
        for (std::size_t j = 0; j < hw; ++j) {
          dg += double(dyc[j]) * xhc[j];
          db += dyc[j];
        }
        gamma_.grad[std::size_t(ch)] += float(dg);
        beta_.grad[std::size_t(ch)] += float(db);
      }
      for (int gi = 0; gi < g_; ++gi) {
        const float* gdy = dys + std::size_t(gi) * m;
        const float* gxh = xh + std::size_t(gi) * m;
        float* gdx = dxs + std::size_t(gi) * m;
        double sum_dxh = 0, sum_dxh_xh = 0;
        for (int cc = 0; cc < cg; ++cc) {
          float gam = gamma_.value[std::size_t(gi * cg + cc)];
          for (std::size_t j = 0; j < hw; ++j) {
            std::size_t off = std::size_t(cc) * hw + j;
            double dxh = double(gdy[off]) * gam;
            sum_dxh += dxh;
            sum_dxh_xh += dxh * gxh[off];
          }
        }
        float inv = invstd_[std::size_t(i) * g_ + gi];
        for (int cc = 0; cc < cg; ++cc) {
          float gam = gamma_.value[std::size_t(gi * cg + cc)];
          for (std::size_t j = 0; j < hw; ++j) {
            std::size_t off = std::size_t(cc) * hw + j;
            double dxh = double(gdy[off]) * gam;
            gdx[off] = float(inv * (dxh - sum_dxh / double(m) -
                                    double(gxh[off]) * sum_dxh_xh / double(m)));
          }
        }
      }
    }
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  std::string describe() const override {
    return "gn(" + std::to_string(c_) + ",g" + std::to_string(g_) + ")";
  }

private:
  static constexpr double kEps = 1e-5;
  int c_, g_;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<float> invstd_;
};

class ReLU : public Layer {
public:
  Tensor forward(const Tensor& x, bool) override {
    y_ = x;
    for (auto& v : y_.v) v = v > 0.0f ? v : 0.0f;
    return y_;
  }
  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      if (y_.v[i] <= 0.0f) dx.v[i] = 0.0f;
    return dx;
  }
  std::string describe() const override { return "relu"; }

private:
  Tensor y_;
};

class MaxPool2d : public Layer {
public:
  MaxPool2d(int k, int stride, int pad) : k_(k), stride_(stride), pad_(pad) {}

  Tensor forward(const Tensor& x, bool) override {
    in_shape_ = {x.n, x.c, x.h, x.w};
    int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
    int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
    Tensor y(x.n, x.c, oh, ow);
    argmax_.assign(y.size(), 0);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const float* px = x.sample(i) + std::size_t(c) * x.h * x.w;
        float* py = y.sample(i) + std::size_t(c) * oh * ow;
        std::size_t base = (std::size_t(i) * x.c + c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            float best = -std::numeric_limits<float>::infinity();
            int best_idx = -1;
            for (int ky = 0; ky < k_; ++ky) {
              int iy = oy * stride_ - pad_ + ky;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                int ix = ox * stride_ - pad_ + kx;
                if (ix < 0 || ix >= x.w) continue;
                float v = px[iy * x.w + ix];
                if (v > best) {
                  best = v;
                  best_idx = iy * x.w + ix;
                }
              }
            }
            py[oy * ow + ox] = best;
            argmax_[base + std::size_t(oy) * ow + ox] = best_idx;
          }
      }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    std::size_t hw_in = std::size_t(in_shape_[2]) * in_shape_[3];
    std::size_t hw_out = std::size_t(dy.h) * dy.w;
    for (int i = 0; i < dy.n; ++i)
      for (int c = 0; c < dy.c; ++c) {
        const float* pdy = dy.sample(i) + std::size_t(c) * hw_out;
        float* pdx = dx.sample(i) + std::size_t(c) * hw_in;
        std::size_t base = (std::size_t(i) * dy.c + c) * hw_out;
        for (std::size_t j = 0; j < hw_out; ++j)
          pdx[argmax_[base + j]] += pdy[j];
      }
    return dx;
  }

  std::string describe() const override {
    return "maxpool" + std::to_string(k_) + "s" + std::to_string(stride_);
  }

private:
  int k_, stride_, pad_;
  std::array<int, 4> in_shape_{};
  std::vector<int> argmax_;
};

class GlobalAvgPool : public Layer {
public:
  Tensor forward(const Tensor& x, bool) override {
    in_shape_ = {x.n, x.c, x.h, x.w};
    Tensor y(x.n, x.c, 1, 1);
    std::size_t hw = std::size_t(x.h) * x.w;
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const float* px = x.sample(i) + std::size_t(c) * hw;
        double acc = 0;
        for (std::size_t j = 0; j < hw; ++j) acc += px[j];
        y.sample(i)[c] = float(acc / double(hw));
      }
    return y;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    std::size_t hw = std::size_t(in_shape_[2]) * in_shape_[3];
    float scale = 1.0f / float(hw);
    for (int i = 0; i < dy.n; ++i)
      for (int c = 0; c < dy.c; ++c) {
        float g = dy.sample(i)[c] * scale;
        float* pdx = dx.sample(i) + std::size_t(c) * hw;
        for (std::size_t j = 0; j < hw; ++j) pdx[j] = g;
      }
    return dx;
  }

  std::string describe() const override { return "gap"; }

private:
  std::array<int, 4> in_shape_{};
};

// Pre-activation-free basic residual block:
//   y = relu( gn2(conv2(relu(gn1(conv1(x))))) + shortcut(x) )
// with a projection shortcut when the shape changes.
class ResidualBlock : public Layer {
public:
  ResidualBlock(int cin, int cout, int stride, int groups, std::mt19937& gen,
                const std::string& name)
      : conv1_(cin, cout, 3, stride, 1, gen, name + ".conv1"),
        gn1_(cout, groups, name + ".gn1"),
        conv2_(cout, cout, 3, 1, 1, gen, name + ".conv2"),
        gn2_(cout, groups, name + ".gn2") {
    if (cin != cout || stride != 1) {
      proj_conv_ = std::make_unique<Conv2d>(cin, cout, 1, stride, 0, gen, name + ".proj");
      proj_gn_ = std::make_unique<GroupNorm>(cout, groups, name + ".proj_gn");
    }
  }

  Tensor forward(const Tensor& x, bool train) override {
    Tensor main = gn1_.forward(conv1_.forward(x, train), train);
    main = relu1_.forward(main, train);
    main = gn2_.forward(conv2_.forward(main, train), train);
    Tensor skip = proj_conv_ ? proj_gn_->forward(proj_conv_->forward(x, train), train) : x;
    require(main.same_shape(skip), "residual branch shape mismatch");
    Tensor sum = main;
    for (std::size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += skip.v[i];
    return relu_out_.forward(sum, train);
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dsum = relu_out_.backward(dy);
    Tensor dmain = conv1_.backward(
        gn1_.backward(relu1_.backward(conv2_.backward(gn2_.backward(dsum)))));
    Tensor dskip = proj_conv_ ? proj_conv_->backward(proj_gn_->backward(dsum)) : dsum;
    Tensor dx = dmain;
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] += dskip.v[i];
    return dx;
  }

  void collect_params(std::vector<Param*>& out) override {
    conv1_.collect_params(out);
    gn1_.collect_params(out);
    conv2_.collect_params(out);
    gn2_.collect_params(out);
    if (proj_conv_) {
      proj_conv_->collect_params(out);
      proj_gn_->collect_params(out);
    }
  }

  std::string describe() const override {
    return "resblock(" + conv1_.describe() + ")";
  }

private:
  Conv2d conv1_;
  GroupNorm gn1_;
  ReLU relu1_;
  Conv2d conv2_;
  GroupNorm gn2_;
  ReLU relu_out_;
  std::unique_ptr<Conv2d> proj_conv_;
  std::unique_ptr<GroupNorm> proj_gn_;
};

}  // namespace cecil::nn
