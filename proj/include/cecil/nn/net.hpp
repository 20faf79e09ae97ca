#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "cecil/image.hpp"
#include "cecil/nn/layers.hpp"
#include "cecil/rng.hpp"

namespace cecil::nn {

// Pixel standardization used everywhere images enter a network.
inline constexpr float kPixelMean = 0.5f;
inline constexpr float kPixelStd = 0.25f;

inline Tensor images_to_tensor(const std::vector<const Image*>& batch) {
  require(!batch.empty(), "empty image batch");
  int h = batch[0]->height, w = batch[0]->width;
  Tensor t(static_cast<int>(batch.size()), 3, h, w);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Image& img = *batch[i];
    require(img.height == h && img.width == w,
            "all images in a batch must share dimensions");
    float* dst = t.sample(static_cast<int>(i));
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[(std::size_t(c) * h + y) * w + x] =
              (float(img.at(y, x, c)) / 255.0f - kPixelMean) / kPixelStd;
  }
  return t;
}

/// Convolutional feature extractor: images -> d-dim feature vectors.
class ConvNet {
public:
  ConvNet(std::string arch, std::vector<std::unique_ptr<Layer>> layers, int feature_dim)
      : arch_(std::move(arch)), layers_(std::move(layers)), feature_dim_(feature_dim) {}

  const std::string& arch() const { return arch_; }
  int feature_dim() const { return feature_dim_; }

  /// Forward to the pooled feature vector. Rows of the result are features.
  RowMat forward_features(const Tensor& images, bool train) {
    Tensor t = images;
    for (auto& l : layers_) t = l->forward(t, train);
    require(t.c == feature_dim_ && t.h == 1 && t.w == 1,
            "backbone did not end in a pooled feature vector");
    RowMat f(t.n, feature_dim_);
    std::memcpy(f.data(), t.v.data(), sizeof(float) * t.v.size());
    return f;
  }

  /// Backpropagates a gradient w.r.t. the feature matrix.
  void backward_from_features(const RowMat& dfeat) {
    Tensor dy(int(dfeat.rows()), feature_dim_, 1, 1);
    std::memcpy(dy.v.data(), dfeat.data(), sizeof(float) * dy.v.size());
    Tensor g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  void zero_grads() {
    for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
  }

private:
  std::string arch_;
  std::vector<std::unique_ptr<Layer>> layers_;
  int feature_dim_;
};

inline int groups_for(int channels) { return channels % 8 == 0 ? 8 : channels; }

// Backbone registry. Names:
//   micro           tiny two-conv net for fast tests
//   resnet-lite     small residual net for 32x32 inputs (optional -w<N> width
//                   suffix, default 16; feature dim = 4*width)
//   resnet18        standard 18-layer residual net for larger inputs
inline std::unique_ptr<ConvNet> make_backbone(const std::string& name,
                                              std::uint32_t init_seed) {
  std::mt19937 gen(mix_seed(init_seed, 0xBAC0B0E5u));
  std::vector<std::unique_ptr<Layer>> L;

  auto lite = [&](int w) {
    L.push_back(std::make_unique<Conv2d>(3, w, 3, 1, 1, gen, "stem"));
    L.push_back(std::make_unique<GroupNorm>(w, groups_for(w), "stem_gn"));
    L.push_back(std::make_unique<ReLU>());
    L.push_back(std::make_unique<ResidualBlock>(w, w, 1, groups_for(w), gen, "s1"));
    L.push_back(std::make_unique<ResidualBlock>(w, 2 * w, 2, groups_for(2 * w), gen, "s2"));
    L.push_back(std::make_unique<ResidualBlock>(2 * w, 4 * w, 2, groups_for(4 * w), gen, "s3"));
    L.push_back(std::make_unique<GlobalAvgPool>());
    return 4 * w;
  };

  int dim = 0;
  if (name == "micro") {
    L.push_back(std::make_unique<Conv2d>(3, 8, 3, 2, 1, gen, "c1"));
    L.push_back(std::make_unique<GroupNorm>(8, 8, "g1"));
    L.push_back(std::make_unique<ReLU>());
    L.push_back(std::make_unique<Conv2d>(8, 16, 3, 2, 1, gen, "c2"));
    L.push_back(std::make_unique<GroupNorm>(16, 8, "g2"));
    L.push_back(std::make_unique<ReLU>());
    L.push_back(std::make_unique<GlobalAvgPool>());
    dim = 16;
  } else if (name.rfind("resnet-lite", 0) == 0) {
    int w = 16;
    if (name.size() > 11) {
      require<ConfigError>(name.compare(11, 2, "-w") == 0,
                           "bad backbone name: " + name);
      w = std::stoi(name.substr(13));
      require<ConfigError>(w >= 4 && w % 4 == 0,
                           "resnet-lite width must be a positive multiple of 4");
    }
    dim = lite(w);
  } else if (name == "resnet18") {
    L.push_back(std::make_unique<Conv2d>(3, 64, 7, 2, 3, gen, "stem"));
    L.push_back(std::make_unique<GroupNorm>(64, 8, "stem_gn"));
    L.push_back(std::make_unique<ReLU>());
    L.push_back(std::make_unique<MaxPool2d>(3, 2, 1));
    int chans[4] = {64, 128, 256, 512};
    int cin = 64;
    for (int s = 0; s < 4; ++s) {
      int cout = chans[s];
      int stride = s == 0 ? 1 : 2;
      L.push_back(std::make_unique<ResidualBlock>(cin, cout, stride, 8, gen,
                                                  "s" + std::to_string(s) + "a"));
      L.push_back(std::make_unique<ResidualBlock>(cout, cout, 1, 8, gen,
                                                  "s" + std::to_string(s) + "b"));
      cin = cout;
    }
    L.push_back(std::make_unique<GlobalAvgPool>());
    dim = 512;
  } else {
    throw ConfigError("unknown backbone: " + name);
  }
  return std::make_unique<ConvNet>(name, std::move(L), dim);
}

inline std::unique_ptr<ConvNet> clone_net(ConvNet& src) {
  auto dst = make_backbone(src.arch(), 0);
  auto sp = src.params();
  auto dp = dst->params();
  require(sp.size() == dp.size(), "clone: parameter count mismatch");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    require(sp[i]->value.size() == dp[i]->value.size(), "clone: parameter size mismatch");
    dp[i]->value = sp[i]->value;
  }
  return dst;
}

}  // namespace cecil::nn
