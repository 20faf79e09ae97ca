#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "cecil/common.hpp"

namespace cecil::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Dense NCHW float tensor.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(std::size_t(n_) * c_ * h_ * w_, 0.0f) {}

  std::size_t sample_size() const { return std::size_t(c) * h * w; }
  std::size_t size() const { return v.size(); }

  float* sample(int i) { return v.data() + std::size_t(i) * sample_size(); }
  const float* sample(int i) const { return v.data() + std::size_t(i) * sample_size(); }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

}  // namespace cecil::nn
