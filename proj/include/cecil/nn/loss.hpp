#pragma once

#include <cmath>
#include <vector>

#include "cecil/nn/tensor.hpp"

namespace cecil::nn {

/// Row-wise softmax at temperature T.
inline RowMat softmax_rows(const RowMat& logits, double temperature = 1.0) {
  RowMat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = -1e30;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      mx = std::max(mx, double(logits(i, j)) / temperature);
    double z = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      double e = std::exp(double(logits(i, j)) / temperature - mx);
      p(i, j) = float(e);
      z += e;
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) p(i, j) = float(p(i, j) / z);
  }
  return p;
}

struct LossGrad {
  double loss = 0;
  RowMat dlogits;  // d(loss)/d(logits), already averaged over the batch
};

inline LossGrad softmax_cross_entropy(const RowMat& logits,
                                      const std::vector<int>& labels) {
  const auto n = logits.rows();
  LossGrad out;
  out.dlogits = softmax_rows(logits);
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = std::max(double(out.dlogits(i, labels[std::size_t(i)])), 1e-12);
    loss -= std::log(p);
    out.dlogits(i, labels[std::size_t(i)]) -= 1.0f;
  }
  out.dlogits *= 1.0f / float(n);
  out.loss = loss / double(n);
  return out;
}

// Distillation cross-entropy between teacher and student logits at
// temperature T, over the first `old_classes` outputs of the student. The
// returned gradient lives in the student's full logit width; the caller
// applies its own loss weight (conventionally scaled by T^2).
inline LossGrad distillation_loss(const RowMat& teacher_logits,
                                  const RowMat& student_logits, int old_classes,
                                  double temperature) {
  const auto n = student_logits.rows();
  RowMat p = softmax_rows(teacher_logits.leftCols(old_classes), temperature);
  RowMat q = softmax_rows(student_logits.leftCols(old_classes), temperature);
  LossGrad out;
  out.dlogits = RowMat::Zero(n, student_logits.cols());
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < old_classes; ++j) {
      loss -= double(p(i, j)) * std::log(std::max(double(q(i, j)), 1e-12));
      out.dlogits(i, j) = (q(i, j) - p(i, j)) / float(double(n) * temperature);
    }
  out.loss = loss / double(n);
  return out;
}

}  // namespace cecil::nn
