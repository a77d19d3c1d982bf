// SPDX-License-Identifier: Apache-2.0
#pragma once

// Numeric building blocks shared by the encoder and the ranking model. Every
// trainable op comes as a forward/backward pair; the backward functions
// accumulate into their gradient outputs.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "transact/tensor.hpp"

namespace transact {

/// Softmax over the positions with mask == 0. Excluded positions get exactly
/// zero. If every position is excluded the result is all zeros.
std::vector<double> softmax_masked(std::span<const double> logits, std::span<const std::uint8_t> mask);

/// In-place variant used on attention rows.
void softmax_masked_inplace(std::span<double> logits, std::span<const std::uint8_t> mask);

/// Given p = softmax_masked(l) and dL/dp, returns dL/dl. Excluded positions
/// (p == 0) receive zero gradient.
void softmax_backward(std::span<const double> p, std::span<const double> dp, std::span<double> dlogits);

struct LayerNormStats {
  double mean = 0.0;
  double rstd = 0.0;  // 1 / sqrt(var + eps), population variance
};

LayerNormStats layer_norm(std::span<const double> x, std::span<const double> gamma,
                          std::span<const double> beta, double eps, std::span<double> out);

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gamma,
                               std::span<const double> beta, double eps);

/// dx is overwritten; dgamma/dbeta accumulate.
void layer_norm_backward(std::span<const double> x, LayerNormStats stats, std::span<const double> gamma,
                         std::span<const double> dy, std::span<double> dx, std::span<double> dgamma,
                         std::span<double> dbeta);

/// Y = X * W + b for X [n, in], W [in, out], b [out]. Y is overwritten.
void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y);

/// Accumulates dW += X^T dY, db += colsum(dY); if dx is non-null, dx += dY W^T.
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor& dw, Tensor& db);

inline double sigmoid(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

struct GradReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tol_rel = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, rel_floor), so coordinates
  /// whose true gradient is below the floor are judged on absolute error.
  double rel_floor = 1e-3;
  /// Coordinates to test; empty means all of them.
  std::vector<std::size_t> indices;
};

/// Central-difference check of `analytic` against f at x. Throws
/// EvaluationError if f returns a non-finite value.
GradReport grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                      std::span<const double> analytic, const GradCheckOptions& opts = {});

}  // namespace transact
