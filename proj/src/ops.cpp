// SPDX-License-Identifier: Apache-2.0
#include "transact/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "transact/errors.hpp"
#include "transact/kernels.hpp"

namespace transact {

void softmax_masked_inplace(std::span<double> logits, std::span<const std::uint8_t> mask) {
  if (logits.size() != mask.size()) {
    throw ContractError("softmax_masked: " + std::to_string(logits.size()) + " logits vs " +
                        std::to_string(mask.size()) + " mask entries");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) mx = std::max(mx, logits[i]);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    std::fill(logits.begin(), logits.end(), 0.0);
    return;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) {
      logits[i] = 0.0;
    } else {
      logits[i] = std::exp(logits[i] - mx);
      sum += logits[i];
    }
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] *= inv;
}

std::vector<double> softmax_masked(std::span<const double> logits, std::span<const std::uint8_t> mask) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_masked_inplace(out, mask);
  return out;
}

void softmax_backward(std::span<const double> p, std::span<const double> dp, std::span<double> dlogits) {
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * dp[i];
  for (std::size_t i = 0; i < p.size(); ++i) dlogits[i] = p[i] * (dp[i] - inner);
}

LayerNormStats layer_norm(std::span<const double> x, std::span<const double> gamma,
                          std::span<const double> beta, double eps, std::span<double> out) {
  const std::size_t n = x.size();
  if (gamma.size() != n || beta.size() != n || out.size() != n) {
    throw ContractError("layer_norm: length mismatch");
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double rstd = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = gamma[i] * (x[i] - mean) * rstd + beta[i];
  return {mean, rstd};
}

std::vector<double> layer_norm(std::span<const double> x, std::span<const double> gamma,
                               std::span<const double> beta, double eps) {
  std::vector<double> out(x.size());
  layer_norm(x, gamma, beta, eps, out);
  return out;
}

void layer_norm_backward(std::span<const double> x, LayerNormStats stats, std::span<const double> gamma,
                         std::span<const double> dy, std::span<double> dx, std::span<double> dgamma,
                         std::span<double> dbeta) {
  const std::size_t n = x.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  // xhat_i = (x_i - mean) * rstd; g_i = dy_i * gamma_i
  // dx_i = rstd * (g_i - mean(g) - xhat_i * mean(g * xhat))
  double sum_g = 0.0;
  double sum_gx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xhat = (x[i] - stats.mean) * stats.rstd;
    const double g = dy[i] * gamma[i];
    sum_g += g;
    sum_gx += g * xhat;
    dgamma[i] += dy[i] * xhat;
    dbeta[i] += dy[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double xhat = (x[i] - stats.mean) * stats.rstd;
    const double g = dy[i] * gamma[i];
    dx[i] = stats.rstd * (g - sum_g * inv_n - xhat * sum_gx * inv_n);
  }
}

void linear_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor& y) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  if (w.rows() != in || b.size() != out) {
    throw ContractError("linear: input width " + std::to_string(in) + " vs weight [" +
                        std::to_string(w.rows()) + "," + std::to_string(out) + "] bias " +
                        std::to_string(b.size()));
  }
  if (y.rows() != n || y.cols() != out) y = Tensor({n, out});
  for (std::size_t r = 0; r < n; ++r) std::copy(b.data(), b.data() + out, y.data() + r * out);
  kernels::active().gemm_nn(n, out, in, x.data(), in, w.data(), out, y.data(), out);
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor& dw, Tensor& db) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  const auto& k = kernels::active();
  k.gemm_tn(in, out, n, x.data(), in, dy.data(), out, dw.data(), out);
  for (std::size_t r = 0; r < n; ++r) k.axpy(1.0, dy.data() + r * out, db.data(), out);
  if (dx) k.gemm_nt(n, in, out, dy.data(), out, w.data(), out, dx->data(), in);
}

GradReport grad_check(const std::function<double(std::span<const double>)>& f, std::span<const double> x,
                      std::span<const double> analytic, const GradCheckOptions& opts) {
  if (analytic.size() != x.size()) throw ContractError("grad_check: gradient length mismatch");
  std::vector<double> probe(x.begin(), x.end());
  auto eval = [&](std::size_t idx) {
    const double v = f(probe);
    if (!std::isfinite(v)) {
      throw EvaluationError("grad_check: non-finite function value near coordinate " + std::to_string(idx));
    }
    return v;
  };

  GradReport rep;
  auto check = [&](std::size_t i) {
    const double orig = probe[i];
    probe[i] = orig + opts.step;
    const double fp = eval(i);
    probe[i] = orig - opts.step;
    const double fm = eval(i);
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * opts.step);
    const double abs_err = std::abs(numeric - analytic[i]);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), opts.rel_floor});
    const double rel = abs_err / denom;
    rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
    if (rep.checked == 0 || rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
      rep.analytic = analytic[i];
      rep.numeric = numeric;
    }
    ++rep.checked;
  };

  if (opts.indices.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) check(i);
  } else {
    for (std::size_t i : opts.indices) {
      if (i >= x.size()) throw ContractError("grad_check: index out of range");
      check(i);
    }
  }
  rep.passed = rep.max_rel_err <= opts.tol_rel;
  return rep;
}

}  // namespace transact
