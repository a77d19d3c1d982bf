// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "transact/errors.hpp"
#include "transact/kernels.hpp"
#include "transact/ops.hpp"

using namespace transact;
using transact::testing::random_tensor;
using transact::testing::random_vector;

namespace {

// Plain triple loops, written independently of the kernel code.
void ref_gemm(char kind, std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
              const std::vector<double>& b, std::vector<double>& c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = kind == 't' ? a[p * m + i] : a[i * k + p];
        const double bv = kind == 'n' ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] += s;
    }
}

double max_rel(const std::vector<double>& x, const std::vector<double>& y) {
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, std::abs(x[i] - y[i]) / std::max(1.0, std::abs(y[i])));
  return e;
}

}  // namespace

TEST_CASE("every available backend matches the reference loops") {
  std::mt19937_64 rng(7);
  for (auto be : kernels::available_backends()) {
    const auto& t = kernels::table_for(be);
    CAPTURE(kernels::backend_name(be));
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 33u, 100u}) {
      auto x = random_vector(n, rng), y = random_vector(n, rng);
      double ref = 0.0;
      for (std::size_t i = 0; i < n; ++i) ref += x[i] * y[i];
      CHECK(std::abs(t.dot(x.data(), y.data(), n) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)) * (n + 1));

      auto y2 = y;
      t.axpy(0.37, x.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i] + 0.37 * x[i]).epsilon(1e-14));

      auto y3 = y;
      t.mul(x.data(), y3.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y3[i] == x[i] * y[i]);
    }
    for (auto [m, n, k] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1}, {3, 5, 7}, {8, 4, 16},
                           {13, 9, 11}, {32, 24, 20}, {5, 17, 3}}) {
      auto a = random_vector(m * k, rng), b = random_vector(k * n, rng), c0 = random_vector(m * n, rng);
      for (char kind : {'x', 'n', 't'}) {
        auto c = c0, r = c0;
        if (kind == 'x') t.gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n);
        if (kind == 'n') t.gemm_nt(m, n, k, a.data(), k, b.data(), k, c.data(), n);
        if (kind == 't') t.gemm_tn(m, n, k, a.data(), m, b.data(), n, c.data(), n);
        ref_gemm(kind, m, n, k, a, b, r);
        CHECK(max_rel(c, r) < 1e-12);
      }
    }
  }
}

TEST_CASE("select_backend pins the active table") {
  const auto before = kernels::active().backend;
  for (auto be : kernels::available_backends()) {
    kernels::select_backend(be);
    CHECK(kernels::active().backend == be);
  }
  kernels::select_backend(before);
  if (!kernels::neon_table()) CHECK_THROWS_AS(kernels::select_backend(kernels::Backend::neon), ConfigError);
}

TEST_CASE("softmax_masked excludes masked positions exactly") {
  const std::vector<double> l = {1.0, 2.0, 3.0, 1000.0};
  const Mask m = {0, 1, 0, 1};
  const auto p = softmax_masked(l, m);
  CHECK(p[1] == 0.0);
  CHECK(p[3] == 0.0);
  CHECK(p[0] + p[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p[2] / p[0] == doctest::Approx(std::exp(2.0)));
  const auto z = softmax_masked(l, Mask{1, 1, 1, 1});
  CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));
  const auto big = softmax_masked(std::vector<double>{1e4, 1e4 - 1.0}, Mask{0, 0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] + big[1] == doctest::Approx(1.0));
}

TEST_CASE("softmax backward matches finite differences") {
  std::mt19937_64 rng(3);
  const auto l = random_vector(6, rng);
  const Mask m = {0, 0, 1, 0, 0, 1};
  const auto w = random_vector(6, rng);
  auto f = [&](std::span<const double> x) {
    const auto p = softmax_masked(x, m);
    return std::inner_product(p.begin(), p.end(), w.begin(), 0.0);
  };
  const auto p = softmax_masked(l, m);
  std::vector<double> g(6, 0.0);
  softmax_backward(p, w, g);
  const auto rep = grad_check(f, l, g);
  CHECK(rep.passed);
  CHECK(g[2] == 0.0);
  CHECK(g[5] == 0.0);
}

TEST_CASE("layer_norm normalizes and its backward agrees with finite differences") {
  std::mt19937_64 rng(11);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    rng.seed(seed);
    const std::size_t n = 9;
    auto x = random_vector(n, rng, 3.0);
    auto gamma = random_vector(n, rng), beta = random_vector(n, rng), r = random_vector(n, rng);
    const auto plain = layer_norm(x, std::vector<double>(n, 1.0), std::vector<double>(n, 0.0), 1e-5);
    const double mean = std::accumulate(plain.begin(), plain.end(), 0.0) / n;
    double var = 0.0;
    for (double v : plain) var += (v - mean) * (v - mean);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var / n == doctest::Approx(1.0).epsilon(1e-4));

    // Pack x | gamma | beta into one vector.
    std::vector<double> packed = x;
    packed.insert(packed.end(), gamma.begin(), gamma.end());
    packed.insert(packed.end(), beta.begin(), beta.end());
    auto f = [&](std::span<const double> v) {
      const auto y = layer_norm(v.subspan(0, n), v.subspan(n, n), v.subspan(2 * n, n), 1e-5);
      return std::inner_product(y.begin(), y.end(), r.begin(), 0.0);
    };
    std::vector<double> out(n);
    const auto st = layer_norm(x, gamma, beta, 1e-5, out);
    std::vector<double> g(3 * n, 0.0);
    layer_norm_backward(x, st, gamma, r, std::span<double>(g).subspan(0, n), std::span<double>(g).subspan(n, n),
                        std::span<double>(g).subspan(2 * n, n));
    const auto rep = grad_check(f, packed, g);
    CHECK_MESSAGE(rep.passed, "max rel ", rep.max_rel_err);
  }
}

TEST_CASE("linear forward/backward") {
  std::mt19937_64 rng(5);
  const auto x = random_tensor({4, 3}, rng), w = random_tensor({3, 2}, rng), b = random_tensor({2}, rng);
  Tensor y({4, 2});
  linear_forward(x, w, b, y);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < 3; ++k) s += x(i, k) * w(k, j);
      CHECK(y(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  const auto dy = random_tensor({4, 2}, rng);
  Tensor dx({4, 3}), dw({3, 2}), db({2});
  linear_backward(x, w, dy, &dx, dw, db);
  std::vector<double> packed(x.flat().begin(), x.flat().end());
  packed.insert(packed.end(), w.flat().begin(), w.flat().end());
  packed.insert(packed.end(), b.flat().begin(), b.flat().end());
  auto f = [&](std::span<const double> v) {
    Tensor xx({4, 3}, {v.begin(), v.begin() + 12});
    Tensor ww({3, 2}, {v.begin() + 12, v.begin() + 18});
    Tensor bb({2}, {v.begin() + 18, v.end()});
    Tensor yy({4, 2});
    linear_forward(xx, ww, bb, yy);
    double s = 0.0;
    for (std::size_t i = 0; i < yy.size(); ++i) s += yy[i] * dy[i];
    return s;
  };
  std::vector<double> g(dx.flat().begin(), dx.flat().end());
  g.insert(g.end(), dw.flat().begin(), dw.flat().end());
  g.insert(g.end(), db.flat().begin(), db.flat().end());
  CHECK(grad_check(f, packed, g).passed);
}

TEST_CASE("grad_check rejects a wrong gradient and non-finite values") {
  auto f = [](std::span<const double> v) { return v[0] * v[0] + 3.0 * v[1]; };
  const std::vector<double> x = {1.5, -2.0};
  CHECK(grad_check(f, x, std::vector<double>{3.0, 3.0}).passed);
  const auto bad = grad_check(f, x, std::vector<double>{3.0, 3.01});
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_index == 1);
  auto g = [](std::span<const double> v) { return std::log(v[0]); };
  CHECK_THROWS_AS(grad_check(g, std::vector<double>{0.0}, std::vector<double>{1.0}), EvaluationError);
  CHECK_THROWS_AS(grad_check(f, x, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("tensor basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.cols() == 3);
  t(1, 2) = 4.0;
  CHECK(t.row(1)[2] == 4.0);
  CHECK(t.all_finite());
  t[0] = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));
}
