#include <cmath>
#include <random>

#include "doctest.h"
#include "rrg/ssm.hpp"

using namespace rrg;
using ag::Tensor;

namespace {

// Independent 30-term series oracle: exp(M) and phi(M) = sum M^k/(k+1)!.
void series_oracle(const std::vector<double>& m, int n, std::vector<double>& em,
                   std::vector<double>& ph) {
  em.assign(static_cast<size_t>(n) * n, 0.0);
  ph.assign(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> power(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) power[i * n + i] = 1.0;
  double fact = 1.0;
  for (int k = 0; k < 30; ++k) {
    if (k > 0) {
      fact *= k;
      std::vector<double> next(static_cast<size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int l = 0; l < n; ++l)
          for (int j = 0; j < n; ++j)
            next[i * n + j] += power[i * n + l] * m[l * n + j];
      power = next;
    }
    for (int i = 0; i < n * n; ++i) {
      em[i] += power[i] / fact;
      ph[i] += power[i] / (fact * (k + 1));
    }
  }
}

ContinuousSSM diag_system(const std::vector<double>& a,
                          const std::vector<double>& b,
                          const std::vector<double>& c, int p, int q) {
  ContinuousSSM s;
  s.n = static_cast<int>(a.size());
  s.p = p;
  s.q = q;
  s.diagonal = true;
  s.A = a;
  s.B = b;
  s.C = c;
  return s;
}

std::vector<DiscreteStep> random_diag_steps(int L, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ad(-2.0, -0.1), bd(-1.0, 1.0),
      dd(0.05, 0.5);
  std::vector<DiscreteStep> steps(L);
  for (auto& s : steps) {
    ContinuousSSM sys;
    sys.n = n;
    sys.p = 1;
    sys.q = 1;
    sys.diagonal = true;
    for (int i = 0; i < n; ++i) sys.A.push_back(ad(rng));
    for (int i = 0; i < n; ++i) sys.B.push_back(bd(rng));
    sys.C.assign(n, 1.0);
    s = discretize_zoh(sys, dd(rng));
  }
  return steps;
}

}  // namespace

TEST_SUITE("ssm") {

TEST_CASE("scalar discretization: decay -1 over a half-life step") {
  ContinuousSSM s = diag_system({-1.0}, {1.0}, {1.0}, 1, 1);
  DiscreteStep d = discretize_zoh(s, std::log(2.0));
  CHECK(std::abs(d.A_bar[0] - 0.5) < 1e-12);
  CHECK(std::abs(d.B_bar[0] - 0.5) < 1e-12);
}

TEST_CASE("vanishing step size gives identity dynamics") {
  ContinuousSSM s;
  s.n = 2;
  s.p = 1;
  s.q = 1;
  s.A = {-1.0, 0.3, 0.0, -2.0};
  s.B = {1.0, 1.0};
  s.C = {1.0, 1.0};
  DiscreteStep d = discretize_zoh(s, 1e-8);
  CHECK(std::abs(d.A_bar[0] - 1.0) < 1e-6);
  CHECK(std::abs(d.A_bar[1]) < 1e-6);
  CHECK(std::abs(d.A_bar[3] - 1.0) < 1e-6);
  CHECK(std::abs(d.B_bar[0]) < 1e-6);
  CHECK(std::abs(d.B_bar[1]) < 1e-6);
}

TEST_CASE("dense discretization matches the 30-term series oracle") {
  // diag(-1,-2) stored densely so the dense code path runs.
  ContinuousSSM s;
  s.n = 2;
  s.p = 2;
  s.q = 1;
  s.A = {-1.0, 0.0, 0.0, -2.0};
  s.B = {1.0, 1.0, 1.0, 1.0};
  s.C = {1.0, 1.0};
  double delta = 0.1;
  DiscreteStep d = discretize_zoh(s, delta);

  std::vector<double> dA = {-0.1, 0.0, 0.0, -0.2};
  std::vector<double> em, ph;
  series_oracle(dA, 2, em, ph);
  // B_bar = phi(dA) * dB
  for (int i = 0; i < 4; ++i) CHECK(std::abs(d.A_bar[i] - em[i]) < 1e-8);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double want = 0.0;
      for (int k = 0; k < 2; ++k) want += ph[i * 2 + k] * delta * s.B[k * 2 + j];
      CHECK(std::abs(d.B_bar[i * 2 + j] - want) < 1e-8);
    }
}

TEST_CASE("diagonal A_bar entries are exp of delta times the pole") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> ad(-3.0, -0.01), dd(0.01, 2.0);
  for (int it = 0; it < 20; ++it) {
    double a = ad(rng), delta = dd(rng);
    ContinuousSSM s = diag_system({a}, {1.0}, {1.0}, 1, 1);
    DiscreteStep d = discretize_zoh(s, delta);
    CHECK(d.A_bar[0] == std::exp(delta * a));
  }
}

TEST_CASE("rejects non-positive delta and non-finite entries") {
  ContinuousSSM s = diag_system({-1.0}, {1.0}, {1.0}, 1, 1);
  CHECK_THROWS(discretize_zoh(s, 0.0));
  CHECK_THROWS(discretize_zoh(s, -1.0));
  s.A[0] = std::nan("");
  CHECK_THROWS(discretize_zoh(s, 0.1));
}

TEST_CASE("sequential scan reproduces the hand recurrence") {
  DiscreteStep d;
  d.n = 1;
  d.p = 1;
  d.diagonal = true;
  d.A_bar = {0.5};
  d.B_bar = {0.5};
  d.delta = 1.0;
  std::vector<DiscreteStep> steps = {d};
  auto y = scan_sequential(steps, {1.0}, 1, {1.0, 0.0, 0.0}, 3, {0.0});
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("zero input and zero state stay at zero") {
  std::mt19937_64 rng(1);
  auto steps = random_diag_steps(8, 3, rng);
  auto y = scan_sequential(steps, std::vector<double>(3, 1.0), 1,
                           std::vector<double>(8, 0.0), 8, {0.0, 0.0, 0.0});
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("memoryless steps forget the past entirely") {
  DiscreteStep d;
  d.n = 1;
  d.p = 1;
  d.diagonal = true;
  d.A_bar = {0.0};
  d.B_bar = {0.7};
  d.delta = 1.0;
  std::vector<DiscreteStep> steps = {d};
  std::vector<double> x = {1.0, -2.0, 3.0};
  auto y = scan_sequential(steps, {2.0}, 1, x, 3, {5.0});
  for (int t = 0; t < 3; ++t)
    CHECK(y[t] == doctest::Approx(2.0 * 0.7 * x[t]).epsilon(1e-12));
}

TEST_CASE("parallel scan is exact for a single element") {
  std::mt19937_64 rng(2);
  auto steps = random_diag_steps(1, 4, rng);
  std::vector<double> c(4, 1.0), x = {0.3}, h0 = {0.1, -0.2, 0.0, 0.4};
  auto ys = scan_sequential(steps, c, 1, x, 1, h0);
  auto yp = scan_parallel(steps, c, 1, x, 1, h0);
  CHECK(ys[0] == yp[0]);
}

TEST_CASE("parallel scan matches sequential over many lengths and seeds") {
  for (int L : {1, 2, 3, 17, 128}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(seed * 1000 + L);
      auto steps = random_diag_steps(L, 4, rng);
      std::vector<double> c(4, 1.0), x(L), h0(4);
      std::uniform_real_distribution<double> xd(-1.0, 1.0);
      for (auto& v : x) v = xd(rng);
      for (auto& v : h0) v = xd(rng);
      auto ys = scan_sequential(steps, c, 1, x, L, h0);
      auto yp = scan_parallel(steps, c, 1, x, L, h0);
      for (int t = 0; t < L; ++t) {
        double denom = std::max(std::abs(ys[t]), 1e-9);
        CHECK(std::abs(ys[t] - yp[t]) / denom < 1e-5);
      }
    }
  }
}

TEST_CASE("two-step scan equals the composed affine map") {
  std::mt19937_64 rng(17);
  auto steps = random_diag_steps(2, 1, rng);
  std::vector<double> x = {0.8, -0.4}, h0 = {0.25};
  auto y = scan_sequential(steps, {1.0}, 1, x, 2, h0);
  double a1 = steps[0].A_bar[0], b1 = steps[0].B_bar[0] * x[0];
  double a2 = steps[1].A_bar[0], b2 = steps[1].B_bar[0] * x[1];
  // composed map: h -> a2*(a1*h + b1) + b2
  CHECK(y[1] == doctest::Approx(a2 * (a1 * h0[0] + b1) + b2).epsilon(1e-12));
  auto yp = scan_parallel(steps, {1.0}, 1, x, 2, h0);
  CHECK(yp[1] == doctest::Approx(y[1]).epsilon(1e-10));
}

TEST_CASE("parallel scan rejects dense steps") {
  ContinuousSSM s;
  s.n = 2;
  s.p = 1;
  s.q = 1;
  s.A = {-1.0, 0.1, 0.0, -2.0};
  s.B = {1.0, 1.0};
  s.C = {1.0, 1.0};
  std::vector<DiscreteStep> steps = {discretize_zoh(s, 0.1)};
  CHECK_THROWS(scan_parallel(steps, s.C, 1, {1.0, 1.0}, 2, {0.0, 0.0}));
}

TEST_CASE("scan validates dimensions") {
  std::mt19937_64 rng(3);
  auto steps = random_diag_steps(4, 2, rng);
  std::vector<double> c(2, 1.0);
  CHECK_THROWS(scan_sequential(steps, c, 1, {1.0, 2.0}, 2, {0.0, 0.0}));  // L != steps
  CHECK_THROWS(scan_sequential(steps, c, 1, std::vector<double>(4, 1.0), 4, {0.0}));
}

TEST_CASE("stable poles keep the state bounded over 1e5 steps") {
  DiscreteStep d;
  d.n = 1;
  d.p = 1;
  d.diagonal = true;
  d.A_bar = {std::exp(-0.01)};  // slow pole
  d.B_bar = {1.0};
  d.delta = 0.01;
  std::vector<DiscreteStep> steps = {d};
  const int L = 100000;
  std::vector<double> x(L, 1.0);
  auto y = scan_sequential(steps, {1.0}, 1, x, L, {0.0});
  double bound = 1.0 / (1.0 - d.A_bar[0]) + 1.0;  // geometric series limit
  for (double v : y) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("scan is linear in its input") {
  std::mt19937_64 rng(23);
  auto steps = random_diag_steps(16, 3, rng);
  std::vector<double> c(3, 1.0), h0(3, 0.0), x1(16), x2(16), mix(16);
  std::uniform_real_distribution<double> xd(-1.0, 1.0);
  for (auto& v : x1) v = xd(rng);
  for (auto& v : x2) v = xd(rng);
  double alpha = 0.6, beta = -1.3;
  for (int t = 0; t < 16; ++t) mix[t] = alpha * x1[t] + beta * x2[t];
  auto y1 = scan_sequential(steps, c, 1, x1, 16, h0);
  auto y2 = scan_sequential(steps, c, 1, x2, 16, h0);
  auto ym = scan_sequential(steps, c, 1, mix, 16, h0);
  for (int t = 0; t < 16; ++t)
    CHECK(std::abs(ym[t] - (alpha * y1[t] + beta * y2[t])) < 1e-6);
}

TEST_CASE("selection: zero input and bias give log-2 step sizes") {
  SelectionWeights w;
  w.p = 3;
  w.n = 2;
  w.W_delta.assign(9, 0.7);
  w.b_delta.assign(3, 0.0);
  w.W_B.assign(6, 0.1);
  w.b_B.assign(2, 0.2);
  w.W_C.assign(6, 0.3);
  w.b_C.assign(2, 0.4);
  auto sel = selective_parameters({0.0, 0.0, 0.0}, w);
  for (double d : sel.delta) CHECK(d == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (double b : sel.B) CHECK(b == doctest::Approx(0.2));
  for (double cc : sel.C) CHECK(cc == doctest::Approx(0.4));
}

TEST_CASE("selection: zero delta weights make the step input-independent") {
  SelectionWeights w;
  w.p = 2;
  w.n = 1;
  w.W_delta.assign(4, 0.0);
  w.b_delta.assign(2, 1.5);
  w.W_B.assign(2, 1.0);
  w.b_B.assign(1, 0.0);
  w.W_C.assign(2, 1.0);
  w.b_C.assign(1, 0.0);
  auto s1 = selective_parameters({1.0, -1.0}, w);
  auto s2 = selective_parameters({100.0, 3.0}, w);
  CHECK(s1.delta == s2.delta);
}

TEST_CASE("selection: step sizes are always positive") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  SelectionWeights w;
  w.p = 4;
  w.n = 2;
  w.W_delta.resize(16);
  w.b_delta.resize(4);
  w.W_B.assign(8, 0.0);
  w.b_B.assign(2, 0.0);
  w.W_C.assign(8, 0.0);
  w.b_C.assign(2, 0.0);
  for (int it = 0; it < 50; ++it) {
    for (auto& v : w.W_delta) v = u(rng);
    for (auto& v : w.b_delta) v = u(rng);
    std::vector<double> x(4);
    for (auto& v : x) v = u(rng);
    for (double d : selective_parameters(x, w).delta) CHECK(d > 0.0);
  }
}

TEST_CASE("gradient check: quadratic loss on a linear parameter") {
  std::mt19937_64 rng(5);
  Tensor b = Tensor::randn({4}, rng, 1.0);
  std::vector<Tensor> params = {b};
  auto loss_fn = [&]() { return ag::sum_all(ag::mul(b, b)); };
  CHECK(gradient_check(loss_fn, params, 1e-5) < 1e-6);
}

TEST_CASE("gradient check: selective scan layer, n=4 L=16") {
  std::mt19937_64 rng(42);
  SelectiveSSM layer = SelectiveSSM::init(3, 4, rng);
  Tensor x = Tensor::randn({16, 3}, rng, 1.0, false);
  std::vector<Tensor> params;
  layer.collect(params);
  auto loss_fn = [&]() {
    Tensor y = layer.forward(x);
    return ag::sum_all(ag::mul(y, y));
  };
  CHECK(gradient_check(loss_fn, params, 1e-5) < 1e-4);
}

TEST_CASE("gradient check rejects out-of-range epsilon") {
  std::mt19937_64 rng(5);
  Tensor b = Tensor::randn({2}, rng, 1.0);
  std::vector<Tensor> params = {b};
  auto loss_fn = [&]() { return ag::sum_all(ag::mul(b, b)); };
  CHECK_THROWS(gradient_check(loss_fn, params, 1e-7));
  CHECK_THROWS(gradient_check(loss_fn, params, 1e-2));
}

}  // TEST_SUITE
