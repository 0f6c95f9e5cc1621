#include "rrg/ssm.hpp"

#include <cmath>
#include <stdexcept>

namespace rrg {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// phi(z) = (e^z - 1)/z, scalar.
double phi_scalar(double z) {
  if (std::abs(z) < 1e-4)
    return 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
  return std::expm1(z) / z;
}

std::vector<double> matmul_sq(const std::vector<double>& a,
                              const std::vector<double>& b, int n) {
  std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < n; ++k) {
      double aik = a[i * n + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < n; ++j) c[i * n + j] += aik * b[k * n + j];
    }
  return c;
}

double inf_norm(const std::vector<double>& a, int n) {
  double mx = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += std::abs(a[i * n + j]);
    mx = std::max(mx, row);
  }
  return mx;
}

// phi(M) = sum_k M^k/(k+1)! by plain series; callers scale M small first.
std::vector<double> phi_series(const std::vector<double>& m, int n, int terms) {
  std::vector<double> acc(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> power(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) power[i * n + i] = 1.0;  // M^0
  double fact = 1.0;
  for (int k = 0; k < terms; ++k) {
    fact *= (k + 1);  // (k+1)!
    for (int i = 0; i < n * n; ++i) acc[i] += power[i] / fact;
    power = matmul_sq(power, m, n);
  }
  return acc;
}

// Solve (dA) X = R for X by Gaussian elimination with partial pivoting.
std::vector<double> solve(std::vector<double> a, std::vector<double> r, int n,
                          int cols) {
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int i = col + 1; i < n; ++i)
      if (std::abs(a[i * n + col]) > std::abs(a[piv * n + col])) piv = i;
    if (std::abs(a[piv * n + col]) < 1e-300)
      throw std::invalid_argument("discretize_zoh: singular system");
    if (piv != col) {
      for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
      for (int j = 0; j < cols; ++j)
        std::swap(r[col * cols + j], r[piv * cols + j]);
    }
    double d = a[col * n + col];
    for (int j = 0; j < n; ++j) a[col * n + j] /= d;
    for (int j = 0; j < cols; ++j) r[col * cols + j] /= d;
    for (int i = 0; i < n; ++i) {
      if (i == col) continue;
      double f = a[i * n + col];
      if (f == 0.0) continue;
      for (int j = 0; j < n; ++j) a[i * n + j] -= f * a[col * n + j];
      for (int j = 0; j < cols; ++j)
        r[i * cols + j] -= f * r[col * cols + j];
    }
  }
  return r;
}

}  // namespace

void ContinuousSSM::validate() const {
  require(n >= 1 && p >= 1 && q >= 1, "ContinuousSSM: bad dimensions");
  require(A.size() == (diagonal ? static_cast<size_t>(n)
                                : static_cast<size_t>(n) * n),
          "ContinuousSSM: A size mismatch");
  require(B.size() == static_cast<size_t>(n) * p, "ContinuousSSM: B size mismatch");
  require(C.size() == static_cast<size_t>(q) * n, "ContinuousSSM: C size mismatch");
  require(all_finite(A) && all_finite(B) && all_finite(C),
          "ContinuousSSM: non-finite entries");
}

std::vector<double> expm(const std::vector<double>& a, int n) {
  // Scaling and squaring with a 18-term Taylor core.
  double norm = inf_norm(a, n);
  int s = 0;
  while (norm > 0.5) {
    norm /= 2.0;
    ++s;
  }
  double scale = std::pow(2.0, -s);
  std::vector<double> m(a.size());
  for (size_t i = 0; i < a.size(); ++i) m[i] = a[i] * scale;

  std::vector<double> acc(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> power(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) power[i * n + i] = 1.0;
  double fact = 1.0;
  for (int k = 0; k <= 18; ++k) {
    if (k > 0) {
      fact *= k;
      power = matmul_sq(power, m, n);
    }
    for (int i = 0; i < n * n; ++i) acc[i] += power[i] / fact;
  }
  for (int i = 0; i < s; ++i) acc = matmul_sq(acc, acc, n);
  return acc;
}

DiscreteStep discretize_zoh(const ContinuousSSM& ssm, double delta) {
  ssm.validate();
  require(std::isfinite(delta) && delta > 0.0, "discretize_zoh: delta must be > 0");

  DiscreteStep step;
  step.n = ssm.n;
  step.p = ssm.p;
  step.diagonal = ssm.diagonal;
  step.delta = delta;

  if (ssm.diagonal) {
    step.A_bar.resize(ssm.n);
    step.B_bar.assign(static_cast<size_t>(ssm.n) * ssm.p, 0.0);
    for (int i = 0; i < ssm.n; ++i) {
      double z = delta * ssm.A[i];
      step.A_bar[i] = std::exp(z);
      double coef = delta * phi_scalar(z);  // (e^z - 1)/a_i
      for (int j = 0; j < ssm.p; ++j)
        step.B_bar[i * ssm.p + j] = coef * ssm.B[i * ssm.p + j];
    }
    return step;
  }

  const int n = ssm.n;
  std::vector<double> dA(ssm.A.size());
  for (size_t i = 0; i < dA.size(); ++i) dA[i] = delta * ssm.A[i];
  step.A_bar = expm(dA, n);

  std::vector<double> dB(ssm.B.size());
  for (size_t i = 0; i < dB.size(); ++i) dB[i] = delta * ssm.B[i];

  if (inf_norm(dA, n) < 1e-4) {
    // B_bar = phi(dA) dB via series, avoiding the explicit inverse at A -> 0.
    std::vector<double> ph = phi_series(dA, n, 12);
    step.B_bar.assign(static_cast<size_t>(n) * ssm.p, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < ssm.p; ++j)
        for (int k = 0; k < n; ++k)
          step.B_bar[i * ssm.p + j] += ph[i * n + k] * dB[k * ssm.p + j];
  } else {
    // B_bar solves (dA) B_bar = (exp(dA) - I) dB.
    std::vector<double> rhs(static_cast<size_t>(n) * ssm.p, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < ssm.p; ++j) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
          double e = step.A_bar[i * n + k] - (i == k ? 1.0 : 0.0);
          acc += e * dB[k * ssm.p + j];
        }
        rhs[i * ssm.p + j] = acc;
      }
    step.B_bar = solve(dA, std::move(rhs), n, ssm.p);
  }
  return step;
}

namespace {

const DiscreteStep& step_at(std::span<const DiscreteStep> steps, int t) {
  return steps.size() == 1 ? steps[0] : steps[t];
}

void check_scan_args(std::span<const DiscreteStep> steps,
                     const std::vector<double>& c, int q,
                     const std::vector<double>& x, int L,
                     const std::vector<double>& h0) {
  require(L >= 1, "scan: L must be >= 1");
  require(!steps.empty() &&
              (steps.size() == 1 || steps.size() == static_cast<size_t>(L)),
          "scan: need 1 or L steps");
  const int n = steps[0].n, p = steps[0].p;
  for (const auto& s : steps) {
    require(s.n == n && s.p == p, "scan: inconsistent step dimensions");
    require(s.B_bar.size() == static_cast<size_t>(n) * p &&
                s.A_bar.size() == (s.diagonal ? static_cast<size_t>(n)
                                              : static_cast<size_t>(n) * n),
            "scan: step matrix size mismatch");
  }
  require(c.size() == static_cast<size_t>(q) * n, "scan: C size mismatch");
  require(x.size() == static_cast<size_t>(L) * p, "scan: x size mismatch");
  require(h0.size() == static_cast<size_t>(n), "scan: h0 size mismatch");
}

}  // namespace

std::vector<double> scan_sequential(std::span<const DiscreteStep> steps,
                                    const std::vector<double>& c, int q,
                                    const std::vector<double>& x, int L,
                                    const std::vector<double>& h0) {
  check_scan_args(steps, c, q, x, L, h0);
  const int n = steps[0].n, p = steps[0].p;
  std::vector<double> h = h0, hn(n), y(static_cast<size_t>(L) * q);
  for (int t = 0; t < L; ++t) {
    const auto& s = step_at(steps, t);
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      if (s.diagonal) {
        acc = s.A_bar[i] * h[i];
      } else {
        for (int k = 0; k < n; ++k) acc += s.A_bar[i * n + k] * h[k];
      }
      for (int j = 0; j < p; ++j) acc += s.B_bar[i * p + j] * x[t * p + j];
      hn[i] = acc;
    }
    h = hn;
    for (int o = 0; o < q; ++o) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += c[o * n + i] * h[i];
      y[t * q + o] = acc;
    }
  }
  return y;
}

std::vector<double> scan_parallel(std::span<const DiscreteStep> steps,
                                  const std::vector<double>& c, int q,
                                  const std::vector<double>& x, int L,
                                  const std::vector<double>& h0) {
  check_scan_args(steps, c, q, x, L, h0);
  for (const auto& s : steps)
    require(s.diagonal, "scan_parallel: requires diagonal steps");
  const int n = steps[0].n, p = steps[0].p;

  // Per-timestep affine maps h -> a*h + b, elementwise over the n states.
  struct Elem {
    std::vector<double> a, b;
  };
  size_t size = 1;
  while (size < static_cast<size_t>(L)) size *= 2;
  std::vector<Elem> e(size);
  for (size_t t = 0; t < size; ++t) {
    e[t].a.assign(n, 1.0);
    e[t].b.assign(n, 0.0);
  }
  for (int t = 0; t < L; ++t) {
    const auto& s = step_at(steps, t);
    for (int i = 0; i < n; ++i) {
      e[t].a[i] = s.A_bar[i];
      double acc = 0.0;
      for (int j = 0; j < p; ++j) acc += s.B_bar[i * p + j] * x[t * p + j];
      e[t].b[i] = acc;
    }
  }

  auto combine = [n](const Elem& first, const Elem& second) {
    // second o first: h -> a2*(a1*h + b1) + b2
    Elem out;
    out.a.resize(n);
    out.b.resize(n);
    for (int i = 0; i < n; ++i) {
      out.a[i] = second.a[i] * first.a[i];
      out.b[i] = second.a[i] * first.b[i] + second.b[i];
    }
    return out;
  };

  // Blelloch scan: up-sweep then down-sweep yields the exclusive prefix,
  // composed once more with the original element for the inclusive result.
  std::vector<Elem> tree = e;
  for (size_t stride = 1; stride < size; stride *= 2)
    for (size_t i = 2 * stride - 1; i < size; i += 2 * stride)
      tree[i] = combine(tree[i - stride], tree[i]);
  Elem ident;
  ident.a.assign(n, 1.0);
  ident.b.assign(n, 0.0);
  tree[size - 1] = ident;
  for (size_t stride = size / 2; stride >= 1; stride /= 2) {
    for (size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
      Elem t = tree[i - stride];
      tree[i - stride] = tree[i];
      tree[i] = combine(tree[i], t);  // prefix first, then left-subtree sum
    }
    if (stride == 1) break;
  }

  std::vector<double> y(static_cast<size_t>(L) * q);
  for (int t = 0; t < L; ++t) {
    Elem inc = combine(tree[t], e[t]);  // inclusive prefix at t
    for (int o = 0; o < q; ++o) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i)
        acc += c[o * n + i] * (inc.a[i] * h0[i] + inc.b[i]);
      y[t * q + o] = acc;
    }
  }
  return y;
}

SelectedParams selective_parameters(const std::vector<double>& x_t,
                                    const SelectionWeights& w) {
  require(x_t.size() == static_cast<size_t>(w.p), "selective_parameters: x size");
  require(all_finite(w.W_delta) && all_finite(w.b_delta) && all_finite(w.W_B) &&
              all_finite(w.b_B) && all_finite(w.W_C) && all_finite(w.b_C),
          "selective_parameters: non-finite weights");
  SelectedParams out;
  out.delta.resize(w.p);
  for (int i = 0; i < w.p; ++i) {
    double z = w.b_delta[i];
    for (int j = 0; j < w.p; ++j) z += w.W_delta[i * w.p + j] * x_t[j];
    out.delta[i] = z > 30.0 ? z : std::log1p(std::exp(z));
  }
  out.B.resize(w.n);
  out.C.resize(w.n);
  for (int i = 0; i < w.n; ++i) {
    double zb = w.b_B[i], zc = w.b_C[i];
    for (int j = 0; j < w.p; ++j) {
      zb += w.W_B[i * w.p + j] * x_t[j];
      zc += w.W_C[i * w.p + j] * x_t[j];
    }
    out.B[i] = zb;
    out.C[i] = zc;
  }
  return out;
}

double gradient_check(const std::function<ag::Tensor()>& loss_fn,
                      std::span<ag::Tensor> params, double epsilon) {
  require(epsilon >= 1e-6 && epsilon <= 1e-3,
          "gradient_check: epsilon out of [1e-6, 1e-3]");
  ag::zero_grad(params);
  ag::Tensor loss = loss_fn();
  if (!std::isfinite(loss.item()))
    throw std::runtime_error("gradient_check: non-finite loss");
  ag::backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      double orig = p.data()[j];
      p.data()[j] = orig + epsilon;
      double lp = loss_fn().item();
      p.data()[j] = orig - epsilon;
      double lm = loss_fn().item();
      p.data()[j] = orig;
      double fd = (lp - lm) / (2.0 * epsilon);
      double a = analytic[pi].empty() ? 0.0 : analytic[pi][j];
      double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
      max_rel = std::max(max_rel, std::abs(a - fd) / denom);
    }
  }
  return max_rel;
}

SelectiveSSM SelectiveSSM::init(int d, int d_state, std::mt19937_64& rng) {
  SelectiveSSM s;
  s.d = d;
  s.d_state = d_state;
  // A starts around -1: A_log ~ N(0, 0.5), A = -exp(A_log).
  s.A_log = ag::Tensor::randn({d, d_state}, rng, 0.5);
  s.W_delta = ag::Tensor::randn({d, d}, rng, 0.5 / std::sqrt(d));
  s.b_delta = ag::Tensor::zeros({d}, true);
  s.W_B = ag::Tensor::randn({d_state, d}, rng, 1.0 / std::sqrt(d));
  s.W_C = ag::Tensor::randn({d_state, d}, rng, 1.0 / std::sqrt(d));
  s.D = ag::Tensor::full({d}, 1.0, true);
  return s;
}

ag::Tensor SelectiveSSM::forward(const ag::Tensor& x) const {
  using namespace ag;
  if (x.shape().size() != 2 || x.dim(1) != d)
    throw std::invalid_argument("SelectiveSSM: want [L,d] input");
  Tensor delta = softplus(add_rowvec(matmul(x, transpose(W_delta)), b_delta));
  Tensor bm = matmul(x, transpose(W_B));  // [L,n]
  Tensor cm = matmul(x, transpose(W_C));  // [L,n]
  Tensor a = neg(ag::exp(A_log));         // [d,n]
  Tensor z = outer_ld_dn(delta, a);       // [L,d,n] = delta * A
  Tensor a_bar = ag::exp(z);
  Tensor phi = zoh_phi(z);
  Tensor dx = mul(delta, x);
  Tensor u = scan_input(dx, phi, bm);
  Tensor h = linear_scan(a_bar, u);
  Tensor y = contract_state(h, cm);
  return add(y, mul_rowvec(x, D));
}

void SelectiveSSM::collect(std::vector<ag::Tensor>& out) const {
  out.push_back(A_log);
  out.push_back(W_delta);
  out.push_back(b_delta);
  out.push_back(W_B);
  out.push_back(W_C);
  out.push_back(D);
}

}  // namespace rrg
