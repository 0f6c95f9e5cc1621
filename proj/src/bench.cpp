#include "rrg/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace rrg {

double scan_flops(int L, int n, int d) {
  return 6.0 * L * static_cast<double>(n) * d;
}

double attention_flops(int L, int d) {
  return 4.0 * static_cast<double>(L) * L * d +
         8.0 * static_cast<double>(L) * d * d;
}

namespace {

// Selective-scan shaped forward: per channel a diagonal recurrence over
// n_state states with data-dependent delta. Returns a checksum so the
// compiler cannot drop the work.
double scan_forward(const std::vector<double>& x, int L, int d, int n,
                    const std::vector<double>& a,       // d*n
                    const std::vector<double>& b,       // d*n
                    const std::vector<double>& c,       // d*n
                    std::vector<double>& h) {           // d*n scratch
  std::fill(h.begin(), h.end(), 0.0);
  double acc = 0.0;
  for (int t = 0; t < L; ++t) {
    const double* xt = &x[static_cast<size_t>(t) * d];
    for (int ch = 0; ch < d; ++ch) {
      double* hc = &h[static_cast<size_t>(ch) * n];
      const double* ac = &a[static_cast<size_t>(ch) * n];
      const double* bc = &b[static_cast<size_t>(ch) * n];
      const double* cc = &c[static_cast<size_t>(ch) * n];
      double y = 0.0;
      double xv = xt[ch];
      for (int s = 0; s < n; ++s) {
        hc[s] = ac[s] * hc[s] + bc[s] * xv;
        y += cc[s] * hc[s];
      }
      acc += y;
    }
  }
  return acc;
}

// Single-head causal attention with Q/K/V/out projections, softmax over
// the prefix. Scratch buffers are caller-owned to keep allocation out of
// the timed region.
double attention_forward(const std::vector<double>& x, int L, int d,
                         const std::vector<double>& wq,
                         const std::vector<double>& wk,
                         const std::vector<double>& wv,
                         const std::vector<double>& wo,
                         std::vector<double>& q, std::vector<double>& k,
                         std::vector<double>& v, std::vector<double>& scores,
                         std::vector<double>& ctx) {
  auto project = [&](const std::vector<double>& w, std::vector<double>& out) {
    for (int t = 0; t < L; ++t) {
      const double* xt = &x[static_cast<size_t>(t) * d];
      double* ot = &out[static_cast<size_t>(t) * d];
      for (int j = 0; j < d; ++j) {
        double s = 0.0;
        const double* wr = &w[static_cast<size_t>(j) * d];
        for (int i = 0; i < d; ++i) s += wr[i] * xt[i];
        ot[j] = s;
      }
    }
  };
  project(wq, q);
  project(wk, k);
  project(wv, v);
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  double acc = 0.0;
  for (int t = 0; t < L; ++t) {
    const double* qt = &q[static_cast<size_t>(t) * d];
    double mx = -1e300;
    for (int u = 0; u <= t; ++u) {
      const double* ku = &k[static_cast<size_t>(u) * d];
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += qt[i] * ku[i];
      s *= inv_sqrt;
      scores[u] = s;
      if (s > mx) mx = s;
    }
    double z = 0.0;
    for (int u = 0; u <= t; ++u) {
      scores[u] = std::exp(scores[u] - mx);
      z += scores[u];
    }
    for (int i = 0; i < d; ++i) ctx[i] = 0.0;
    for (int u = 0; u <= t; ++u) {
      double w = scores[u] / z;
      const double* vu = &v[static_cast<size_t>(u) * d];
      for (int i = 0; i < d; ++i) ctx[i] += w * vu[i];
    }
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      const double* wr = &wo[static_cast<size_t>(j) * d];
      for (int i = 0; i < d; ++i) s += wr[i] * ctx[i];
      acc += s;
    }
  }
  return acc;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void fill_uniform(std::vector<double>& v, std::mt19937_64& rng, double lo,
                  double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& e : v) e = dist(rng);
}

}  // namespace

std::vector<BenchRecord> bench_scan_vs_attention(const BenchConfig& cfg) {
  if (cfg.repeats < 3) throw std::invalid_argument("bench: repeats must be >= 3");
  if (!std::is_sorted(cfg.lengths.begin(), cfg.lengths.end()))
    throw std::invalid_argument("bench: lengths must be sorted ascending");

  std::mt19937_64 rng(cfg.seed);
  int d = cfg.d, n = cfg.n_state;
  std::vector<double> a(static_cast<size_t>(d) * n), b(a.size()), c(a.size());
  fill_uniform(a, rng, 0.5, 0.99);  // stable decay factors
  fill_uniform(b, rng, -0.1, 0.1);
  fill_uniform(c, rng, -0.1, 0.1);
  std::vector<double> wq(static_cast<size_t>(d) * d), wk(wq.size()),
      wv(wq.size()), wo(wq.size());
  fill_uniform(wq, rng, -0.1, 0.1);
  fill_uniform(wk, rng, -0.1, 0.1);
  fill_uniform(wv, rng, -0.1, 0.1);
  fill_uniform(wo, rng, -0.1, 0.1);

  volatile double sink = 0.0;
  std::vector<BenchRecord> out;
  for (int L : cfg.lengths) {
    std::vector<double> x(static_cast<size_t>(L) * d);
    fill_uniform(x, rng, -1.0, 1.0);
    std::vector<double> h(static_cast<size_t>(d) * n);
    std::vector<double> q(x.size()), k(x.size()), v(x.size());
    std::vector<double> scores(static_cast<size_t>(L)), ctx(static_cast<size_t>(d));

    auto time_fn = [&](auto&& fn) {
      std::vector<double> times;
      for (int r = 0; r < cfg.warmup + cfg.repeats; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        sink = sink + fn();
        auto t1 = std::chrono::steady_clock::now();
        if (r >= cfg.warmup)
          times.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
      return median(times);
    };

    BenchRecord rs;
    rs.backbone = "scan";
    rs.length = L;
    rs.seconds = time_fn([&] { return scan_forward(x, L, d, n, a, b, c, h); });
    rs.flops = scan_flops(L, n, d);
    rs.peak_bytes = sizeof(double) *
                    (x.size() + h.size() + a.size() + b.size() + c.size());
    out.push_back(rs);

    BenchRecord ra;
    ra.backbone = "attention";
    ra.length = L;
    ra.seconds = time_fn([&] {
      return attention_forward(x, L, d, wq, wk, wv, wo, q, k, v, scores, ctx);
    });
    ra.flops = attention_flops(L, d);
    ra.peak_bytes =
        sizeof(double) * (4.0 * x.size() + scores.size() + 4.0 * wq.size());
    out.push_back(ra);
  }
  return out;
}

std::string bench_table(const std::vector<BenchRecord>& records) {
  std::ostringstream os;
  os << "backbone    L       time(s)       GFLOPs\n";
  char line[128];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%-10s %6d  %12.6f  %11.4f\n",
                  r.backbone.c_str(), r.length, r.seconds, r.flops * 1e-9);
    os << line;
  }
  return os.str();
}

std::string bench_json(const std::vector<BenchRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"backbone", r.backbone},
                   {"length", r.length},
                   {"seconds", r.seconds},
                   {"flops", r.flops},
                   {"peak_bytes", r.peak_bytes}});
  }
  return nlohmann::json{{"records", arr}}.dump(2);
}

}  // namespace rrg
