// Scan-vs-attention efficiency harness. Wall time is measured on plain
// double-precision loops (no tape), FLOPs come from closed-form counts.

#ifndef RRG_BENCH_HPP
#define RRG_BENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace rrg {

struct BenchRecord {
  std::string backbone;  // "scan" or "attention"
  int length = 0;
  double seconds = 0.0;    // median over repeats, warmup excluded
  double flops = 0.0;      // analytic, not measured
  double peak_bytes = 0.0; // dominant-buffer estimate
};

// Analytic FLOP models. Constants:
//   scan: per (t, channel, state) the recurrence costs 2 (A_bar*h + .),
//   2 (B_bar*x + .) and 2 (C*h accumulate) -> 6*L*n*d.
//   attention: Q/K/V/out projections 4 * 2*L*d^2, QK^T and attn*V each
//   2*L^2*d -> 4*L^2*d + 8*L*d^2.
double scan_flops(int L, int n, int d);
double attention_flops(int L, int d);

struct BenchConfig {
  std::vector<int> lengths = {512, 1024, 2048, 4096};
  int repeats = 5;
  int warmup = 3;
  int d = 64;        // channel width for both backbones
  int n_state = 64;  // states per channel, scan only
  std::uint64_t seed = 0;
};

// One forward pass of each backbone per length; lengths must be sorted
// ascending and repeats >= 3. The measured region is single-threaded.
std::vector<BenchRecord> bench_scan_vs_attention(const BenchConfig& cfg);

std::string bench_table(const std::vector<BenchRecord>& records);
std::string bench_json(const std::vector<BenchRecord>& records);

}  // namespace rrg

#endif
