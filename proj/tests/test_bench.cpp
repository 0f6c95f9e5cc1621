#include <json.hpp>

#include "doctest.h"
#include "rrg/bench.hpp"

using namespace rrg;

TEST_SUITE("bench") {

TEST_CASE("analytic flop counts scale exactly with length") {
  // Scan is linear in L, attention quadratic once L dominates d.
  CHECK(scan_flops(4096, 64, 64) == doctest::Approx(2.0 * scan_flops(2048, 64, 64)));
  CHECK(scan_flops(100, 8, 16) == doctest::Approx(6.0 * 100 * 8 * 16));
  CHECK(attention_flops(100, 16) ==
        doctest::Approx(4.0 * 100 * 100 * 16 + 8.0 * 100 * 16 * 16));
  double r = attention_flops(4096, 64) / attention_flops(2048, 64);
  CHECK(r > 2.0);
  CHECK(r < 4.0);
  // In the L >> d regime the quadratic term dominates and the ratio is ~4.
  double deep = attention_flops(1 << 16, 8) / attention_flops(1 << 15, 8);
  CHECK(deep == doctest::Approx(4.0).epsilon(1e-2));
}

TEST_CASE("config guards reject unusable setups") {
  BenchConfig cfg;
  cfg.lengths = {64, 128};
  cfg.repeats = 2;
  CHECK_THROWS(bench_scan_vs_attention(cfg));
  cfg.repeats = 3;
  cfg.lengths = {128, 64};
  CHECK_THROWS(bench_scan_vs_attention(cfg));
  cfg.lengths = {};
  CHECK(bench_scan_vs_attention(cfg).empty());
}

TEST_CASE("records cover both backbones at every length") {
  BenchConfig cfg;
  cfg.lengths = {32, 64};
  cfg.repeats = 3;
  cfg.warmup = 1;
  cfg.d = 8;
  cfg.n_state = 8;
  auto records = bench_scan_vs_attention(cfg);
  REQUIRE(records.size() == 4);
  for (const auto& r : records) {
    CHECK((r.backbone == "scan" || r.backbone == "attention"));
    CHECK((r.length == 32 || r.length == 64));
    CHECK(r.seconds >= 0.0);
    CHECK(r.flops > 0.0);
    CHECK(r.peak_bytes > 0.0);
    double want = r.backbone == "scan" ? scan_flops(r.length, cfg.n_state, cfg.d)
                                       : attention_flops(r.length, cfg.d);
    CHECK(r.flops == doctest::Approx(want));
  }
}

TEST_CASE("table and json renderings carry the records") {
  BenchConfig cfg;
  cfg.lengths = {32};
  cfg.repeats = 3;
  cfg.warmup = 0;
  cfg.d = 8;
  cfg.n_state = 8;
  auto records = bench_scan_vs_attention(cfg);
  std::string table = bench_table(records);
  CHECK(table.find("scan") != std::string::npos);
  CHECK(table.find("attention") != std::string::npos);
  CHECK(table.find("32") != std::string::npos);

  auto j = nlohmann::json::parse(bench_json(records));
  REQUIRE(j.contains("records"));
  REQUIRE(j["records"].is_array());
  REQUIRE(j["records"].size() == records.size());
  CHECK(j["records"][0].contains("backbone"));
  CHECK(j["records"][0].contains("length"));
  CHECK(j["records"][0].contains("seconds"));
  CHECK(j["records"][0].contains("flops"));
}

}  // TEST_SUITE
