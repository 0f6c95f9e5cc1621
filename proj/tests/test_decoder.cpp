#include <cmath>
#include <random>

#include "doctest.h"
#include "rrg/decoder.hpp"

using namespace rrg;
using ag::Tensor;

namespace {

DecoderConfig tiny_config(DecoderBackbone kind = DecoderBackbone::Ssm) {
  DecoderConfig cfg;
  cfg.vocab = 8;
  cfg.embed = 6;
  cfg.layers = 2;
  cfg.context_window = 16;
  cfg.d_state = 2;
  cfg.mlp_hidden = 10;
  cfg.backbone = kind;
  return cfg;
}

// Enumerable toy LM: log-probs over V as a pure seeded function of the
// prefix, so every sequence score can be brute-forced.
std::function<std::vector<double>(const std::vector<int>&)> toy_lm(
    std::uint64_t seed, int vocab) {
  return [seed, vocab](const std::vector<int>& prefix) {
    std::uint64_t h = seed;
    for (int t : prefix) h = h * 0x100000001b3ull + static_cast<std::uint64_t>(t + 1);
    std::mt19937_64 rng(h);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<double> logits(vocab);
    for (auto& v : logits) v = u(rng);
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    for (auto& v : logits) v = v - mx - std::log(z);
    return logits;
  };
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("config validation") {
  DecoderConfig cfg = tiny_config();
  cfg.vocab = 3;
  CHECK_THROWS(cfg.validate());
  cfg = tiny_config();
  cfg.layers = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("logits are causal: future tokens do not matter") {
  for (auto kind : {DecoderBackbone::Ssm, DecoderBackbone::Attention}) {
    std::mt19937_64 rng(1);
    Decoder d = Decoder::init(tiny_config(kind), rng);
    Tensor a = d.forward_ids({4, 5, 6, 7});
    Tensor b = d.forward_ids({4, 5, 7, 6});
    const int V = d.cfg.vocab;
    for (int pos = 0; pos < 2; ++pos)
      for (int v = 0; v < V; ++v)
        CHECK(a.values()[pos * V + v] ==
              doctest::Approx(b.values()[pos * V + v]).epsilon(1e-12));
  }
}

TEST_CASE("zeroed parameters give uniform logits") {
  std::mt19937_64 rng(2);
  DecoderConfig cfg = tiny_config();
  cfg.layers = 1;
  Decoder d = Decoder::init(cfg, rng);
  NamedParams params;
  d.collect(params, "d");
  for (auto& [name, t] : params)
    for (auto& v : t.values()) v = 0.0;
  Tensor logits = d.forward_ids({1, 4, 2});
  for (const double v : logits.values())
    CHECK(v == doctest::Approx(logits.values()[0]).epsilon(1e-12));
}

TEST_CASE("fixed-seed forward reproduces bit for bit") {
  std::mt19937_64 rng1(3), rng2(3);
  Decoder a = Decoder::init(tiny_config(), rng1);
  Decoder b = Decoder::init(tiny_config(), rng2);
  Tensor la = a.forward_ids({1, 2, 3, 4, 5});
  Tensor lb = b.forward_ids({1, 2, 3, 4, 5});
  CHECK(la.values() == lb.values());
}

TEST_CASE("context window overflow is a length error") {
  std::mt19937_64 rng(4);
  Decoder d = Decoder::init(tiny_config(), rng);
  std::vector<int> ids(17, 1);
  CHECK_THROWS_AS(d.forward_ids(ids), std::length_error);
}

TEST_CASE("loss vanishes for confidently correct logits") {
  Tensor logits = Tensor::from({100.0, 0.0, 0.0, 0.0, 100.0, 0.0}, {2, 3});
  Tensor loss = decoder_loss(logits, {0, 1}, {1.0, 1.0});
  CHECK(loss.item() < 1e-9);
}

TEST_CASE("masked positions never affect the loss") {
  std::mt19937_64 rng(5);
  Tensor logits = Tensor::randn({4, 6}, rng, 1.0, false);
  std::vector<double> mask = {0, 1, 0, 1};
  Tensor a = decoder_loss(logits, {0, 2, 3, 4}, mask);
  Tensor b = decoder_loss(logits, {5, 2, 1, 4}, mask);
  CHECK(a.item() == b.item());
}

TEST_CASE("sum and mean reductions agree up to the masked count") {
  std::mt19937_64 rng(6);
  Tensor logits = Tensor::randn({5, 4}, rng, 1.0, false);
  std::vector<int> targets = {1, 2, 3, 0, 1};
  std::vector<double> mask = {1, 1, 0, 1, 0};
  Tensor mean = decoder_loss(logits, targets, mask, ag::LossReduction::Mean);
  Tensor sum = decoder_loss(logits, targets, mask, ag::LossReduction::Sum);
  CHECK(sum.item() == doctest::Approx(3.0 * mean.item()).epsilon(1e-12));
}

TEST_CASE("decoder gradients match finite differences") {
  std::mt19937_64 rng(7);
  DecoderConfig cfg = tiny_config();
  cfg.layers = 1;
  Decoder d = Decoder::init(cfg, rng);
  NamedParams named;
  d.collect(named, "d");
  std::vector<Tensor> params = param_tensors(named);
  std::vector<int> ids = {1, 4, 5, 2};
  std::vector<int> targets = {4, 5, 2, 0};
  std::vector<double> mask = {1, 1, 1, 0};
  auto loss_fn = [&]() { return decoder_loss(d.forward_ids(ids), targets, mask); };
  CHECK(gradient_check(loss_fn, params, 1e-5) < 1e-4);
}

TEST_CASE("beam width 1 is greedy decoding") {
  auto lm = toy_lm(99, 5);
  BeamConfig bc;
  bc.width = 1;
  bc.max_len = 6;
  bc.eos = -1;
  std::vector<int> beam = beam_search(lm, 5, bc);

  std::vector<int> greedy;
  for (int step = 0; step < 6; ++step) {
    auto lp = lm(greedy);
    int best = 0;
    for (int v = 1; v < 5; ++v)
      if (lp[v] > lp[best]) best = v;
    greedy.push_back(best);
  }
  CHECK(beam == greedy);
}

TEST_CASE("wide beam matches brute-force enumeration on the toy LM") {
  const int V = 4, T = 3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto lm = toy_lm(seed, V);
    BeamConfig bc;
    bc.width = 16;  // exhaustive at V=4, depth 3
    bc.max_len = T;
    bc.eos = -1;
    std::vector<int> beam = beam_search(lm, V, bc);

    std::vector<int> best;
    double best_score = -1e300;
    for (int a = 0; a < V; ++a)
      for (int b = 0; b < V; ++b)
        for (int c = 0; c < V; ++c) {
          std::vector<int> seq = {a, b, c};
          double s = lm({})[a] + lm({a})[b] + lm({a, b})[c];
          if (s > best_score) {
            best_score = s;
            best = seq;
          }
        }
    CHECK(beam == best);
  }
}

TEST_CASE("beam score is non-decreasing in the width") {
  const int V = 4, T = 3;
  auto lm = toy_lm(1234, V);
  auto score_of = [&](const std::vector<int>& seq) {
    double s = 0.0;
    std::vector<int> prefix;
    for (int t : seq) {
      s += lm(prefix)[t];
      prefix.push_back(t);
    }
    return s;
  };
  double prev = -1e300;
  for (int w = 1; w <= 8; ++w) {
    BeamConfig bc;
    bc.width = w;
    bc.max_len = T;
    bc.eos = -1;
    double s = score_of(beam_search(lm, V, bc));
    CHECK(s >= prev - 1e-12);
    prev = std::max(prev, s);
  }
}

TEST_CASE("eos terminates a hypothesis early") {
  // LM that overwhelmingly prefers eos (=2) at the first step.
  auto lm = [](const std::vector<int>& prefix) {
    std::vector<double> lp(4, -20.0);
    if (prefix.empty())
      lp[2] = -0.001;
    else
      lp[0] = -0.001;
    return lp;
  };
  BeamConfig bc;
  bc.width = 2;
  bc.max_len = 5;
  bc.eos = 2;
  std::vector<int> out = beam_search(lm, 4, bc);
  REQUIRE(!out.empty());
  CHECK(out.back() == 2);
  CHECK(out.size() == 1);
}

TEST_CASE("dataset-style beam width presets") {
  CHECK(default_beam_width("iu-xray") == 5);
  CHECK(default_beam_width("mimic") == 3);
  CHECK_THROWS(default_beam_width("other"));
}

}  // TEST_SUITE
