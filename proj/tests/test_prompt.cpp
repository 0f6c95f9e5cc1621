#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "rrg/prompt.hpp"

using namespace rrg;
using ag::Tensor;

namespace {

GlobalFeature raw_feature2(const std::vector<double>& v) {
  GlobalFeature g;
  g.vec = Tensor::from(v, {static_cast<int>(v.size())});
  g.stage = FeatureStage::Raw;
  return g;
}

ProjectedFeature projected(const std::vector<double>& v) {
  ProjectedFeature p;
  p.vec = Tensor::from(v, {static_cast<int>(v.size())});
  p.stage = FeatureStage::Projected;
  return p;
}

}  // namespace

TEST_SUITE("prompt") {

TEST_CASE("projection of a zero feature with zero bias is zero") {
  std::mt19937_64 rng(1);
  LanguageProjection proj = LanguageProjection::init(4, 6, rng);
  ProjectedFeature out = project_to_language_space(raw_feature2({0, 0, 0, 0}), proj);
  CHECK(out.stage == FeatureStage::Projected);
  for (double v : out.vec.values()) CHECK(v == 0.0);
}

TEST_CASE("identity projection passes the feature through") {
  std::mt19937_64 rng(2);
  LanguageProjection proj = LanguageProjection::init(3, 3, rng);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) proj.W.values()[i * 3 + j] = i == j ? 1.0 : 0.0;
  ProjectedFeature out = project_to_language_space(raw_feature2({1.5, -2.0, 0.25}), proj);
  CHECK(out.vec.values()[0] == doctest::Approx(1.5));
  CHECK(out.vec.values()[1] == doctest::Approx(-2.0));
  CHECK(out.vec.values()[2] == doctest::Approx(0.25));
}

TEST_CASE("projection matches a hand matrix-vector product") {
  std::mt19937_64 rng(3);
  LanguageProjection proj = LanguageProjection::init(8, 16, rng);
  std::vector<double> x(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : x) v = u(rng);
  ProjectedFeature out = project_to_language_space(raw_feature2(x), proj);
  for (int e = 0; e < 16; ++e) {
    double want = proj.b.values()[e];
    for (int c = 0; c < 8; ++c) want += proj.W.values()[e * 8 + c] * x[c];
    CHECK(out.vec.values()[e] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("double projection is a stage error") {
  std::mt19937_64 rng(4);
  LanguageProjection proj = LanguageProjection::init(3, 3, rng);
  GlobalFeature g = raw_feature2({1, 2, 3});
  g.stage = FeatureStage::Projected;
  CHECK_THROWS_AS(project_to_language_space(g, proj), std::logic_error);
}

TEST_CASE("self-difference residuals vanish") {
  ProjectedFeature vg = projected({1.0, 2.0, 3.0});
  std::vector<Tensor> ctx = {vg.vec, vg.vec};
  Residuals r = compute_residuals(vg, ctx, ctx, Tensor());
  for (double v : r.pos.values()) CHECK(v == 0.0);
}

TEST_CASE("hand-checked residual subtraction") {
  ProjectedFeature vg = projected({1.0, 2.0});
  std::vector<Tensor> neg = {Tensor::from({0.0, 1.0}, {2})};
  std::vector<Tensor> pos = {Tensor::from({2.0, 2.0}, {2})};
  Tensor t = Tensor::from({1.0, 0.0}, {1, 2});
  Residuals r = compute_residuals(vg, pos, neg, t);
  CHECK(r.neg.values()[0] == doctest::Approx(1.0));
  CHECK(r.neg.values()[1] == doctest::Approx(1.0));
  CHECK(r.text.values()[0] == doctest::Approx(0.0));
  CHECK(r.text.values()[1] == doctest::Approx(2.0));
}

TEST_CASE("residual shapes follow the pair and prompt counts") {
  ProjectedFeature vg = projected({0.0, 0.0});
  std::vector<Tensor> three(3, Tensor::from({1.0, 1.0}, {2}));
  Tensor prompt2 = Tensor::zeros({2, 2});
  Residuals r = compute_residuals(vg, three, three, prompt2);
  CHECK(r.n_pairs() == 3);
  CHECK(r.prompt_tokens() == 2);
}

TEST_CASE("residuals negate when query and context swap") {
  ProjectedFeature vg = projected({2.0, -1.0});
  Tensor c = Tensor::from({0.5, 3.0}, {2});
  ProjectedFeature cg = projected({0.5, 3.0});
  Residuals a = compute_residuals(vg, {c}, {c}, Tensor());
  Residuals b = compute_residuals(cg, {vg.vec}, {vg.vec}, Tensor());
  for (int i = 0; i < 2; ++i)
    CHECK(a.pos.values()[i] == doctest::Approx(-b.pos.values()[i]));
}

TEST_CASE("width mismatches are rejected") {
  ProjectedFeature vg = projected({1.0, 2.0});
  std::vector<Tensor> bad = {Tensor::from({1.0, 2.0, 3.0}, {3})};
  CHECK_THROWS(compute_residuals(vg, bad, bad, Tensor()));
}

TEST_CASE("assembled prompt length follows the segment formula") {
  const int E = 4, n = 3, p = 2, pre = 12, L = 49, post = 3;
  ProjectedFeature vg = projected(std::vector<double>(E, 1.0));
  std::vector<Tensor> ctx(n, Tensor::zeros({E}));
  Residuals r = compute_residuals(vg, ctx, ctx, Tensor::zeros({p, E}));
  ResidualPrompt out = assemble_prompt(r, Tensor::zeros({pre, E}),
                                       Tensor::zeros({post, E}), Tensor::zeros({L, E}));
  CHECK(out.length() == 3 * p + 2 * n + pre + L + post);
  CHECK(out.length() == 76);
  // Segment map partitions [0, total) in the canonical order.
  REQUIRE(out.segments.size() == 8);
  CHECK(out.segments[0].name == "R_t");
  CHECK(out.segments[1].name == "R_v-");
  CHECK(out.segments[2].name == "R_t");
  CHECK(out.segments[3].name == "R_v+");
  CHECK(out.segments[4].name == "R_t");
  CHECK(out.segments[5].name == "T_pre");
  CHECK(out.segments[6].name == "v_s");
  CHECK(out.segments[7].name == "T_post");
  int cursor = 0;
  for (const auto& s : out.segments) {
    CHECK(s.begin == cursor);
    cursor = s.end;
  }
  CHECK(cursor == out.length());
}

TEST_CASE("disabled context drops the residual segments") {
  const int E = 4;
  Residuals r;  // n = 0
  ResidualPrompt out = assemble_prompt(r, Tensor::zeros({2, E}),
                                       Tensor::zeros({3, E}), Tensor::zeros({5, E}));
  CHECK(out.length() == 10);
  REQUIRE(out.segments.size() == 3);
  CHECK(out.segments[0].name == "T_pre");
  CHECK(out.segments[1].name == "v_s");
  CHECK(out.segments[2].name == "T_post");
}

TEST_CASE("empty v_s is rejected") {
  Residuals r;
  CHECK_THROWS(assemble_prompt(r, Tensor::zeros({2, 4}), Tensor::zeros({2, 4}),
                               Tensor()));
}

TEST_CASE("length law holds across a randomized config sweep") {
  std::mt19937_64 rng(17);
  const int E = 3;
  for (int it = 0; it < 100; ++it) {
    int n = static_cast<int>(rng() % 5);
    int p = 1 + static_cast<int>(rng() % 4);
    int pre = static_cast<int>(rng() % 20);
    int L = 1 + static_cast<int>(rng() % 64);
    int post = static_cast<int>(rng() % 20);
    Residuals r;
    if (n > 0) {
      ProjectedFeature vg = projected(std::vector<double>(E, 0.5));
      std::vector<Tensor> ctx(n, Tensor::zeros({E}));
      r = compute_residuals(vg, ctx, ctx, Tensor::zeros({p, E}));
    }
    ResidualPrompt out = assemble_prompt(
        r, pre ? Tensor::zeros({pre, E}) : Tensor(),
        post ? Tensor::zeros({post, E}) : Tensor(), Tensor::zeros({L, E}));
    int want = (n > 0 ? 3 * p + 2 * n : 0) + pre + L + post;
    CHECK(out.length() == want);
  }
}

TEST_CASE("default template text and instruction") {
  PromptTemplate t = default_template();
  std::string rendered = t.rendered_text();
  CHECK(rendered.find("Note: <Img V_G> normal.") != std::string::npos);
  CHECK(rendered.find("Note: <Img V_G> with disease.") != std::string::npos);
  CHECK(rendered.find("Generate a comprehensive and detailed diagnosis report "
                      "for this chest xray image.") != std::string::npos);
  CHECK(t.disease_prompt == "With disease");
}

TEST_CASE("template literals split into pre and post halves around v_s") {
  PromptTemplate t = default_template();
  auto pre = t.t_pre_words();
  auto post = t.t_post_words();
  CHECK(!pre.empty());
  CHECK(pre.front() == "note");
  // Image markers never become tokens.
  for (const auto& w : pre) CHECK(w.find('<') == std::string::npos);
  // The instruction lands after v_s.
  CHECK(!post.empty());
  CHECK(post.front() == "generate");
  CHECK(post.back() == ".");
}

TEST_CASE("builtin template set loads and finds by name") {
  auto ts = builtin_templates();
  CHECK(ts.size() >= 5);
  CHECK(find_template(ts, "observation").layout.find("Observation:") !=
        std::string::npos);
  CHECK_THROWS(find_template(ts, "nope"));
}

TEST_CASE("templates round trip through a JSON file") {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "rrg_templates.json";
  {
    std::ofstream f(p);
    f << R"({"templates":[{"name":"x","layout":"{R_t} {R_v-} {R_t} {R_v+} {R_t} hi {v_s} {T}","instruction":"Do the thing.","disease_prompt":"Sick"}]})";
  }
  auto ts = load_templates(p.string());
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].name == "x");
  CHECK(ts[0].disease_prompt == "Sick");
  CHECK(ts[0].t_pre_words() == std::vector<std::string>{"hi"});
}

}  // TEST_SUITE
