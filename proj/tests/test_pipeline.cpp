#include <filesystem>

#include "doctest.h"
#include "rrg/pipeline.hpp"

using namespace rrg;
namespace fs = std::filesystem;

namespace {

std::string make_tiny_dataset(const std::string& name, int samples = 20) {
  fs::path dir = fs::temp_directory_path() / ("rrg_pipe_" + name);
  fs::remove_all(dir);
  SyntheticConfig cfg;
  cfg.sample_count = samples;
  cfg.image_size = 16;
  cfg.seed = 42;
  cfg.out_dir = dir.string();
  write_synthetic_dataset(cfg);
  return dir.string();
}

RunConfig tiny_run(const std::string& data_dir) {
  RunConfig cfg;
  cfg.data_dir = data_dir;
  cfg.vision.patch = 8;
  cfg.vision.stage_channels = {8, 8};
  cfg.vision.blocks_per_stage = 1;
  cfg.vision.d_state = 2;
  cfg.embed = 16;
  cfg.decoder_layers = 1;
  cfg.decoder_state = 2;
  cfg.mlp_hidden = 32;
  cfg.context_window = 256;
  cfg.n_pairs = 1;
  cfg.epochs = 2;
  cfg.max_report_len = 16;
  return cfg;
}

ReportModel make_model(const RunConfig& cfg, const Dataset& ds) {
  PromptTemplate tmpl = find_template(builtin_templates(), cfg.template_name);
  Vocabulary vocab = build_model_vocab(ds, tmpl);
  return ReportModel::init(cfg, vocab, tmpl);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("run config round trips through json") {
  RunConfig cfg;
  cfg.data_dir = "/tmp/d";
  cfg.dataset_style = "mimic";
  cfg.embed = 48;
  cfg.vision.stage_channels = {8, 16, 24};
  cfg.context_enabled = false;
  cfg.strategy = "label";
  cfg.n_pairs = 7;
  cfg.fixed_pair = false;
  cfg.template_name = "observation";
  cfg.beam_width = 9;
  cfg.seed = 123456789ull;
  cfg.learning_rate = 5e-3;
  cfg.loss_reduction = "sum";
  cfg.freeze_backbone = true;

  RunConfig back = RunConfig::from_json(cfg.to_json());
  CHECK(back.data_dir == cfg.data_dir);
  CHECK(back.dataset_style == cfg.dataset_style);
  CHECK(back.embed == cfg.embed);
  CHECK(back.vision.stage_channels == cfg.vision.stage_channels);
  CHECK(back.context_enabled == cfg.context_enabled);
  CHECK(back.strategy == cfg.strategy);
  CHECK(back.n_pairs == cfg.n_pairs);
  CHECK(back.fixed_pair == cfg.fixed_pair);
  CHECK(back.template_name == cfg.template_name);
  CHECK(back.beam_width == cfg.beam_width);
  CHECK(back.seed == cfg.seed);
  CHECK(back.learning_rate == cfg.learning_rate);
  CHECK(back.loss_reduction == cfg.loss_reduction);
  CHECK(back.freeze_backbone == cfg.freeze_backbone);
}

TEST_CASE("beam width falls back to the dataset-style default") {
  RunConfig cfg;
  cfg.dataset_style = "iu-xray";
  CHECK(cfg.effective_beam_width() == 5);
  cfg.dataset_style = "mimic";
  CHECK(cfg.effective_beam_width() == 3);
  cfg.beam_width = 9;
  CHECK(cfg.effective_beam_width() == 9);
}

TEST_CASE("dataset loads with a 7:1:2 split and id lookup") {
  std::string dir = make_tiny_dataset("load", 20);
  Dataset ds = load_dataset(dir);
  CHECK(ds.records.size() == 20);
  CHECK(ds.train_ids.size() == 14);
  CHECK(ds.val_ids.size() == 2);
  CHECK(ds.test_ids.size() == 4);
  const std::string& id = ds.train_ids[0];
  CHECK(ds.record(id).id == id);
  CHECK(ds.image(id).height == 16);
  CHECK_THROWS(ds.record("nope"));
}

TEST_CASE("model vocabulary covers the prompt text") {
  std::string dir = make_tiny_dataset("vocab", 20);
  Dataset ds = load_dataset(dir);
  PromptTemplate tmpl = default_template();
  Vocabulary vocab = build_model_vocab(ds, tmpl);
  for (const auto& w : tmpl.t_pre_words())
    CHECK(vocab.id(w) != Vocabulary::kUnk);
  for (const auto& w : tmpl.t_post_words())
    CHECK(vocab.id(w) != Vocabulary::kUnk);
  for (const auto& w : tokenize(tmpl.disease_prompt))
    CHECK(vocab.id(w) != Vocabulary::kUnk);
  for (const auto& id : ds.train_ids)
    for (const auto& w : tokenize(ds.record(id).report))
      CHECK(vocab.id(w) != Vocabulary::kUnk);
}

TEST_CASE("zero learning rate keeps the loss constant") {
  std::string dir = make_tiny_dataset("lr0", 20);
  Dataset ds = load_dataset(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  ReportModel model = make_model(cfg, ds);
  TrainResult tr = train_model(model, ds);
  REQUIRE(tr.epoch_mean_loss.size() == 2);
  CHECK(tr.epoch_mean_loss[0] ==
        doctest::Approx(tr.epoch_mean_loss[1]).epsilon(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed") {
  std::string dir = make_tiny_dataset("det", 20);
  Dataset ds = load_dataset(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.epochs = 2;
  ReportModel m1 = make_model(cfg, ds);
  ReportModel m2 = make_model(cfg, ds);
  TrainResult t1 = train_model(m1, ds);
  TrainResult t2 = train_model(m2, ds);
  CHECK(t1.epoch_mean_loss == t2.epoch_mean_loss);

  ContextIndex idx =
      build_index(ds.records, parse_strategy(cfg.strategy), cfg.seed, cfg.keyword);
  std::vector<int> g1 = generate_report_ids(m1, ds, &idx, ds.val_ids[0]);
  std::vector<int> g2 = generate_report_ids(m2, ds, &idx, ds.val_ids[0]);
  CHECK(g1 == g2);
}

TEST_CASE("results round trip through the json file") {
  std::vector<GenerationResult> results = {
      {"a", "the lungs are clear", "the lungs are clear"},
      {"b", "there is edema", "no edema seen"}};
  fs::path p = fs::temp_directory_path() / "rrg_results.json";
  save_results(results, p.string());
  auto back = load_results(p.string());
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].id == results[i].id);
    CHECK(back[i].hypothesis == results[i].hypothesis);
    CHECK(back[i].reference == results[i].reference);
  }
}

TEST_CASE("evaluating perfect generations yields the fixed-point scores") {
  std::vector<GenerationResult> results = {
      {"a", "alpha beta gamma delta", "alpha beta gamma delta"},
      {"b", "eps zeta eta theta", "eps zeta eta theta"}};
  MetricReport r = evaluate_results(results);
  for (double b : r.bleu) CHECK(b == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.rouge_l == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.cider == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(r.corpus_size == 2);
}

TEST_CASE("saved model reloads with identical parameters and outputs") {
  std::string dir = make_tiny_dataset("save", 20);
  Dataset ds = load_dataset(dir);
  RunConfig cfg = tiny_run(dir);
  cfg.epochs = 1;
  ReportModel model = make_model(cfg, ds);
  train_model(model, ds);

  fs::path mdir = fs::temp_directory_path() / "rrg_model_dir";
  fs::remove_all(mdir);
  save_model(model, mdir.string());
  ReportModel back = load_model(mdir.string());

  NamedParams pa = model.named_params();
  NamedParams pb = back.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values() == pb[i].second.values());
  }
  CHECK(back.vocab.size() == model.vocab.size());
  ContextIndex idx =
      build_index(ds.records, parse_strategy(cfg.strategy), cfg.seed, cfg.keyword);
  std::vector<int> g1 = generate_report_ids(model, ds, &idx, ds.val_ids[0]);
  std::vector<int> g2 = generate_report_ids(back, ds, &idx, ds.val_ids[0]);
  CHECK(g1 == g2);
}

}  // TEST_SUITE
