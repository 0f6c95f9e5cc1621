// Command-line front end: synth-data, train, generate, evaluate, bench.
// Every command writes a config echo next to its outputs so a run can be
// reproduced exactly.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "rrg/bench.hpp"
#include "rrg/data.hpp"
#include "rrg/metrics.hpp"
#include "rrg/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path().empty()
                             ? "."
                             : fs::path(path).parent_path().string());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

// Shared RunConfig plumbing: start from --config (if given), then let
// explicit flags override individual fields.
struct RunArgs {
  std::string config_file;
  rrg::RunConfig cfg;

  void add_options(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file");
    app->add_option("--data", cfg.data_dir, "dataset directory");
    app->add_option("--out", cfg.out_dir, "output directory");
    app->add_option("--dataset-style", cfg.dataset_style,
                    "iu-xray or mimic (sets default beam width)");
    app->add_option("--embed", cfg.embed);
    app->add_option("--decoder-layers", cfg.decoder_layers);
    app->add_option("--epochs", cfg.epochs);
    app->add_option("--lr", cfg.learning_rate);
    app->add_option("--seed", cfg.seed);
    app->add_option("--strategy", cfg.strategy, "label | keyword | random");
    app->add_option("--n-pairs", cfg.n_pairs);
    app->add_flag("--fixed-pair,!--no-fixed-pair", cfg.fixed_pair);
    app->add_flag("--context,!--no-context", cfg.context_enabled);
    app->add_option("--template", cfg.template_name);
    app->add_option("--template-file", cfg.template_file);
    app->add_option("--beam", cfg.beam_width, "0 = dataset-style default");
    app->add_option("--max-report-len", cfg.max_report_len);
  }

  rrg::RunConfig resolve(CLI::App* app) {
    if (config_file.empty()) return cfg;
    rrg::RunConfig base = rrg::RunConfig::from_json(read_file(config_file));
    // Re-apply only flags the user actually passed.
    rrg::RunConfig flags = cfg;
    auto passed = [&](const std::string& name) {
      return app->count(name) > 0;
    };
    if (passed("--data")) base.data_dir = flags.data_dir;
    if (passed("--out")) base.out_dir = flags.out_dir;
    if (passed("--dataset-style")) base.dataset_style = flags.dataset_style;
    if (passed("--embed")) base.embed = flags.embed;
    if (passed("--decoder-layers")) base.decoder_layers = flags.decoder_layers;
    if (passed("--epochs")) base.epochs = flags.epochs;
    if (passed("--lr")) base.learning_rate = flags.learning_rate;
    if (passed("--seed")) base.seed = flags.seed;
    if (passed("--strategy")) base.strategy = flags.strategy;
    if (passed("--n-pairs")) base.n_pairs = flags.n_pairs;
    if (passed("--fixed-pair") || passed("--no-fixed-pair"))
      base.fixed_pair = flags.fixed_pair;
    if (passed("--context") || passed("--no-context"))
      base.context_enabled = flags.context_enabled;
    if (passed("--template")) base.template_name = flags.template_name;
    if (passed("--template-file")) base.template_file = flags.template_file;
    if (passed("--beam")) base.beam_width = flags.beam_width;
    if (passed("--max-report-len")) base.max_report_len = flags.max_report_len;
    return base;
  }
};

rrg::PromptTemplate pick_template(const rrg::RunConfig& cfg) {
  std::vector<rrg::PromptTemplate> ts = cfg.template_file.empty()
                                            ? rrg::builtin_templates()
                                            : rrg::load_templates(cfg.template_file);
  return rrg::find_template(ts, cfg.template_name);
}

int cmd_synth_data(const rrg::SyntheticConfig& sc) {
  rrg::write_synthetic_dataset(sc);
  nlohmann::json echo = {{"sample_count", sc.sample_count},
                         {"image_size", sc.image_size},
                         {"prevalence", sc.prevalence},
                         {"seed", sc.seed},
                         {"out_dir", sc.out_dir}};
  write_file((fs::path(sc.out_dir) / "synth_config.json").string(),
             echo.dump(2) + "\n");
  std::cout << "wrote " << sc.sample_count << " samples to " << sc.out_dir
            << "\n";
  return 0;
}

int cmd_train(rrg::RunConfig cfg) {
  if (cfg.data_dir.empty() || !fs::exists(cfg.data_dir)) {
    std::cerr << "train: missing or nonexistent --data directory\n";
    return 1;
  }
  if (cfg.out_dir.empty()) {
    std::cerr << "train: --out is required\n";
    return 1;
  }
  rrg::Dataset ds = rrg::load_dataset(cfg.data_dir);
  rrg::PromptTemplate tmpl = pick_template(cfg);
  rrg::Vocabulary vocab = rrg::build_model_vocab(ds, tmpl);
  rrg::ReportModel model = rrg::ReportModel::init(cfg, vocab, tmpl);
  std::ostringstream log;
  rrg::TrainResult tr = rrg::train_model(model, ds, [&](int epoch, double loss) {
    std::cout << "epoch " << epoch << " loss " << loss << "\n";
    log << epoch << "\t" << loss << "\n";
  });
  rrg::save_model(model, cfg.out_dir);
  write_file((fs::path(cfg.out_dir) / "train_log.tsv").string(), log.str());
  std::cout << "final loss " << tr.epoch_mean_loss.back() << ", model saved to "
            << cfg.out_dir << "\n";
  return 0;
}

int cmd_generate(const std::string& model_dir, const std::string& data_dir,
                 const std::string& split, const std::string& out_path) {
  if (!fs::exists(model_dir)) {
    std::cerr << "generate: model directory not found: " << model_dir << "\n";
    return 1;
  }
  rrg::ReportModel model = rrg::load_model(model_dir);
  std::string data = data_dir.empty() ? model.cfg.data_dir : data_dir;
  if (data.empty() || !fs::exists(data)) {
    std::cerr << "generate: dataset directory not found: " << data << "\n";
    return 1;
  }
  rrg::Dataset ds = rrg::load_dataset(data);
  auto results = rrg::generate_split(model, ds, split);
  rrg::save_results(results, out_path);
  write_file(out_path + ".config.json", model.cfg.to_json() + "\n");
  std::cout << "wrote " << results.size() << " results to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& results_path, const std::string& out_path) {
  if (!fs::exists(results_path)) {
    std::cerr << "evaluate: results file not found: " << results_path << "\n";
    return 1;
  }
  auto results = rrg::load_results(results_path);
  rrg::MetricReport report = rrg::evaluate_results(results);
  std::string j = rrg::metric_report_json(report);
  std::cout << j << "\n";
  if (!out_path.empty()) write_file(out_path, j + "\n");
  return 0;
}

int cmd_bench(rrg::BenchConfig bc, const std::string& out_path) {
  auto records = rrg::bench_scan_vs_attention(bc);
  std::cout << rrg::bench_table(records);
  if (!out_path.empty()) {
    write_file(out_path, rrg::bench_json(records) + "\n");
    nlohmann::json echo = {{"lengths", bc.lengths}, {"repeats", bc.repeats},
                           {"warmup", bc.warmup},   {"d", bc.d},
                           {"n_state", bc.n_state}, {"seed", bc.seed}};
    write_file(out_path + ".config.json", echo.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radiology report generation toolkit"};
  app.require_subcommand(1);

  rrg::SyntheticConfig sc;
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
  synth->add_option("--out", sc.out_dir, "output directory")->required();
  synth->add_option("--count", sc.sample_count);
  synth->add_option("--size", sc.image_size);
  synth->add_option("--prevalence", sc.prevalence);
  synth->add_option("--seed", sc.seed);

  auto* train = app.add_subcommand("train", "train a report model");
  RunArgs train_args;
  train_args.add_options(train);

  auto* gen = app.add_subcommand("generate", "decode reports for a split");
  std::string model_dir, gen_data, gen_split = "test", gen_out = "results.json";
  gen->add_option("--model", model_dir, "trained model directory")->required();
  gen->add_option("--data", gen_data, "dataset directory (default: from config)");
  gen->add_option("--split", gen_split, "train | val | test");
  gen->add_option("--out", gen_out, "results file");

  auto* eval = app.add_subcommand("evaluate", "score a results file");
  std::string eval_results, eval_out;
  eval->add_option("--results", eval_results)->required();
  eval->add_option("--out", eval_out, "metric report file");

  auto* bench = app.add_subcommand("bench", "scan vs attention timing");
  rrg::BenchConfig bc;
  std::string bench_out;
  bench->add_option("--lengths", bc.lengths, "sequence lengths, ascending");
  bench->add_option("--repeats", bc.repeats);
  bench->add_option("--warmup", bc.warmup);
  bench->add_option("--d", bc.d, "channel width");
  bench->add_option("--n-state", bc.n_state, "scan states per channel");
  bench->add_option("--seed", bc.seed);
  bench->add_option("--out", bench_out, "JSON records file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_data(sc);
    if (train->parsed()) return cmd_train(train_args.resolve(train));
    if (gen->parsed()) return cmd_generate(model_dir, gen_data, gen_split, gen_out);
    if (eval->parsed()) return cmd_evaluate(eval_results, eval_out);
    if (bench->parsed()) return cmd_bench(bc, bench_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
