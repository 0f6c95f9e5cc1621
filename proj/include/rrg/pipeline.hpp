// End-to-end report generation pipeline: vision backbone + context
// retrieval + residual prompt + decoder, with training, generation, and
// evaluation entry points shared by the CLI and the tests.

#ifndef RRG_PIPELINE_HPP
#define RRG_PIPELINE_HPP

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rrg/data.hpp"
#include "rrg/decoder.hpp"
#include "rrg/metrics.hpp"
#include "rrg/prompt.hpp"
#include "rrg/retrieval.hpp"
#include "rrg/tokenizer.hpp"
#include "rrg/vision.hpp"

namespace rrg {

struct RunConfig {
  std::string data_dir;
  std::string out_dir;
  std::string dataset_style = "iu-xray";  // sets the default beam width

  // Model scale.
  VisionConfig vision;
  int embed = 32;
  int decoder_layers = 2;
  int decoder_state = 4;
  int mlp_hidden = 64;
  int context_window = 512;

  // Context retrieval.
  bool context_enabled = true;
  std::string strategy = "keyword";
  int n_pairs = 3;
  bool fixed_pair = true;
  std::string keyword = "Note";

  // Prompting / decoding.
  std::string template_name = "default";
  std::string template_file;  // optional override of the builtin set
  int beam_width = 0;         // 0 -> dataset-style default (5 / 3)
  int max_report_len = 32;
  double length_alpha = 0.7;

  // Training.
  std::uint64_t seed = 0;
  int epochs = 20;
  double learning_rate = 1e-4;
  std::string loss_reduction = "mean";
  bool freeze_backbone = false;

  int effective_beam_width() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
};

struct Dataset {
  std::vector<SampleRecord> records;
  std::map<std::string, int> by_id;
  std::map<std::string, Image> images;
  std::vector<std::string> train_ids, val_ids, test_ids;

  const SampleRecord& record(const std::string& id) const;
  const Image& image(const std::string& id) const;
  const std::vector<std::string>& split_ids(const std::string& split) const;
};

Dataset load_dataset(const std::string& data_dir);

// Vocabulary over the train reports plus the template's literal words, so
// prompt text never maps to unk.
Vocabulary build_model_vocab(const Dataset& ds, const PromptTemplate& tmpl);

struct ReportModel {
  RunConfig cfg;
  Vocabulary vocab;
  PromptTemplate tmpl;
  VisionBackbone backbone;
  LanguageProjection global_proj;  // C_hat -> E, shared by query and context
  SequentialTokenHead seq_head;    // produces the v_s token block
  Decoder decoder;
  std::vector<int> t_pre_ids, t_post_ids, disease_prompt_ids;

  static ReportModel init(const RunConfig& cfg, const Vocabulary& vocab,
                          const PromptTemplate& tmpl);
  NamedParams named_params() const;
  std::vector<ag::Tensor> trainable() const;  // honors freeze_backbone

  // Backbone + projections for one image; stage tag Raw before projection.
  ProjectedFeature projected_global(const Image& img) const;
  ag::Tensor sequential_tokens_of(const Image& img) const;  // [L,E]

  // Full prompt for a query sample, retrieving context from the index.
  ResidualPrompt build_prompt(const Dataset& ds, const ContextIndex* index,
                              const std::string& query_id,
                              std::uint64_t epoch) const;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;  // per-token (mean-reduced) loss
};

using ProgressFn = std::function<void(int epoch, double loss)>;

// Deterministic given cfg.seed. Throws on divergence (non-finite loss).
TrainResult train_model(ReportModel& model, const Dataset& ds,
                        const ProgressFn& progress = nullptr);

// Beam-search decoding of one sample's report token ids.
std::vector<int> generate_report_ids(const ReportModel& model, const Dataset& ds,
                                     const ContextIndex* index,
                                     const std::string& query_id);

struct GenerationResult {
  std::string id;
  std::string hypothesis;
  std::string reference;
};

std::vector<GenerationResult> generate_split(const ReportModel& model,
                                             const Dataset& ds,
                                             const std::string& split);

// Structured result file: {"samples": [{"id","hypothesis","reference"}]}.
void save_results(const std::vector<GenerationResult>& results,
                  const std::string& path);
std::vector<GenerationResult> load_results(const std::string& path);

MetricReport evaluate_results(const std::vector<GenerationResult>& results,
                              const MetricConfig& cfg = {});

// Model persistence: checkpoint + vocab + config echo under a directory.
void save_model(const ReportModel& model, const std::string& dir);
ReportModel load_model(const std::string& dir);

}  // namespace rrg

#endif
