#include "rrg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rrg/checkpoint.hpp"

namespace rrg {

namespace fs = std::filesystem;
using ag::Tensor;
using nlohmann::json;

int RunConfig::effective_beam_width() const {
  return beam_width > 0 ? beam_width : default_beam_width(dataset_style);
}

std::string RunConfig::to_json() const {
  json j;
  j["data_dir"] = data_dir;
  j["out_dir"] = out_dir;
  j["dataset_style"] = dataset_style;
  j["vision"] = {{"in_channels", vision.in_channels},
                 {"patch", vision.patch},
                 {"stage_channels", vision.stage_channels},
                 {"blocks_per_stage", vision.blocks_per_stage},
                 {"expand", vision.expand},
                 {"d_state", vision.d_state}};
  j["embed"] = embed;
  j["decoder_layers"] = decoder_layers;
  j["decoder_state"] = decoder_state;
  j["mlp_hidden"] = mlp_hidden;
  j["context_window"] = context_window;
  j["context_enabled"] = context_enabled;
  j["strategy"] = strategy;
  j["n_pairs"] = n_pairs;
  j["fixed_pair"] = fixed_pair;
  j["keyword"] = keyword;
  j["template_name"] = template_name;
  j["template_file"] = template_file;
  j["beam_width"] = beam_width;
  j["max_report_len"] = max_report_len;
  j["length_alpha"] = length_alpha;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["learning_rate"] = learning_rate;
  j["loss_reduction"] = loss_reduction;
  j["freeze_backbone"] = freeze_backbone;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig c;
  c.data_dir = j.value("data_dir", c.data_dir);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.dataset_style = j.value("dataset_style", c.dataset_style);
  if (j.contains("vision")) {
    const auto& v = j["vision"];
    c.vision.in_channels = v.value("in_channels", c.vision.in_channels);
    c.vision.patch = v.value("patch", c.vision.patch);
    c.vision.stage_channels =
        v.value("stage_channels", c.vision.stage_channels);
    c.vision.blocks_per_stage = v.value("blocks_per_stage", c.vision.blocks_per_stage);
    c.vision.expand = v.value("expand", c.vision.expand);
    c.vision.d_state = v.value("d_state", c.vision.d_state);
  }
  c.embed = j.value("embed", c.embed);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.decoder_state = j.value("decoder_state", c.decoder_state);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.context_window = j.value("context_window", c.context_window);
  c.context_enabled = j.value("context_enabled", c.context_enabled);
  c.strategy = j.value("strategy", c.strategy);
  c.n_pairs = j.value("n_pairs", c.n_pairs);
  c.fixed_pair = j.value("fixed_pair", c.fixed_pair);
  c.keyword = j.value("keyword", c.keyword);
  c.template_name = j.value("template_name", c.template_name);
  c.template_file = j.value("template_file", c.template_file);
  c.beam_width = j.value("beam_width", c.beam_width);
  c.max_report_len = j.value("max_report_len", c.max_report_len);
  c.length_alpha = j.value("length_alpha", c.length_alpha);
  c.seed = j.value("seed", c.seed);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.loss_reduction = j.value("loss_reduction", c.loss_reduction);
  c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
  return c;
}

const SampleRecord& Dataset::record(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw std::invalid_argument("unknown sample id: " + id);
  return records[it->second];
}

const Image& Dataset::image(const std::string& id) const {
  auto it = images.find(id);
  if (it == images.end()) throw std::invalid_argument("no image for id: " + id);
  return it->second;
}

const std::vector<std::string>& Dataset::split_ids(const std::string& split) const {
  if (split == "train") return train_ids;
  if (split == "val") return val_ids;
  if (split == "test") return test_ids;
  throw std::invalid_argument("unknown split: " + split);
}

Dataset load_dataset(const std::string& data_dir) {
  Dataset ds;
  ds.records = load_manifest((fs::path(data_dir) / "manifest.tsv").string());
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    ds.by_id[r.id] = static_cast<int>(i);
    ds.images[r.id] = load_image((fs::path(data_dir) / r.image_path).string());
    if (r.split == "train")
      ds.train_ids.push_back(r.id);
    else if (r.split == "val")
      ds.val_ids.push_back(r.id);
    else
      ds.test_ids.push_back(r.id);
  }
  return ds;
}

Vocabulary build_model_vocab(const Dataset& ds, const PromptTemplate& tmpl) {
  std::vector<std::string> texts;
  for (const auto& id : ds.train_ids) texts.push_back(ds.record(id).report);
  std::string tmpl_words;
  for (const auto& w : tmpl.t_pre_words()) tmpl_words += w + " ";
  for (const auto& w : tmpl.t_post_words()) tmpl_words += w + " ";
  tmpl_words += tmpl.disease_prompt;
  texts.push_back(tmpl_words);
  return Vocabulary::build(texts);
}

ReportModel ReportModel::init(const RunConfig& cfg, const Vocabulary& vocab,
                              const PromptTemplate& tmpl) {
  ReportModel m;
  m.cfg = cfg;
  m.vocab = vocab;
  m.tmpl = tmpl;
  std::mt19937_64 rng(cfg.seed);
  m.backbone = VisionBackbone::init(cfg.vision, rng);
  const int c_hat = cfg.vision.stage_channels.back();
  m.global_proj = LanguageProjection::init(c_hat, cfg.embed, rng);
  m.seq_head = SequentialTokenHead::init(c_hat, cfg.embed, rng);
  DecoderConfig dc;
  dc.vocab = vocab.size();
  dc.embed = cfg.embed;
  dc.layers = cfg.decoder_layers;
  dc.context_window = cfg.context_window;
  dc.d_state = cfg.decoder_state;
  dc.mlp_hidden = cfg.mlp_hidden;
  m.decoder = Decoder::init(dc, rng);
  for (const auto& w : tmpl.t_pre_words()) m.t_pre_ids.push_back(vocab.id(w));
  for (const auto& w : tmpl.t_post_words()) m.t_post_ids.push_back(vocab.id(w));
  for (const auto& w : tokenize(tmpl.disease_prompt))
    m.disease_prompt_ids.push_back(vocab.id(w));
  return m;
}

NamedParams ReportModel::named_params() const {
  NamedParams out;
  backbone.collect(out, "backbone");
  global_proj.collect(out, "global_proj");
  seq_head.collect(out, "seq_head");
  decoder.collect(out, "decoder");
  return out;
}

std::vector<ag::Tensor> ReportModel::trainable() const {
  NamedParams named;
  if (!cfg.freeze_backbone) backbone.collect(named, "backbone");
  global_proj.collect(named, "global_proj");
  seq_head.collect(named, "seq_head");
  decoder.collect(named, "decoder");
  return param_tensors(named);
}

ProjectedFeature ReportModel::projected_global(const Image& img) const {
  FeatureMap fm = backbone.forward(img);
  return project_to_language_space(global_pool(fm), global_proj);
}

ag::Tensor ReportModel::sequential_tokens_of(const Image& img) const {
  return seq_head.forward(backbone.forward(img));
}

ResidualPrompt ReportModel::build_prompt(const Dataset& ds,
                                         const ContextIndex* index,
                                         const std::string& query_id,
                                         std::uint64_t epoch) const {
  const Image& img = ds.image(query_id);
  FeatureMap fm = backbone.forward(img);
  ProjectedFeature v_g = project_to_language_space(global_pool(fm), global_proj);
  Tensor v_s = seq_head.forward(fm);

  Residuals residuals;
  if (cfg.context_enabled && cfg.n_pairs > 0) {
    if (index == nullptr)
      throw std::invalid_argument("build_prompt: context enabled but no index");
    ContextSampleSet ctx = retrieve(*index, query_id, cfg.n_pairs,
                                    cfg.fixed_pair, cfg.seed, epoch);
    std::vector<Tensor> pos, neg;
    // Context features are recomputed with the current backbone weights.
    for (const auto& id : ctx.positives)
      pos.push_back(projected_global(ds.image(id)).vec);
    for (const auto& id : ctx.negatives)
      neg.push_back(projected_global(ds.image(id)).vec);
    Tensor prompt_tokens = decoder.embed_ids(disease_prompt_ids);
    residuals = compute_residuals(v_g, pos, neg, prompt_tokens);
  }
  Tensor t_pre = decoder.embed_ids(t_pre_ids);
  Tensor t_post = decoder.embed_ids(t_post_ids);
  return assemble_prompt(residuals, t_pre, t_post, v_s);
}

namespace {

struct TrainingExample {
  Tensor input;  // [P + T + 1, E]
  std::vector<int> targets;
  std::vector<double> mask;
};

TrainingExample make_example(const ReportModel& model, const ResidualPrompt& prompt,
                             const std::vector<int>& report_ids) {
  const int P = prompt.length();
  const int T = static_cast<int>(report_ids.size());
  std::vector<int> decoder_tail;
  decoder_tail.push_back(Vocabulary::kBos);
  decoder_tail.insert(decoder_tail.end(), report_ids.begin(), report_ids.end());
  Tensor tail = model.decoder.embed_ids(decoder_tail);  // [T+1, E]

  TrainingExample ex;
  ex.input = ag::concat_rows({prompt.embeds, tail});
  ex.targets.assign(P + T + 1, 0);
  ex.mask.assign(P + T + 1, 0.0);
  // Logits at the bos position (P) predict report token 0, each report
  // position predicts its successor, and the last one predicts eos. Prompt
  // positions stay masked.
  for (int i = 0; i <= T; ++i) {
    ex.targets[P + i] = i < T ? report_ids[i] : Vocabulary::kEos;
    ex.mask[P + i] = 1.0;
  }
  return ex;
}

}  // namespace

TrainResult train_model(ReportModel& model, const Dataset& ds,
                        const ProgressFn& progress) {
  const RunConfig& cfg = model.cfg;
  if (ds.train_ids.empty())
    throw std::invalid_argument("train_model: empty train split");

  ContextIndex index;
  const ContextIndex* index_ptr = nullptr;
  if (cfg.context_enabled && cfg.n_pairs > 0) {
    index = build_index(ds.records, parse_strategy(cfg.strategy), cfg.seed,
                        cfg.keyword);
    index_ptr = &index;
  }

  auto params = model.trainable();
  ag::Adam opt;
  opt.lr = cfg.learning_rate;
  ag::LossReduction reduction = cfg.loss_reduction == "sum"
                                    ? ag::LossReduction::Sum
                                    : ag::LossReduction::Mean;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::string> order = ds.train_ids;
    std::mt19937_64 shuffle_rng(cfg.seed ^ (0x5851f42d4c957f2dull * (epoch + 1)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng() % i]);

    double loss_sum = 0.0;
    double token_count = 0.0;
    for (const auto& id : order) {
      const auto& rec = ds.record(id);
      std::vector<int> report_ids = model.vocab.encode(rec.report);
      ResidualPrompt prompt = model.build_prompt(ds, index_ptr, id, epoch);
      TrainingExample ex = make_example(model, prompt, report_ids);
      Tensor logits = model.decoder.forward_embeds(ex.input);
      Tensor loss = decoder_loss(logits, ex.targets, ex.mask, reduction);
      double masked = 0.0;
      for (double m : ex.mask) masked += m;
      double per_token = reduction == ag::LossReduction::Mean
                             ? loss.item()
                             : loss.item() / masked;
      if (!std::isfinite(per_token))
        throw std::runtime_error("train_model: loss diverged (non-finite)");
      loss_sum += per_token * masked;
      token_count += masked;
      ag::zero_grad(params);
      ag::backward(loss);
      opt.step(params);
    }
    double epoch_loss = loss_sum / token_count;
    result.epoch_mean_loss.push_back(epoch_loss);
    if (progress) progress(epoch, epoch_loss);
  }
  return result;
}

std::vector<int> generate_report_ids(const ReportModel& model, const Dataset& ds,
                                     const ContextIndex* index,
                                     const std::string& query_id) {
  ResidualPrompt prompt = model.build_prompt(ds, index, query_id, 0);
  BeamConfig bc;
  bc.width = model.cfg.effective_beam_width();
  bc.max_len = model.cfg.max_report_len;
  bc.length_alpha = model.cfg.length_alpha;
  bc.eos = Vocabulary::kEos;
  const int V = model.vocab.size();

  auto next_logprobs = [&](const std::vector<int>& partial) {
    std::vector<int> tail;
    tail.push_back(Vocabulary::kBos);
    tail.insert(tail.end(), partial.begin(), partial.end());
    Tensor input = ag::concat_rows({prompt.embeds, model.decoder.embed_ids(tail)});
    Tensor logits = model.decoder.forward_embeds(input);
    const int last = logits.dim(0) - 1;
    std::vector<double> lp(V);
    double mx = -1e300;
    for (int v = 0; v < V; ++v) mx = std::max(mx, logits.data()[last * V + v]);
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(logits.data()[last * V + v] - mx);
    for (int v = 0; v < V; ++v)
      lp[v] = logits.data()[last * V + v] - mx - std::log(z);
    return lp;
  };
  std::vector<int> out = beam_search(next_logprobs, V, bc);
  if (!out.empty() && out.back() == Vocabulary::kEos) out.pop_back();
  return out;
}

std::vector<GenerationResult> generate_split(const ReportModel& model,
                                             const Dataset& ds,
                                             const std::string& split) {
  ContextIndex index;
  const ContextIndex* index_ptr = nullptr;
  if (model.cfg.context_enabled && model.cfg.n_pairs > 0) {
    index = build_index(ds.records, parse_strategy(model.cfg.strategy),
                        model.cfg.seed, model.cfg.keyword);
    index_ptr = &index;
  }
  std::vector<GenerationResult> out;
  for (const auto& id : ds.split_ids(split)) {
    GenerationResult g;
    g.id = id;
    g.hypothesis = model.vocab.decode(generate_report_ids(model, ds, index_ptr, id));
    g.reference = ds.record(id).report;
    out.push_back(std::move(g));
  }
  return out;
}

void save_results(const std::vector<GenerationResult>& results,
                  const std::string& path) {
  json j;
  j["samples"] = json::array();
  for (const auto& r : results)
    j["samples"].push_back(
        {{"id", r.id}, {"hypothesis", r.hypothesis}, {"reference", r.reference}});
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_results: cannot open " + path);
  f << j.dump(2) << "\n";
}

std::vector<GenerationResult> load_results(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_results: cannot open " + path);
  json j;
  f >> j;
  std::vector<GenerationResult> out;
  for (const auto& e : j.at("samples"))
    out.push_back({e.at("id").get<std::string>(),
                   e.at("hypothesis").get<std::string>(),
                   e.at("reference").get<std::string>()});
  return out;
}

MetricReport evaluate_results(const std::vector<GenerationResult>& results,
                              const MetricConfig& cfg) {
  std::vector<EvalPair> corpus;
  for (const auto& r : results)
    corpus.push_back(make_eval_pair(r.id, r.hypothesis, {r.reference}));
  return evaluate_corpus(corpus, cfg);
}

void save_model(const ReportModel& model, const std::string& dir) {
  fs::create_directories(dir);
  NamedParams params = model.named_params();
  save_checkpoint(params, (fs::path(dir) / "checkpoint.bin").string());
  json vj;
  vj["words"] = model.vocab.id_to_word;
  std::ofstream vf(fs::path(dir) / "vocab.json");
  vf << vj.dump() << "\n";
  std::ofstream cf(fs::path(dir) / "config.json");
  cf << model.cfg.to_json() << "\n";
  json tj;
  tj["templates"] = json::array();
  tj["templates"].push_back({{"name", model.tmpl.name},
                             {"layout", model.tmpl.layout},
                             {"instruction", model.tmpl.instruction},
                             {"disease_prompt", model.tmpl.disease_prompt}});
  std::ofstream tf(fs::path(dir) / "template.json");
  tf << tj.dump(2) << "\n";
}

ReportModel load_model(const std::string& dir) {
  std::ifstream cf(fs::path(dir) / "config.json");
  if (!cf) throw std::runtime_error("load_model: missing config.json in " + dir);
  std::string text((std::istreambuf_iterator<char>(cf)),
                   std::istreambuf_iterator<char>());
  RunConfig cfg = RunConfig::from_json(text);

  std::ifstream vf(fs::path(dir) / "vocab.json");
  if (!vf) throw std::runtime_error("load_model: missing vocab.json in " + dir);
  json vj;
  vf >> vj;
  Vocabulary vocab;
  vocab.id_to_word = vj.at("words").get<std::vector<std::string>>();
  for (int i = 0; i < vocab.size(); ++i) vocab.word_to_id[vocab.id_to_word[i]] = i;

  auto templates = load_templates((fs::path(dir) / "template.json").string());
  ReportModel model = ReportModel::init(cfg, vocab, templates.at(0));
  NamedParams params = model.named_params();
  load_checkpoint(params, (fs::path(dir) / "checkpoint.bin").string());
  return model;
}

}  // namespace rrg
