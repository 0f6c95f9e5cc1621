#include "rrg/prompt.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rrg {

using ag::Tensor;

LanguageProjection LanguageProjection::init(int in_dim, int embed,
                                            std::mt19937_64& rng) {
  LanguageProjection p;
  p.in_dim = in_dim;
  p.embed = embed;
  p.W = Tensor::randn({embed, in_dim}, rng, 1.0 / std::sqrt(in_dim));
  p.b = Tensor::zeros({embed}, true);
  return p;
}

void LanguageProjection::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".b", b);
}

ProjectedFeature project_to_language_space(const GlobalFeature& feature,
                                           const LanguageProjection& proj) {
  if (feature.stage != FeatureStage::Raw)
    throw std::logic_error("project_to_language_space: feature already projected");
  if (feature.vec.dim(0) != proj.in_dim)
    throw std::invalid_argument("project_to_language_space: width mismatch");
  Tensor row = ag::reshape(feature.vec, {1, proj.in_dim});
  Tensor out = ag::add_rowvec(ag::matmul(row, ag::transpose(proj.W)), proj.b);
  ProjectedFeature pf;
  pf.vec = ag::reshape(out, {proj.embed});
  pf.stage = FeatureStage::Projected;
  return pf;
}

ag::Tensor project_to_language_space(const ag::Tensor& tokens,
                                     const LanguageProjection& proj) {
  if (tokens.shape().size() != 2 || tokens.dim(1) != proj.in_dim)
    throw std::invalid_argument("project_to_language_space: want [L,C] tokens");
  return ag::add_rowvec(ag::matmul(tokens, ag::transpose(proj.W)), proj.b);
}

Residuals compute_residuals(const ProjectedFeature& v_g,
                            const std::vector<ag::Tensor>& positives,
                            const std::vector<ag::Tensor>& negatives,
                            const ag::Tensor& disease_prompt_tokens) {
  const int E = v_g.vec.dim(0);
  if (positives.size() != negatives.size())
    throw std::invalid_argument("compute_residuals: positive/negative count mismatch");
  auto diff_rows = [&](const std::vector<Tensor>& feats) {
    std::vector<Tensor> rows;
    for (const auto& c : feats) {
      if (c.dim(0) != E)
        throw std::invalid_argument("compute_residuals: width mismatch");
      rows.push_back(ag::reshape(ag::sub(v_g.vec, c), {1, E}));
    }
    return ag::concat_rows(rows);
  };
  Residuals r;
  if (!positives.empty()) {
    r.pos = diff_rows(positives);
    r.neg = diff_rows(negatives);
  }
  if (disease_prompt_tokens.defined()) {
    if (disease_prompt_tokens.dim(1) != E)
      throw std::invalid_argument("compute_residuals: prompt token width mismatch");
    const int p = disease_prompt_tokens.dim(0);
    std::vector<Tensor> rows;
    for (int j = 0; j < p; ++j) {
      Tensor t = ag::reshape(ag::slice_rows(disease_prompt_tokens, j, j + 1), {E});
      rows.push_back(ag::reshape(ag::sub(v_g.vec, t), {1, E}));
    }
    r.text = ag::concat_rows(rows);
  }
  return r;
}

ResidualPrompt assemble_prompt(const Residuals& residuals, const ag::Tensor& t_pre,
                               const ag::Tensor& t_post, const ag::Tensor& v_s) {
  if (!v_s.defined() || v_s.dim(0) < 1)
    throw std::invalid_argument("assemble_prompt: empty v_s");
  const bool with_context = residuals.n_pairs() > 0;

  std::vector<Tensor> parts;
  std::vector<SegmentSpan> spans;
  int cursor = 0;
  auto push = [&](const std::string& name, const Tensor& t) {
    if (!t.defined() || t.dim(0) == 0) return;
    parts.push_back(t);
    spans.push_back({name, cursor, cursor + t.dim(0)});
    cursor += t.dim(0);
  };

  if (with_context) {
    push("R_t", residuals.text);
    push("R_v-", residuals.neg);
    push("R_t", residuals.text);
    push("R_v+", residuals.pos);
    push("R_t", residuals.text);
  }
  push("T_pre", t_pre);
  push("v_s", v_s);
  push("T_post", t_post);

  ResidualPrompt out;
  out.embeds = ag::concat_rows(parts);
  out.segments = std::move(spans);
  return out;
}

std::vector<std::string> PromptTemplate::t_pre_words() const {
  std::vector<std::string> out;
  bool after_vs = false;
  size_t i = 0;
  std::string literal;
  auto flush = [&] {
    if (after_vs) return;
    for (const auto& w : tokenize(literal)) out.push_back(w);
    literal.clear();
  };
  while (i < layout.size()) {
    if (layout[i] == '{') {
      size_t close = layout.find('}', i);
      if (close == std::string::npos) throw std::runtime_error("template: unbalanced {");
      std::string slot = layout.substr(i, close - i + 1);
      flush();
      if (slot == "{v_s}") after_vs = true;
      i = close + 1;
    } else if (layout[i] == '<') {
      // <Img ...> markers mark where context images sit; not text tokens.
      size_t close = layout.find('>', i);
      if (close == std::string::npos) throw std::runtime_error("template: unbalanced <");
      i = close + 1;
    } else {
      literal.push_back(layout[i++]);
    }
  }
  flush();
  return out;
}

std::vector<std::string> PromptTemplate::t_post_words() const {
  std::vector<std::string> out;
  bool after_vs = false;
  size_t i = 0;
  std::string literal;
  auto flush = [&] {
    if (!after_vs) {
      literal.clear();
      return;
    }
    for (const auto& w : tokenize(literal)) out.push_back(w);
    literal.clear();
  };
  while (i < layout.size()) {
    if (layout[i] == '{') {
      size_t close = layout.find('}', i);
      if (close == std::string::npos) throw std::runtime_error("template: unbalanced {");
      std::string slot = layout.substr(i, close - i + 1);
      flush();
      if (slot == "{v_s}") after_vs = true;
      if (slot == "{T}" && after_vs)
        for (const auto& w : tokenize(instruction)) out.push_back(w);
      i = close + 1;
    } else if (layout[i] == '<') {
      size_t close = layout.find('>', i);
      if (close == std::string::npos) throw std::runtime_error("template: unbalanced <");
      i = close + 1;
    } else {
      literal.push_back(layout[i++]);
    }
  }
  flush();
  return out;
}

std::string PromptTemplate::rendered_text() const {
  std::string out;
  size_t i = 0;
  while (i < layout.size()) {
    if (layout[i] == '{') {
      size_t close = layout.find('}', i);
      std::string slot = layout.substr(i, close - i + 1);
      if (slot == "{T}") out += instruction;
      i = close + 1;
    } else {
      out.push_back(layout[i++]);
    }
  }
  return out;
}

PromptTemplate default_template() {
  PromptTemplate t;
  t.name = "default";
  t.layout =
      "{R_t} {R_v-} {R_t} {R_v+} {R_t} Note: <Img V_G> normal. "
      "Note: <Img V_G> with disease. {v_s} {T}";
  t.instruction =
      "Generate a comprehensive and detailed diagnosis report for this chest "
      "xray image.";
  t.disease_prompt = "With disease";
  return t;
}

std::vector<PromptTemplate> builtin_templates() {
  std::vector<PromptTemplate> ts;
  ts.push_back(default_template());

  PromptTemplate obs = default_template();
  obs.name = "observation";
  obs.layout =
      "{R_t} {R_v-} {R_t} {R_v+} {R_t} Observation: <Img V_G> appears to be "
      "normal and healthy. Observation: <Img V_G> shows clear signs of "
      "disease. {v_s} {T}";
  ts.push_back(obs);

  PromptTemplate summary = default_template();
  summary.name = "summary";
  summary.instruction =
      "Construct a full and methodical diagnostic summary for the chest X-ray "
      "displayed.";
  ts.push_back(summary);

  PromptTemplate assessment = default_template();
  assessment.name = "assessment";
  assessment.instruction =
      "Develop a detailed and professional medical assessment from this chest "
      "X-ray image.";
  ts.push_back(assessment);

  PromptTemplate findings = default_template();
  findings.name = "findings";
  findings.instruction =
      "Analyze and generate a detailed report on the findings of this chest "
      "X-ray.";
  ts.push_back(findings);
  return ts;
}

std::vector<PromptTemplate> load_templates(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_templates: cannot open " + path);
  nlohmann::json j;
  f >> j;
  std::vector<PromptTemplate> out;
  for (const auto& e : j.at("templates")) {
    PromptTemplate t;
    t.name = e.at("name").get<std::string>();
    t.layout = e.at("layout").get<std::string>();
    t.instruction = e.at("instruction").get<std::string>();
    t.disease_prompt = e.value("disease_prompt", "With disease");
    out.push_back(std::move(t));
  }
  return out;
}

const PromptTemplate& find_template(const std::vector<PromptTemplate>& ts,
                                    const std::string& name) {
  for (const auto& t : ts)
    if (t.name == name) return t;
  throw std::invalid_argument("unknown template: " + name);
}

}  // namespace rrg
