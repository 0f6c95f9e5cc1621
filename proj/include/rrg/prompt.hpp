// Projection into the language embedding space, residual-token computation,
// and prompt assembly: [R_t, R_v-, R_t, R_v+, R_t, T_pre, v_s, T_post].

#ifndef RRG_PROMPT_HPP
#define RRG_PROMPT_HPP

#include <random>
#include <string>
#include <vector>

#include "rrg/autograd.hpp"
#include "rrg/tokenizer.hpp"
#include "rrg/vision.hpp"

namespace rrg {

struct ProjectedFeature {
  ag::Tensor vec;  // [E]
  FeatureStage stage = FeatureStage::Projected;
};

struct LanguageProjection {
  int in_dim = 0;
  int embed = 0;
  ag::Tensor W, b;  // [E, in], [E]

  static LanguageProjection init(int in_dim, int embed, std::mt19937_64& rng);
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Affine map C -> E. Throws a stage error if the feature is already projected.
ProjectedFeature project_to_language_space(const GlobalFeature& feature,
                                           const LanguageProjection& proj);
// Per-row variant for token sequences [L, C] -> [L, E].
ag::Tensor project_to_language_space(const ag::Tensor& tokens,
                                     const LanguageProjection& proj);

struct Residuals {
  ag::Tensor pos;   // [n, E] rows v_g - c+_i
  ag::Tensor neg;   // [n, E]
  ag::Tensor text;  // [p, E] rows v_g - t_j

  int n_pairs() const { return pos.defined() ? pos.dim(0) : 0; }
  int prompt_tokens() const { return text.defined() ? text.dim(0) : 0; }
};

// R_v+ = [v_g - c+_1, ...], R_v- analogous, R_t = [v_g - t_1, ...].
// Pass n = 0 (empty context) by giving empty positive/negative lists.
Residuals compute_residuals(const ProjectedFeature& v_g,
                            const std::vector<ag::Tensor>& positives,
                            const std::vector<ag::Tensor>& negatives,
                            const ag::Tensor& disease_prompt_tokens);

struct SegmentSpan {
  std::string name;
  int begin = 0;
  int end = 0;  // exclusive
};

struct ResidualPrompt {
  ag::Tensor embeds;  // [total, E]
  std::vector<SegmentSpan> segments;

  int length() const { return embeds.dim(0); }
};

// Concatenation in the fixed order above; total length
// 3p + 2n + |T_pre| + L + |T_post|. With n = 0 the residual segments are
// dropped and the prompt reduces to [T_pre, v_s, T_post].
ResidualPrompt assemble_prompt(const Residuals& residuals,
                               const ag::Tensor& t_pre,
                               const ag::Tensor& t_post,
                               const ag::Tensor& v_s);

// Named prompt template. `layout` fixes the segment order with slots
// {R_t} {R_v-} {R_v+} {v_s} {T}; literal text between slots is tokenized
// into T_pre / T_post depending on which side of {v_s} it falls, with
// <Img...> markers dropped. {T} expands `instruction`.
struct PromptTemplate {
  std::string name;
  std::string layout;
  std::string instruction;
  std::string disease_prompt;

  // Literal tokens before {v_s} (T_pre) and after, including the expanded
  // instruction (T_post).
  std::vector<std::string> t_pre_words() const;
  std::vector<std::string> t_post_words() const;
  std::string rendered_text() const;  // layout with slots elided, for display
};

PromptTemplate default_template();
std::vector<PromptTemplate> builtin_templates();

// JSON file {"templates": [{"name","layout","instruction","disease_prompt"}]}.
std::vector<PromptTemplate> load_templates(const std::string& path);
const PromptTemplate& find_template(const std::vector<PromptTemplate>& ts,
                                    const std::string& name);

}  // namespace rrg

#endif
