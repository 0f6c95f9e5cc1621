#include "rrg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "rrg/tokenizer.hpp"

namespace rrg {

namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, double>;

NgramCounts count_ngrams(const Tokens& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)] += 1.0;
  return out;
}

int lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<int> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

EvalPair make_eval_pair(const std::string& id, const std::string& hypothesis,
                        const std::vector<std::string>& references) {
  EvalPair p;
  p.id = id;
  p.hypothesis = normalize_tokens(hypothesis);
  for (const auto& r : references) p.references.push_back(normalize_tokens(r));
  return p;
}

namespace {
// Modified n-gram precisions p_1..p_max and the corpus BP ingredients.
struct BleuStats {
  std::array<double, 4> precision{};
  double hyp_len = 0.0;
  double ref_len = 0.0;
};

BleuStats bleu_stats(const std::vector<EvalPair>& corpus, int max_n) {
  BleuStats st;
  std::array<double, 4> clipped{}, total{};
  for (const auto& pair : corpus) {
    st.hyp_len += static_cast<double>(pair.hypothesis.size());
    // Effective reference length: closest to the hypothesis length.
    double best_ref = 0.0, best_diff = 1e18;
    for (const auto& ref : pair.references) {
      double diff = std::abs(static_cast<double>(ref.size()) -
                             static_cast<double>(pair.hypothesis.size()));
      if (diff < best_diff ||
          (diff == best_diff && static_cast<double>(ref.size()) < best_ref)) {
        best_diff = diff;
        best_ref = static_cast<double>(ref.size());
      }
    }
    st.ref_len += best_ref;
    for (int n = 1; n <= max_n; ++n) {
      NgramCounts hyp = count_ngrams(pair.hypothesis, n);
      NgramCounts max_ref;
      for (const auto& ref : pair.references)
        for (const auto& [g, c] : count_ngrams(ref, n))
          max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : hyp) {
        total[n - 1] += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) clipped[n - 1] += std::min(c, it->second);
      }
    }
  }
  for (int n = 0; n < max_n; ++n)
    st.precision[n] = total[n] > 0.0 ? clipped[n] / total[n] : 0.0;
  return st;
}
}  // namespace

std::array<double, 4> bleu(const std::vector<EvalPair>& corpus, int max_n) {
  if (corpus.empty()) throw std::invalid_argument("bleu: empty corpus");
  if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n in 1..4");
  BleuStats st = bleu_stats(corpus, max_n);
  double bp = 1.0;
  if (st.hyp_len <= 0.0)
    bp = 0.0;
  else if (st.hyp_len < st.ref_len)
    bp = std::exp(1.0 - st.ref_len / st.hyp_len);
  std::array<double, 4> out{};
  for (int k = 1; k <= max_n; ++k) {
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 0; n < k; ++n) {
      if (st.precision[n] <= 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(st.precision[n]);
    }
    out[k - 1] = zero ? 0.0 : bp * std::exp(log_sum / k);
  }
  return out;
}

double rouge_l(const std::vector<EvalPair>& corpus, double beta) {
  if (corpus.empty()) throw std::invalid_argument("rouge_l: empty corpus");
  double acc = 0.0;
  for (const auto& pair : corpus) {
    double best = 0.0;
    for (const auto& ref : pair.references) {
      if (pair.hypothesis.empty() || ref.empty()) continue;
      double lcs = lcs_length(pair.hypothesis, ref);
      double p = lcs / static_cast<double>(pair.hypothesis.size());
      double r = lcs / static_cast<double>(ref.size());
      if (p + r > 0.0) {
        double b2 = beta * beta;
        best = std::max(best, (1.0 + b2) * p * r / (r + b2 * p));
      }
    }
    acc += best;
  }
  return acc / static_cast<double>(corpus.size());
}

namespace {

// Alignment between hypothesis and reference: exact stage then stem stage,
// greedily preferring the reference position that continues the previous
// chunk.
struct Alignment {
  int matches = 0;
  int chunks = 0;
};

Alignment align(const Tokens& hyp, const Tokens& ref) {
  std::vector<int> match_pos(hyp.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);

  auto run_stage = [&](auto&& key) {
    std::vector<std::string> hk(hyp.size()), rk(ref.size());
    for (size_t i = 0; i < hyp.size(); ++i) hk[i] = key(hyp[i]);
    for (size_t j = 0; j < ref.size(); ++j) rk[j] = key(ref[j]);
    int prev_ref = -2;
    for (size_t i = 0; i < hyp.size(); ++i) {
      if (match_pos[i] >= 0) {
        prev_ref = match_pos[i];
        continue;
      }
      int chosen = -1;
      if (prev_ref + 1 >= 0 && prev_ref + 1 < static_cast<int>(ref.size()) &&
          !ref_used[prev_ref + 1] && rk[prev_ref + 1] == hk[i])
        chosen = prev_ref + 1;
      else
        for (size_t j = 0; j < ref.size(); ++j)
          if (!ref_used[j] && rk[j] == hk[i]) {
            chosen = static_cast<int>(j);
            break;
          }
      if (chosen >= 0) {
        match_pos[i] = chosen;
        ref_used[chosen] = true;
        prev_ref = chosen;
      }
    }
  };
  run_stage([](const std::string& w) { return w; });
  run_stage([](const std::string& w) { return porter_stem(w); });

  Alignment a;
  int prev_hyp = -2, prev_ref = -2;
  for (size_t i = 0; i < hyp.size(); ++i) {
    if (match_pos[i] < 0) continue;
    ++a.matches;
    if (!(static_cast<int>(i) == prev_hyp + 1 && match_pos[i] == prev_ref + 1))
      ++a.chunks;
    prev_hyp = static_cast<int>(i);
    prev_ref = match_pos[i];
  }
  return a;
}

}  // namespace

double meteor(const std::vector<EvalPair>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("meteor: empty corpus");
  double acc = 0.0;
  for (const auto& pair : corpus) {
    double best = 0.0;
    for (const auto& ref : pair.references) {
      if (pair.hypothesis.empty() || ref.empty()) continue;
      Alignment a = align(pair.hypothesis, ref);
      if (a.matches == 0) continue;
      double p = static_cast<double>(a.matches) / pair.hypothesis.size();
      double r = static_cast<double>(a.matches) / ref.size();
      double f = 10.0 * p * r / (r + 9.0 * p);
      double frag = static_cast<double>(a.chunks) / a.matches;
      double penalty = 0.5 * frag * frag * frag;
      best = std::max(best, f * (1.0 - penalty));
    }
    acc += best;
  }
  return acc / static_cast<double>(corpus.size());
}

double cider(const std::vector<EvalPair>& corpus, const MetricConfig& cfg) {
  if (corpus.size() < 2)
    throw std::invalid_argument("cider: corpus of size < 2 has degenerate idf");
  constexpr int kMaxN = 4;
  const double log_n = std::log(static_cast<double>(corpus.size()));

  // Document frequency over each sample's reference set.
  std::array<NgramCounts, kMaxN> df;
  for (const auto& pair : corpus) {
    for (int n = 1; n <= kMaxN; ++n) {
      NgramCounts seen;
      for (const auto& ref : pair.references)
        for (const auto& [g, c] : count_ngrams(ref, n)) seen[g] = 1.0;
      for (const auto& [g, c] : seen) df[n - 1][g] += 1.0;
    }
  }
  auto idf = [&](int n, const std::vector<std::string>& g) {
    auto it = df[n - 1].find(g);
    double d = it == df[n - 1].end() ? 1.0 : it->second;
    return log_n - std::log(d);
  };

  double corpus_acc = 0.0;
  for (const auto& pair : corpus) {
    double hyp_len = static_cast<double>(pair.hypothesis.size());
    double ref_acc = 0.0;
    for (const auto& ref : pair.references) {
      double sim_sum = 0.0;
      for (int n = 1; n <= kMaxN; ++n) {
        NgramCounts hc = count_ngrams(pair.hypothesis, n);
        NgramCounts rc = count_ngrams(ref, n);
        double dot = 0.0, norm_h = 0.0, norm_r = 0.0;
        for (const auto& [g, c] : hc) {
          double w = idf(n, g);
          norm_h += (c * w) * (c * w);
        }
        for (const auto& [g, c] : rc) {
          double w = idf(n, g);
          norm_r += (c * w) * (c * w);
        }
        for (const auto& [g, c] : hc) {
          auto it = rc.find(g);
          if (it == rc.end()) continue;
          double w = idf(n, g);
          double vh = c * w, vr = it->second * w;
          dot += (cfg.cider_d ? std::min(vh, vr) : vh) * vr;
        }
        double sim = 0.0;
        if (norm_h > 0.0 && norm_r > 0.0)
          sim = dot / (std::sqrt(norm_h) * std::sqrt(norm_r));
        if (cfg.cider_d) {
          double delta = hyp_len - static_cast<double>(ref.size());
          sim *= std::exp(-delta * delta / (2.0 * cfg.cider_sigma * cfg.cider_sigma));
        }
        sim_sum += sim;
      }
      ref_acc += sim_sum / kMaxN * 10.0;
    }
    corpus_acc += pair.references.empty()
                      ? 0.0
                      : ref_acc / static_cast<double>(pair.references.size());
  }
  return corpus_acc / static_cast<double>(corpus.size());
}

MetricReport evaluate_corpus(const std::vector<EvalPair>& corpus,
                             const MetricConfig& cfg) {
  MetricReport r;
  r.bleu = bleu(corpus);
  r.rouge_l = rouge_l(corpus, cfg.rouge_beta);
  r.meteor = meteor(corpus);
  r.cider = cider(corpus, cfg);
  r.corpus_size = static_cast<int>(corpus.size());
  r.config = cfg;
  return r;
}

// ---------------------------------------------------------------------------
// Porter stemmer (classic algorithm, steps 1a-5b), ASCII lowercase input.

namespace {

bool is_vowel(const std::string& w, int i) {
  char c = w[i];
  if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return true;
  if (c == 'y') return i > 0 && !is_vowel(w, i - 1);
  return false;
}

// Number of vowel-consonant sequences in w[0..end).
int measure(const std::string& w, int end) {
  int m = 0;
  bool in_vowel = false;
  for (int i = 0; i < end; ++i) {
    bool v = is_vowel(w, i);
    if (in_vowel && !v) ++m;
    in_vowel = v;
  }
  return m;
}

bool has_vowel(const std::string& w, int end) {
  for (int i = 0; i < end; ++i)
    if (is_vowel(w, i)) return true;
  return false;
}

bool ends_with(const std::string& w, const std::string& suf) {
  return w.size() >= suf.size() &&
         w.compare(w.size() - suf.size(), suf.size(), suf) == 0;
}

bool double_consonant(const std::string& w) {
  size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && !is_vowel(w, static_cast<int>(n) - 1);
}

// Consonant-vowel-consonant ending where the final consonant is not w, x, y.
bool cvc(const std::string& w) {
  size_t n = w.size();
  if (n < 3) return false;
  if (is_vowel(w, static_cast<int>(n) - 1) || !is_vowel(w, static_cast<int>(n) - 2) ||
      is_vowel(w, static_cast<int>(n) - 3))
    return false;
  char c = w[n - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool replace_if(std::string& w, const std::string& suf, const std::string& rep,
                int min_m) {
  if (!ends_with(w, suf)) return false;
  int stem_len = static_cast<int>(w.size() - suf.size());
  if (measure(w, stem_len) > min_m) {
    w = w.substr(0, stem_len) + rep;
    return true;
  }
  return false;
}

}  // namespace

std::string porter_stem(const std::string& word) {
  if (word.size() <= 2) return word;
  std::string w = word;

  // Step 1a.
  if (ends_with(w, "sses"))
    w = w.substr(0, w.size() - 2);
  else if (ends_with(w, "ies"))
    w = w.substr(0, w.size() - 2);
  else if (!ends_with(w, "ss") && ends_with(w, "s"))
    w = w.substr(0, w.size() - 1);

  // Step 1b.
  bool step1b_extra = false;
  if (ends_with(w, "eed")) {
    if (measure(w, static_cast<int>(w.size()) - 3) > 0)
      w = w.substr(0, w.size() - 1);
  } else if (ends_with(w, "ed") && has_vowel(w, static_cast<int>(w.size()) - 2)) {
    w = w.substr(0, w.size() - 2);
    step1b_extra = true;
  } else if (ends_with(w, "ing") && has_vowel(w, static_cast<int>(w.size()) - 3)) {
    w = w.substr(0, w.size() - 3);
    step1b_extra = true;
  }
  if (step1b_extra) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz"))
      w += "e";
    else if (double_consonant(w) && !ends_with(w, "l") && !ends_with(w, "s") &&
             !ends_with(w, "z"))
      w = w.substr(0, w.size() - 1);
    else if (measure(w, static_cast<int>(w.size())) == 1 && cvc(w))
      w += "e";
  }

  // Step 1c.
  if (ends_with(w, "y") && has_vowel(w, static_cast<int>(w.size()) - 1))
    w[w.size() - 1] = 'i';

  // Step 2.
  static const std::pair<const char*, const char*> step2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"},
      {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},  {"iveness", "ive"},
      {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},  {"iviti", "ive"},
      {"biliti", "ble"}};
  for (const auto& [suf, rep] : step2)
    if (replace_if(w, suf, rep, 0)) break;

  // Step 3.
  static const std::pair<const char*, const char*> step3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
  for (const auto& [suf, rep] : step3)
    if (replace_if(w, suf, rep, 0)) break;

  // Step 4.
  static const char* step4[] = {"al",   "ance", "ence", "er",  "ic",  "able",
                                "ible", "ant",  "ement", "ment", "ent", "ou",
                                "ism",  "ate",  "iti",  "ous", "ive", "ize"};
  for (const char* suf : step4) {
    if (!ends_with(w, suf)) continue;
    int stem_len = static_cast<int>(w.size() - std::string(suf).size());
    if (measure(w, stem_len) > 1) w = w.substr(0, stem_len);
    break;
  }
  if (ends_with(w, "ion")) {
    int stem_len = static_cast<int>(w.size()) - 3;
    if (measure(w, stem_len) > 1 && stem_len > 0 &&
        (w[stem_len - 1] == 's' || w[stem_len - 1] == 't'))
      w = w.substr(0, stem_len);
  }

  // Step 5a.
  if (ends_with(w, "e")) {
    int m = measure(w, static_cast<int>(w.size()) - 1);
    std::string base = w.substr(0, w.size() - 1);
    if (m > 1 || (m == 1 && !cvc(base))) w = base;
  }
  // Step 5b.
  if (measure(w, static_cast<int>(w.size())) > 1 && double_consonant(w) &&
      ends_with(w, "l"))
    w = w.substr(0, w.size() - 1);

  return w;
}

std::string metric_report_json(const MetricReport& report) {
  nlohmann::json j;
  j["BLEU-1"] = report.bleu[0];
  j["BLEU-2"] = report.bleu[1];
  j["BLEU-3"] = report.bleu[2];
  j["BLEU-4"] = report.bleu[3];
  j["ROUGE-L"] = report.rouge_l;
  j["METEOR"] = report.meteor;
  j["CIDEr"] = report.cider;
  j["corpus_size"] = report.corpus_size;
  j["config"] = {{"rouge_beta", report.config.rouge_beta},
                 {"cider_d", report.config.cider_d},
                 {"cider_sigma", report.config.cider_sigma}};
  return j.dump(2);
}

}  // namespace rrg
