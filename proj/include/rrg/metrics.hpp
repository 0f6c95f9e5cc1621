// Corpus evaluation: BLEU-1..4, ROUGE-L, simplified METEOR (exact + stem
// matching, no synonym tables), and CIDEr-D.

#ifndef RRG_METRICS_HPP
#define RRG_METRICS_HPP

#include <array>
#include <string>
#include <vector>

namespace rrg {

struct EvalPair {
  std::string id;
  std::vector<std::string> hypothesis;
  std::vector<std::vector<std::string>> references;  // one or more
};

// Builds an EvalPair through the shared normalizer (lowercase, punctuation
// stripped).
EvalPair make_eval_pair(const std::string& id, const std::string& hypothesis,
                        const std::vector<std::string>& references);

struct MetricConfig {
  double rouge_beta = 1.2;
  bool cider_d = true;       // clipped counts + gaussian length penalty
  double cider_sigma = 6.0;
};

struct MetricReport {
  std::array<double, 4> bleu{};  // BLEU-1..4
  double rouge_l = 0.0;
  double meteor = 0.0;
  double cider = 0.0;
  int corpus_size = 0;
  MetricConfig config;
};

// Corpus-level modified n-gram precision with clipping, geometric mean of
// orders 1..n, brevity penalty exp(1 - r/c) when c < r.
std::array<double, 4> bleu(const std::vector<EvalPair>& corpus, int max_n = 4);

// Per-pair LCS-based F_beta, best reference per pair, corpus mean.
double rouge_l(const std::vector<EvalPair>& corpus, double beta = 1.2);

// Exact + Porter-style stem alignment, F_mean = 10PR/(R+9P), chunk penalty
// 0.5 (chunks/matches)^3.
double meteor(const std::vector<EvalPair>& corpus);

// tf-idf n-gram cosine for n=1..4, clipped counts and gaussian length
// penalty in the D variant, x10, averaged over the corpus. Needs >= 2
// samples for a defined idf.
double cider(const std::vector<EvalPair>& corpus, const MetricConfig& cfg = {});

MetricReport evaluate_corpus(const std::vector<EvalPair>& corpus,
                             const MetricConfig& cfg = {});

// Porter-style stemmer used by the METEOR stem stage.
std::string porter_stem(const std::string& word);

std::string metric_report_json(const MetricReport& report);

}  // namespace rrg

#endif
