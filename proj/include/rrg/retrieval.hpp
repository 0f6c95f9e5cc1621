// Context sample retrieval: polarity classification of the training split
// and per-query positive/negative sampling, with a fixed-pair mode.

#ifndef RRG_RETRIEVAL_HPP
#define RRG_RETRIEVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rrg/data.hpp"

namespace rrg {

enum class RetrievalStrategy { Label, Keyword, Random };
enum class Polarity { Positive, Negative };

RetrievalStrategy parse_strategy(const std::string& name);
std::string strategy_name(RetrievalStrategy s);

// label: negative iff the "No Finding" flag is set.
// keyword: positive iff the report contains the keyword as a whole
//          whitespace token, case-sensitive.
// random: seeded Bernoulli(0.5), deterministic per (id, seed).
Polarity classify_polarity(const SampleRecord& record, RetrievalStrategy strategy,
                           const std::string& keyword = "Note",
                           std::uint64_t seed = 0);

struct ContextIndex {
  RetrievalStrategy strategy = RetrievalStrategy::Label;
  std::uint64_t seed = 0;
  std::string keyword = "Note";
  std::vector<std::string> positives;  // train-split ids
  std::vector<std::string> negatives;
};

// Assigns every train record exactly one polarity. Throws index-degenerate
// if either class ends up empty.
ContextIndex build_index(const std::vector<SampleRecord>& corpus,
                         RetrievalStrategy strategy, std::uint64_t seed,
                         const std::string& keyword = "Note");

struct ContextSampleSet {
  std::vector<std::string> positives;  // n_pairs ids
  std::vector<std::string> negatives;  // n_pairs ids
};

// fixed_pair: selection is a deterministic function of (query id, seed),
// identical across calls. Otherwise draws from the caller-advanced epoch
// stream. The query id is always excluded.
ContextSampleSet retrieve(const ContextIndex& index, const std::string& query_id,
                          int n_pairs, bool fixed_pair, std::uint64_t seed,
                          std::uint64_t epoch = 0);

}  // namespace rrg

#endif
