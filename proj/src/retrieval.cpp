#include "rrg/retrieval.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

#include "rrg/tokenizer.hpp"

namespace rrg {

namespace {
std::uint64_t hash_id(const std::string& id, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (char c : id) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdull;
  h ^= h >> 33;
  return h;
}
}  // namespace

RetrievalStrategy parse_strategy(const std::string& name) {
  if (name == "label") return RetrievalStrategy::Label;
  if (name == "keyword") return RetrievalStrategy::Keyword;
  if (name == "random") return RetrievalStrategy::Random;
  throw std::invalid_argument("unknown retrieval strategy: " + name);
}

std::string strategy_name(RetrievalStrategy s) {
  switch (s) {
    case RetrievalStrategy::Label: return "label";
    case RetrievalStrategy::Keyword: return "keyword";
    case RetrievalStrategy::Random: return "random";
  }
  return "?";
}

Polarity classify_polarity(const SampleRecord& record, RetrievalStrategy strategy,
                           const std::string& keyword, std::uint64_t seed) {
  switch (strategy) {
    case RetrievalStrategy::Label:
      return record.no_finding() ? Polarity::Negative : Polarity::Positive;
    case RetrievalStrategy::Keyword: {
      for (const auto& tok : whitespace_tokens(record.report))
        if (tok == keyword) return Polarity::Positive;
      return Polarity::Negative;
    }
    case RetrievalStrategy::Random:
      return (hash_id(record.id, seed) & 1) ? Polarity::Positive
                                            : Polarity::Negative;
  }
  throw std::logic_error("classify_polarity: bad strategy");
}

ContextIndex build_index(const std::vector<SampleRecord>& corpus,
                         RetrievalStrategy strategy, std::uint64_t seed,
                         const std::string& keyword) {
  ContextIndex idx;
  idx.strategy = strategy;
  idx.seed = seed;
  idx.keyword = keyword;
  for (const auto& r : corpus) {
    if (r.split != "train") continue;
    if (classify_polarity(r, strategy, keyword, seed) == Polarity::Positive)
      idx.positives.push_back(r.id);
    else
      idx.negatives.push_back(r.id);
  }
  if (idx.positives.empty() && idx.negatives.empty())
    throw std::invalid_argument("build_index: empty train split");
  if (idx.positives.empty() || idx.negatives.empty())
    throw std::runtime_error("build_index: index degenerate, one polarity class is empty");
  return idx;
}

namespace {
std::vector<std::string> draw(const std::vector<std::string>& pool,
                              const std::string& query_id, int n,
                              std::mt19937_64& rng) {
  std::vector<std::string> candidates;
  candidates.reserve(pool.size());
  for (const auto& id : pool)
    if (id != query_id) candidates.push_back(id);
  if (static_cast<int>(candidates.size()) < n)
    throw std::runtime_error("retrieve: retrieval underflow, class too small for n_pairs");
  // Partial Fisher-Yates over the first n slots.
  for (int i = 0; i < n; ++i) {
    size_t j = i + rng() % (candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(n);
  return candidates;
}
}  // namespace

ContextSampleSet retrieve(const ContextIndex& index, const std::string& query_id,
                          int n_pairs, bool fixed_pair, std::uint64_t seed,
                          std::uint64_t epoch) {
  if (n_pairs < 1) throw std::invalid_argument("retrieve: n_pairs must be >= 1");
  std::uint64_t stream = fixed_pair ? hash_id(query_id, seed)
                                    : hash_id(query_id, seed) ^
                                          (0x9e3779b97f4a7c15ull * (epoch + 1));
  std::mt19937_64 rng(stream);
  ContextSampleSet out;
  out.positives = draw(index.positives, query_id, n_pairs, rng);
  out.negatives = draw(index.negatives, query_id, n_pairs, rng);
  return out;
}

}  // namespace rrg
