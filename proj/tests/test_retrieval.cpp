#include <algorithm>
#include <set>

#include "doctest.h"
#include "rrg/retrieval.hpp"

using namespace rrg;

namespace {

std::vector<SampleRecord> toy_corpus(int n_train, int n_no_finding) {
  std::vector<SampleRecord> recs;
  for (int i = 0; i < n_train; ++i) {
    SampleRecord r;
    r.id = "t" + std::to_string(i);
    if (i < n_no_finding) {
      r.report = "the lungs are clear";
      r.labels[kNoFindingIndex] = true;
    } else {
      r.report = "Note : findings show disease";
      r.labels[1] = true;
    }
    r.split = "train";
    recs.push_back(std::move(r));
  }
  return recs;
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("label strategy keys off the no-finding flag") {
  SampleRecord r;
  r.labels[kNoFindingIndex] = true;
  CHECK(classify_polarity(r, RetrievalStrategy::Label) == Polarity::Negative);
  r.labels[kNoFindingIndex] = false;
  CHECK(classify_polarity(r, RetrievalStrategy::Label) == Polarity::Positive);
}

TEST_CASE("keyword strategy needs an exact whole-token, case-sensitive match") {
  SampleRecord r;
  r.report = "Note : something";
  CHECK(classify_polarity(r, RetrievalStrategy::Keyword, "Note") == Polarity::Positive);
  r.report = "note : lowercase does not count";
  CHECK(classify_polarity(r, RetrievalStrategy::Keyword, "Note") == Polarity::Negative);
  r.report = "Notes are not the token either";
  CHECK(classify_polarity(r, RetrievalStrategy::Keyword, "Note") == Polarity::Negative);
}

TEST_CASE("random strategy is a deterministic function of id and seed") {
  SampleRecord r;
  r.id = "sample-7";
  Polarity p1 = classify_polarity(r, RetrievalStrategy::Random, "Note", 42);
  Polarity p2 = classify_polarity(r, RetrievalStrategy::Random, "Note", 42);
  CHECK(p1 == p2);
}

TEST_CASE("index counts polarities over the train split only") {
  auto recs = toy_corpus(10, 4);
  SampleRecord test_rec;
  test_rec.id = "z";
  test_rec.report = "Note : excluded";
  test_rec.split = "test";
  recs.push_back(test_rec);

  ContextIndex idx = build_index(recs, RetrievalStrategy::Label, 0);
  CHECK(idx.positives.size() == 6);
  CHECK(idx.negatives.size() == 4);
  CHECK(std::find(idx.positives.begin(), idx.positives.end(), "z") ==
        idx.positives.end());
}

TEST_CASE("single-polarity corpus degenerates") {
  auto recs = toy_corpus(5, 5);  // everything no-finding
  CHECK_THROWS(build_index(recs, RetrievalStrategy::Label, 0));
}

TEST_CASE("index rebuild with the same seed is identical") {
  auto recs = toy_corpus(12, 5);
  ContextIndex a = build_index(recs, RetrievalStrategy::Random, 77);
  ContextIndex b = build_index(recs, RetrievalStrategy::Random, 77);
  CHECK(a.positives == b.positives);
  CHECK(a.negatives == b.negatives);
}

TEST_CASE("retrieve returns n matched pairs excluding the query") {
  auto recs = toy_corpus(12, 5);
  ContextIndex idx = build_index(recs, RetrievalStrategy::Label, 0);
  ContextSampleSet s = retrieve(idx, "t7", 3, true, 0);
  CHECK(s.positives.size() == 3);
  CHECK(s.negatives.size() == 3);
  for (const auto& id : s.positives) CHECK(id != "t7");
  for (const auto& id : s.negatives) CHECK(id != "t7");
}

TEST_CASE("polarity purity of the returned sets") {
  auto recs = toy_corpus(14, 6);
  ContextIndex idx = build_index(recs, RetrievalStrategy::Keyword, 0);
  ContextSampleSet s = retrieve(idx, "t0", 4, false, 3, 2);
  std::set<std::string> pos(idx.positives.begin(), idx.positives.end());
  for (const auto& id : s.positives) CHECK(pos.count(id) == 1);
  for (const auto& id : s.negatives) CHECK(pos.count(id) == 0);
}

TEST_CASE("fixed pairs are identical across epochs and calls") {
  auto recs = toy_corpus(16, 7);
  ContextIndex idx = build_index(recs, RetrievalStrategy::Label, 0);
  ContextSampleSet a = retrieve(idx, "t3", 3, true, 9, 0);
  ContextSampleSet b = retrieve(idx, "t3", 3, true, 9, 5);
  ContextSampleSet c = retrieve(idx, "t3", 3, true, 9, 11);
  CHECK(a.positives == b.positives);
  CHECK(a.negatives == b.negatives);
  CHECK(a.positives == c.positives);
  CHECK(a.negatives == c.negatives);
}

TEST_CASE("non-fixed retrieval varies with the epoch but stays seeded") {
  auto recs = toy_corpus(30, 14);
  ContextIndex idx = build_index(recs, RetrievalStrategy::Label, 0);
  ContextSampleSet e0 = retrieve(idx, "t3", 3, false, 9, 0);
  ContextSampleSet e0b = retrieve(idx, "t3", 3, false, 9, 0);
  CHECK(e0.positives == e0b.positives);
  bool differs = false;
  for (std::uint64_t epoch = 1; epoch < 6 && !differs; ++epoch) {
    ContextSampleSet e = retrieve(idx, "t3", 3, false, 9, epoch);
    differs = e.positives != e0.positives || e.negatives != e0.negatives;
  }
  CHECK(differs);
}

TEST_CASE("underflow when a class cannot supply n_pairs") {
  auto recs = toy_corpus(9, 4);  // 4 negatives
  ContextIndex idx = build_index(recs, RetrievalStrategy::Label, 0);
  CHECK_THROWS(retrieve(idx, "t0", 5, true, 0));  // t0 negative: 3 left
  CHECK_THROWS(retrieve(idx, "other", 5, true, 0));  // 4 < 5 even without exclusion
}

TEST_CASE("strategy names round trip") {
  for (auto s : {RetrievalStrategy::Label, RetrievalStrategy::Keyword,
                 RetrievalStrategy::Random})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK_THROWS(parse_strategy("nearest"));
}

}  // TEST_SUITE
