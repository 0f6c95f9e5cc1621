// Deterministic whitespace+punctuation tokenizer and corpus vocabulary.
// The same normalizer feeds both training and metric evaluation so the two
// vocabularies stay coherent.

#ifndef RRG_TOKENIZER_HPP
#define RRG_TOKENIZER_HPP

#include <string>
#include <unordered_map>
#include <vector>

namespace rrg {

// Lowercases, splits punctuation off as separate tokens, collapses whitespace.
std::vector<std::string> tokenize(const std::string& text);

// Metric-side normalizer: lowercased tokens with punctuation stripped.
std::vector<std::string> normalize_tokens(const std::string& text);

// Raw whitespace split without case folding (keyword matching operates on
// the report as written).
std::vector<std::string> whitespace_tokens(const std::string& text);

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_word;  // includes the 4 specials
  std::unordered_map<std::string, int> word_to_id;

  static Vocabulary build(const std::vector<std::string>& texts);
  int size() const { return static_cast<int>(id_to_word.size()); }
  int id(const std::string& word) const;
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;
};

}  // namespace rrg

#endif
