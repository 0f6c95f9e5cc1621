#include "rrg/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace rrg {

namespace {
bool is_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.push_back(std::string(1, c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (auto& tok : tokenize(text))
    if (tok.size() != 1 || !is_punct(tok[0])) out.push_back(tok);
  return out;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  Vocabulary v;
  v.id_to_word = {"<pad>", "<bos>", "<eos>", "<unk>"};
  std::map<std::string, int> counts;  // ordered for determinism
  for (const auto& t : texts)
    for (const auto& w : tokenize(t)) ++counts[w];
  for (const auto& [w, c] : counts) v.id_to_word.push_back(w);
  for (int i = 0; i < static_cast<int>(v.id_to_word.size()); ++i)
    v.word_to_id[v.id_to_word[i]] = i;
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = word_to_id.find(word);
  return it == word_to_id.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  for (const auto& w : tokenize(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (i == kBos || i == kEos || i == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += i >= 0 && i < size() ? id_to_word[i] : "<unk>";
  }
  return out;
}

}  // namespace rrg
