#include "kdiag/text.hpp"

#include <cctype>

namespace kdiag::text {

std::vector<int> Tokenizer::tokenize(const std::string& text, int max_seq_len) const {
  if (max_seq_len < 1) throw ParameterError("tokenize: max_seq_len must be positive");
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    if (static_cast<int>(ids.size()) < max_seq_len)
      ids.push_back(static_cast<int>(fnv1a64(word) % static_cast<std::uint64_t>(vocab_size)));
    word.clear();
  };
  for (unsigned char ch : text) {
    if (std::isalnum(ch))
      word.push_back(static_cast<char>(std::tolower(ch)));
    else
      flush();
  }
  flush();
  return ids;
}

}  // namespace kdiag::text
