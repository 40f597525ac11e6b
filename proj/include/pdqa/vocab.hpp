#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace pdqa {

// Fixed lowercase vocabulary built into the binary. Ids are stable:
// 0 <pad>, 1 <bos>, 2 <eos>, 3 <unk>, then punctuation marks, then the
// word list in source order (first occurrence wins on duplicates).
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;

  static const Vocabulary& builtin();

  std::size_t size() const { return tokens_.size(); }
  // Unknown tokens map to kUnk; never fails.
  std::size_t id_of(const std::string& token) const;
  const std::string& token_of(std::size_t id) const;

 private:
  Vocabulary();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace pdqa
