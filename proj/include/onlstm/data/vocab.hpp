#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "onlstm/data/agreement.hpp"
#include "onlstm/data/logic.hpp"

namespace onlstm {

using Sentence = std::vector<std::string>;

// Token <-> id map. Ids 0..2 are <bos>, <eos>, <unk>; the rest are dense.
class Vocab {
 public:
  Vocab();
  // Tokens seen at least min_count times, ordered by (-frequency, token).
  static Vocab build(const std::vector<Sentence>& corpus, std::size_t min_count = 1);
  // Tokens in id order, reserved entries first. Throws DataError otherwise.
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }
  int id(const std::string& token) const;  // <unk> id when absent
  const std::string& token(int id) const;  // throws VocabularyError
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Sentence& sentence) const;
  Sentence decode(std::span<const int> ids) const;

  // One token per line in id order.
  std::string serialize() const;
  static Vocab parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

// Written as the first line of every generated file:
//   # generator=gen-corpus version=1 count=5000 seed=7
struct Manifest {
  std::string generator;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string line() const;
};
inline constexpr int kGeneratorVersion = 1;

// Text files ignore blank lines and lines starting with '#'.
std::vector<Sentence> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences, const Manifest& manifest);

// label<TAB>s1<TAB>s2. Throws DataError on malformed lines, ParseError on
// malformed formulas.
std::vector<LogicSample> read_logic(const std::filesystem::path& path);
void write_logic(const std::filesystem::path& path, const std::vector<LogicSample>& samples,
                 const Manifest& manifest);

// category<TAB>grammatical<TAB>ungrammatical.
struct TaggedPair {
  std::string category;
  Sentence grammatical;
  Sentence ungrammatical;
};
std::vector<TaggedPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<AgreementPair>& pairs,
                 const Manifest& manifest);

// Lines written as-is below the manifest header.
void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines, const Manifest* manifest);

Sentence split_tokens(std::string_view line);
std::string join_tokens(std::span<const std::string> tokens);

}  // namespace onlstm
