#include "onlstm/data/vocab.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "onlstm/errors.hpp"
#include "onlstm/io/files.hpp"
#include "onlstm/models/language_model.hpp"

namespace onlstm {
namespace {

bool skipped(const std::string& line) {
  const auto first = line.find_first_not_of(" \t");
  return first == std::string::npos || line[first] == '#';
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto tab = line.find('\t', begin);
    out.push_back(line.substr(begin, tab - begin));
    if (tab == std::string::npos) break;
    begin = tab + 1;
  }
  return out;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line) + ": ";
}

}  // namespace

Vocab::Vocab() : tokens_{kBosToken, kEosToken, kUnkToken} {
  for (std::size_t k = 0; k < tokens_.size(); ++k) ids_.emplace(tokens_[k], static_cast<int>(k));
}

Vocab Vocab::build(const std::vector<Sentence>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const Sentence& s : corpus) {
    for (const std::string& t : s) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [token, n] : counts) {
    if (n >= min_count && token != kBosToken && token != kEosToken && token != kUnkToken) kept.emplace_back(token, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens{kBosToken, kEosToken, kUnkToken};
  for (auto& [token, n] : kept) tokens.push_back(token);
  return from_tokens(std::move(tokens));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedTokens || tokens[kBosId] != kBosToken || tokens[kEosId] != kEosToken ||
      tokens[kUnkId] != kUnkToken) {
    throw DataError("vocabulary must start with <bos>, <eos>, <unk>");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t k = 0; k < v.tokens_.size(); ++k) {
    if (v.tokens_[k].empty() || v.tokens_[k].find_first_of(" \t\n") != std::string::npos) {
      throw DataError("vocabulary entry " + std::to_string(k) + " is empty or contains whitespace");
    }
    if (!v.ids_.emplace(v.tokens_[k], static_cast<int>(k)).second) {
      throw DataError("duplicate vocabulary entry '" + v.tokens_[k] + "'");
    }
  }
  return v;
}

int Vocab::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside a vocabulary of " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const Sentence& sentence) const {
  std::vector<int> out;
  out.reserve(sentence.size());
  for (const std::string& t : sentence) out.push_back(id(t));
  return out;
}

Sentence Vocab::decode(std::span<const int> ids) const {
  Sentence out;
  for (int i : ids) out.push_back(token(i));
  return out;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const std::string& t : tokens_) out += t + "\n";
  return out;
}

Vocab Vocab::parse(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const { io::atomic_write(path, serialize()); }

Vocab Vocab::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string Manifest::line() const {
  return "# generator=" + generator + " version=" + std::to_string(kGeneratorVersion) +
         " count=" + std::to_string(count) + " seed=" + std::to_string(seed);
}

Sentence split_tokens(std::string_view line) {
  Sentence out;
  std::istringstream in{std::string(line)};
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (const std::string& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

std::vector<Sentence> read_corpus(const std::filesystem::path& path) {
  std::vector<Sentence> out;
  for (const std::string& line : io::read_lines(path)) {
    if (!skipped(line)) out.push_back(split_tokens(line));
  }
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines, const Manifest* manifest) {
  std::string text;
  if (manifest) text += manifest->line() + "\n";
  for (const std::string& l : lines) text += l + "\n";
  io::atomic_write(path, text);
}

void write_corpus(const std::filesystem::path& path, const std::vector<Sentence>& sentences, const Manifest& manifest) {
  std::vector<std::string> lines;
  for (const Sentence& s : sentences) lines.push_back(join_tokens(s));
  write_lines(path, lines, &manifest);
}

std::vector<LogicSample> read_logic(const std::filesystem::path& path) {
  std::vector<LogicSample> out;
  const auto lines = io::read_lines(path);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (skipped(lines[k])) continue;
    const auto fields = split_tabs(lines[k]);
    if (fields.size() != 3) throw DataError(where(path, k + 1) + "expected label<TAB>s1<TAB>s2");
    LogicSample s;
    try {
      s.label = parse_relation(fields[0]);
    } catch (const DataError& e) {
      throw DataError(where(path, k + 1) + e.what());
    }
    s.first = split_tokens(fields[1]);
    s.second = split_tokens(fields[2]);
    try {
      s.first_operators = parse_formula(s.first).operator_count();
      s.second_operators = parse_formula(s.second).operator_count();
    } catch (const ParseError& e) {
      throw ParseError(where(path, k + 1) + e.what(), e.position());
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_logic(const std::filesystem::path& path, const std::vector<LogicSample>& samples,
                 const Manifest& manifest) {
  std::vector<std::string> lines;
  for (const LogicSample& s : samples) {
    lines.push_back(std::string(to_string(s.label)) + "\t" + join_tokens(s.first) + "\t" + join_tokens(s.second));
  }
  write_lines(path, lines, &manifest);
}

std::vector<TaggedPair> read_pairs(const std::filesystem::path& path) {
  std::vector<TaggedPair> out;
  const auto lines = io::read_lines(path);
  for (std::size_t k = 0; k < lines.size(); ++k) {
    if (skipped(lines[k])) continue;
    const auto fields = split_tabs(lines[k]);
    if (fields.size() != 3 || fields[0].empty()) {
      throw DataError(where(path, k + 1) + "expected category<TAB>grammatical<TAB>ungrammatical");
    }
    out.push_back({fields[0], split_tokens(fields[1]), split_tokens(fields[2])});
    if (out.back().grammatical.empty() || out.back().ungrammatical.empty()) {
      throw DataError(where(path, k + 1) + "empty sentence in pair");
    }
  }
  return out;
}

void write_pairs(const std::filesystem::path& path, const std::vector<AgreementPair>& pairs,
                 const Manifest& manifest) {
  std::vector<std::string> lines;
  for (const AgreementPair& p : pairs) {
    lines.push_back(p.category + "\t" + join_tokens(p.grammatical) + "\t" + join_tokens(p.ungrammatical));
  }
  write_lines(path, lines, &manifest);
}

}  // namespace onlstm
