#pragma once
// Word-vector files, tokenization and fixed-length sentence embedding.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "diamat/common.hpp"
#include "diamat/tensor.hpp"

namespace diamat {

// Immutable token -> vector lookup parsed from a text .vec file.
struct VectorTable {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<double>> entries;
  // Order of first appearance, for deterministic re-serialization.
  std::vector<std::string> order;
  std::size_t skipped_lines = 0;

  std::size_t token_count() const { return entries.size(); }

  const std::vector<double>* find(std::string_view token) const {
    auto it = entries.find(std::string(token));
    return it == entries.end() ? nullptr : &it->second;
  }

  // Returns false (and keeps the existing entry) on duplicates.
  bool insert(std::string token, std::vector<double> vec) {
    if (vec.size() != dimension) throw ConfigError("vector length does not match table dimension");
    auto [it, inserted] = entries.emplace(token, std::move(vec));
    if (inserted) order.push_back(std::move(token));
    return inserted;
  }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace detail

inline VectorTable parse_vectors(std::istream& in, std::string_view name = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw DataError("vector file " + std::string(name) + ": missing header");
  const auto head = detail::split_ws(line);
  std::size_t count = 0;
  std::size_t dim = 0;
  if (head.size() != 2 || !detail::parse_number(head[0], count) || !detail::parse_number(head[1], dim) ||
      dim == 0)
    throw DataError("vector file " + std::string(name) + ": malformed header '" + line + "'");

  VectorTable table;
  table.dimension = dim;
  table.entries.reserve(count);
  while (std::getline(in, line)) {
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != dim + 1) {
      ++table.skipped_lines;
      continue;
    }
    std::vector<double> vec(dim);
    bool ok = true;
    for (std::size_t k = 0; k < dim && ok; ++k) ok = detail::parse_number(fields[k + 1], vec[k]);
    if (!ok) {
      ++table.skipped_lines;
      continue;
    }
    table.insert(std::string(fields[0]), std::move(vec));
  }
  return table;
}

inline VectorTable parse_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vector file " + path);
  return parse_vectors(in, path);
}

inline void write_vectors(std::ostream& out, const VectorTable& table) {
  out << table.token_count() << ' ' << table.dimension << '\n';
  out.precision(17);
  for (const auto& token : table.order) {
    out << token;
    for (double v : table.entries.at(token)) out << ' ' << v;
    out << '\n';
  }
}

// Whitespace tokenizer that detaches punctuation and English clitics
// ("doesn't" -> "does" "n't"). Case is preserved.
namespace detail {

inline bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Splits trailing punctuation and clitic suffixes until neither applies.
inline void split_core(std::string_view core, std::vector<std::string>& out) {
  static constexpr std::string_view kClitics[] = {"n't", "N'T", "'s", "'re", "'ve", "'ll", "'d", "'m",
                                                  "'S", "'RE", "'VE", "'LL", "'D", "'M"};
  std::vector<std::string> tail;  // reversed
  for (bool changed = true; changed && !core.empty();) {
    changed = false;
    if (core.size() > 1 && is_split_punct(core.back())) {
      tail.emplace_back(1, core.back());
      core.remove_suffix(1);
      changed = true;
      continue;
    }
    for (auto clitic : kClitics) {
      if (core.size() > clitic.size() && ends_with(core, clitic)) {
        tail.emplace_back(clitic);
        core.remove_suffix(clitic.size());
        changed = true;
        break;
      }
    }
  }
  if (!core.empty()) out.emplace_back(core);
  out.insert(out.end(), tail.rbegin(), tail.rend());
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto chunk : detail::split_ws(text)) {
    while (chunk.size() > 1 && detail::is_split_punct(chunk.front())) {
      out.emplace_back(1, chunk.front());
      chunk.remove_prefix(1);
    }
    detail::split_core(chunk, out);
  }
  return out;
}

// Fixed-length embedding of one token sequence. Rows at or beyond
// valid_length are zero padding.
struct TokenMatrix {
  std::vector<std::string> tokens;
  Matrix values;
  std::size_t valid_length = 0;

  std::size_t max_len() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

inline TokenMatrix embed_sentence(const std::vector<std::string>& tokens, const VectorTable& table,
                                  std::size_t max_len) {
  if (max_len == 0) throw ConfigError("max_len must be positive");
  TokenMatrix m;
  m.valid_length = std::min(tokens.size(), max_len);
  m.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(m.valid_length));
  m.values = Matrix(max_len, table.dimension);
  for (std::size_t i = 0; i < m.valid_length; ++i) {
    if (const auto* vec = table.find(m.tokens[i])) std::copy(vec->begin(), vec->end(), m.values.row(i).begin());
  }
  return m;
}

inline TokenMatrix embed_text(std::string_view text, const VectorTable& table, std::size_t max_len) {
  return embed_sentence(tokenize(text), table, max_len);
}

}  // namespace diamat
