#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ssn/digest.hpp"
#include "ssn/error.hpp"
#include "ssn/numcore.hpp"

namespace ssn {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

inline bool parse_double(std::string_view s, double& out) {
  // strtod rather than from_chars: libstdc++ 11 lacks floating from_chars on some targets.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && !tmp.empty() && std::isfinite(out);
}

inline bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace detail

/// Token -> fixed-dimension vector lookup. Tokens are case-folded; unknown
/// tokens map to a single UNK vector, the centroid of all loaded vectors.
/// Immutable once loaded.
class EmbeddingTable {
 public:
  std::size_t dim() const noexcept { return dim_; }
  std::size_t vocab_size() const noexcept { return tokens_.size(); }
  std::size_t duplicate_count() const noexcept { return duplicates_; }
  const Vector& unk() const noexcept { return unk_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool contains(std::string_view token) const { return index_.count(to_lower(token)) > 0; }

  const Vector& lookup(std::string_view token) const {
    auto it = index_.find(to_lower(token));
    return it == index_.end() ? unk_ : vectors_[it->second];
  }

  /// Fingerprint over tokens and vector bits in load order. Two tables with
  /// the same fingerprint produce the same lookups.
  std::uint64_t vocabulary_hash() const noexcept { return hash_; }

  friend EmbeddingTable load_embeddings(std::istream& in);

 private:
  std::size_t dim_ = 0;
  std::size_t duplicates_ = 0;
  std::vector<std::string> tokens_;
  std::vector<Vector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
  Vector unk_;
  std::uint64_t hash_ = 0;
};

/// Parses word2vec-style text vectors: an optional "count dim" header, then
/// "token v1 ... vd" per line. First occurrence of a duplicate token wins.
inline EmbeddingTable load_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = detail::split_ws(line);
    if (fields.empty()) continue;

    if (first_content) {
      first_content = false;
      std::size_t count = 0, dim = 0;
      if (fields.size() == 2 && detail::parse_size(fields[0], count) &&
          detail::parse_size(fields[1], dim)) {
        if (dim == 0) throw FormatError("embedding header declares zero dimension", line_no);
        table.dim_ = dim;
        continue;
      }
    }

    if (fields.size() < 2) throw FormatError("expected a token followed by vector components", line_no);
    const std::size_t d = fields.size() - 1;
    if (table.dim_ == 0) table.dim_ = d;
    if (d != table.dim_) {
      throw FormatError("vector has " + std::to_string(d) + " components, expected " +
                            std::to_string(table.dim_),
                        line_no);
    }
    Vector v(d);
    for (std::size_t k = 0; k < d; ++k) {
      if (!detail::parse_double(fields[k + 1], v[k])) {
        throw FormatError("non-numeric component '" + std::string(fields[k + 1]) + "'", line_no);
      }
    }
    std::string token = to_lower(fields[0]);
    if (table.index_.count(token)) {
      ++table.duplicates_;
      continue;
    }
    table.index_.emplace(token, table.tokens_.size());
    table.tokens_.push_back(std::move(token));
    table.vectors_.push_back(std::move(v));
  }
  if (table.vectors_.empty()) throw FormatError("embedding stream contains no vectors", 0);

  table.unk_ = Vector(table.dim_);
  for (const auto& v : table.vectors_) {
    for (std::size_t k = 0; k < table.dim_; ++k) table.unk_[k] += v[k];
  }
  for (double& x : table.unk_) x /= static_cast<double>(table.vectors_.size());

  Fnv1a h;
  h.update(std::to_string(table.dim_));
  for (std::size_t i = 0; i < table.tokens_.size(); ++i) {
    h.update(table.tokens_[i]);
    h.update(std::string_view("\0", 1));
    for (double x : table.vectors_[i]) h.update(x);
  }
  table.hash_ = h.value();
  return table;
}

inline EmbeddingTable load_embeddings_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file " + path);
  return load_embeddings(in);
}

inline const Vector& lookup(const EmbeddingTable& table, std::string_view token) {
  return table.lookup(token);
}

/// Mean of the per-token vectors, accumulated in input order.
inline Vector embed_sentence_mean(const EmbeddingTable& table, std::span<const std::string> tokens) {
  if (tokens.empty()) throw EmptySentence("embed_sentence_mean: empty token list");
  Vector mean(table.dim());
  for (const auto& t : tokens) {
    const Vector& v = table.lookup(t);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
  }
  for (double& x : mean) x /= static_cast<double>(tokens.size());
  return mean;
}

}  // namespace ssn
