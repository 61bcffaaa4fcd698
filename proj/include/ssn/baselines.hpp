#pragma once

// Non-parametric pair scorers over mean-pooled word vectors.

#include <algorithm>
#include <span>
#include <string>

#include "ssn/embeddings.hpp"
#include "ssn/error.hpp"
#include "ssn/numcore.hpp"

namespace ssn {

enum class BaselineMeasure { cosine, neg_euclidean };

inline const char* to_string(BaselineMeasure m) {
  return m == BaselineMeasure::cosine ? "cosine" : "neg_euclidean";
}

inline double baseline_score(const EmbeddingTable& table, std::span<const std::string> tokens1,
                             std::span<const std::string> tokens2, BaselineMeasure measure) {
  const Vector v1 = embed_sentence_mean(table, tokens1);
  const Vector v2 = embed_sentence_mean(table, tokens2);
  if (measure == BaselineMeasure::neg_euclidean) return -l2_norm(v1 - v2);
  const double n1 = l2_norm(v1), n2 = l2_norm(v2);
  if (n1 == 0.0 || n2 == 0.0) throw DegenerateEmbedding();
  return std::clamp(dot(v1, v2) / (n1 * n2), -1.0, 1.0);
}

}  // namespace ssn
