#pragma once

// Siamese head: energy (cosine), the [0,1] similarity score, and the
// contrastive loss over pairs and batches.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssn/embeddings.hpp"
#include "ssn/encoder.hpp"
#include "ssn/error.hpp"
#include "ssn/numcore.hpp"

namespace ssn {

using Tokens = std::vector<std::string>;

enum class MarginMode {
  corrected,      // penalize negatives whose energy exceeds the margin
  paper_literal,  // penalize negatives whose energy is below the margin
};

struct LossConfig {
  double margin = 0.5;
  MarginMode margin_mode = MarginMode::corrected;
};

struct PairExample {
  Tokens tokens1;
  Tokens tokens2;
  int label = 0;  // 1 coherent, 0 not
};

/// Both branches run through the same `encoder`; there is only one parameter set.
struct SsnModel {
  std::shared_ptr<const EmbeddingTable> embeddings;
  EncoderParams encoder;
  LossConfig loss;

  std::vector<Param*> params() { return encoder.params(); }
};

inline double energy(const Vector& e1, const Vector& e2) {
  check_same_size(e1.size(), e2.size(), "energy");
  if (!all_finite(e1.span()) || !all_finite(e2.span())) throw NumericError("non-finite sentence embedding");
  const double n1 = l2_norm(e1), n2 = l2_norm(e2);
  if (n1 == 0.0 || n2 == 0.0) throw DegenerateEmbedding();
  return std::clamp(dot(e1, e2) / (n1 * n2), -1.0, 1.0);
}

/// 1 - |e1/|e1| - e2/|e2|| / 2, computed from the normalized difference directly.
inline double similarity_score(const Vector& e1, const Vector& e2) {
  check_same_size(e1.size(), e2.size(), "similarity_score");
  if (!all_finite(e1.span()) || !all_finite(e2.span())) throw NumericError("non-finite sentence embedding");
  const double n1 = l2_norm(e1), n2 = l2_norm(e2);
  if (n1 == 0.0 || n2 == 0.0) throw DegenerateEmbedding();
  Vector diff(e1.size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = e1[k] / n1 - e2[k] / n2;
  return std::clamp(1.0 - l2_norm(diff) / 2.0, 0.0, 1.0);
}

inline double loss_pos(double e) { return 0.25 * (1.0 - e) * (1.0 - e); }

inline bool negative_penalized(double e, const LossConfig& cfg) {
  return cfg.margin_mode == MarginMode::corrected ? e > cfg.margin : e < cfg.margin;
}

inline double loss_neg(double e, const LossConfig& cfg) { return negative_penalized(e, cfg) ? e * e : 0.0; }

inline double pair_loss_from_energy(double e, int label, const LossConfig& cfg) {
  return label == 1 ? loss_pos(e) : loss_neg(e, cfg);
}

/// d(loss)/d(energy).
inline double pair_loss_slope(double e, int label, const LossConfig& cfg) {
  if (label == 1) return -0.5 * (1.0 - e);
  return negative_penalized(e, cfg) ? 2.0 * e : 0.0;
}

inline std::vector<Vector> lookup_all(const EmbeddingTable& table, std::span<const std::string> tokens) {
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(table.lookup(t));
  return out;
}

inline SentenceEmbedding embed_sentence(const SsnModel& model, std::span<const std::string> tokens, Mode mode,
                                        SeededRng& rng) {
  if (tokens.empty()) throw EmptySentence();
  const auto inputs = lookup_all(*model.embeddings, tokens);
  return encode_sentence_traced(model.encoder, inputs, mode, rng).embedding;
}

inline SentenceEmbedding embed_sentence(const SsnModel& model, std::span<const std::string> tokens) {
  SeededRng unused(0);
  return embed_sentence(model, tokens, Mode::infer, unused);
}

inline void check_example(const PairExample& ex) {
  if (ex.tokens1.empty() || ex.tokens2.empty()) throw EmptySentence();
  if (ex.label != 0 && ex.label != 1) throw InvalidArgument("pair label must be 0 or 1");
}

inline double pair_loss(const SsnModel& model, const PairExample& ex, Mode mode, SeededRng& rng) {
  check_example(ex);
  const auto e1 = embed_sentence(model, ex.tokens1, mode, rng);
  const auto e2 = embed_sentence(model, ex.tokens2, mode, rng);
  return pair_loss_from_energy(energy(e1, e2), ex.label, model.loss);
}

inline double pair_loss(const SsnModel& model, const PairExample& ex) {
  SeededRng unused(0);
  return pair_loss(model, ex, Mode::infer, unused);
}

/// Pair loss with gradients accumulated into the model's parameters.
inline double pair_loss_grad(SsnModel& model, const PairExample& ex, Mode mode, SeededRng& rng) {
  check_example(ex);
  const auto in1 = lookup_all(*model.embeddings, ex.tokens1);
  const auto in2 = lookup_all(*model.embeddings, ex.tokens2);
  const auto s1 = encode_sentence_traced(model.encoder, in1, mode, rng);
  const auto s2 = encode_sentence_traced(model.encoder, in2, mode, rng);
  const Vector& a = s1.embedding;
  const Vector& b = s2.embedding;

  const double e = energy(a, b);
  const double loss = pair_loss_from_energy(e, ex.label, model.loss);
  const double slope = pair_loss_slope(e, ex.label, model.loss);
  if (slope == 0.0) return loss;

  const double na = l2_norm(a), nb = l2_norm(b);
  Vector da(a.size()), db(b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    da[k] = slope * (b[k] / (na * nb) - e * a[k] / (na * na));
    db[k] = slope * (a[k] / (na * nb) - e * b[k] / (nb * nb));
  }
  sentence_backward(model.encoder, s1, da);
  sentence_backward(model.encoder, s2, db);
  return loss;
}

/// Sum of pair losses over the batch.
inline double batch_loss(const SsnModel& model, std::span<const PairExample> batch, Mode mode, SeededRng& rng) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) total += pair_loss(model, ex, mode, rng);
  return total;
}

inline double batch_loss(const SsnModel& model, std::span<const PairExample> batch) {
  SeededRng unused(0);
  return batch_loss(model, batch, Mode::infer, unused);
}

inline double batch_loss_grad(SsnModel& model, std::span<const PairExample> batch, Mode mode, SeededRng& rng) {
  if (batch.empty()) throw InvalidArgument("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) total += pair_loss_grad(model, ex, mode, rng);
  return total;
}

/// Inference-time pair score in [0,1].
inline double score_pair(const SsnModel& model, std::span<const std::string> t1, std::span<const std::string> t2) {
  return similarity_score(embed_sentence(model, t1), embed_sentence(model, t2));
}

}  // namespace ssn
