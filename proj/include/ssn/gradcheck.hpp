#pragma once

// End-to-end gradient audit: embedding lookup -> stacked LSTM -> pooling ->
// energy -> contrastive loss, against central differences.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ssn/embeddings.hpp"
#include "ssn/numcore.hpp"
#include "ssn/similarity.hpp"
#include "ssn/synth.hpp"
#include "ssn/training.hpp"

namespace ssn {

struct GradCheckCase {
  std::uint64_t seed = 0;
  bool attention = true;
  MarginMode margin_mode = MarginMode::corrected;
  int label = 1;
  double keep_prob = 1.0;
  double max_rel_error = 0.0;
};

struct GradCheckOptions {
  std::size_t hidden = 4;
  std::size_t dim = 3;
  std::size_t layers = 2;
  std::size_t max_len = 3;
  // Central-difference step. At 1e-5 the round-off in a loss near 1 is
  // about 1e-11 per difference, which swamps components around 1e-7.
  // Truncation error at 1e-4 stays below 1e-7 relative.
  double eps = 1e-4;
  // Weight matrices are redrawn from uniform(-s, s) so the pooled output
  // depends strongly on the input and gradients stay well above round-off.
  double weight_scale = 1.5;
};

/// Tiny random table over five tokens.
inline std::shared_ptr<const EmbeddingTable> tiny_table(std::size_t dim, std::uint64_t seed) {
  std::stringstream ss;
  write_random_embeddings(ss, {"a", "b", "c", "d", "e"}, dim, seed);
  return std::make_shared<const EmbeddingTable>(load_embeddings(ss));
}

/// One audited configuration. The margin is placed 0.3 on the penalized side
/// of the initial energy so negative examples exercise the active branch.
inline double grad_check_case(GradCheckCase& c, const GradCheckOptions& opt = {}) {
  SeededRng rng(c.seed);
  TrainConfig cfg;
  cfg.hidden = opt.hidden;
  cfg.layers = opt.layers;
  cfg.attention = c.attention;
  cfg.keep_prob = c.keep_prob;
  cfg.loss.margin_mode = c.margin_mode;
  SsnModel model = init_model(cfg, tiny_table(opt.dim, c.seed + 1000), rng);
  // Nonzero biases so the bias gradients are not trivially symmetric.
  for (Param* p : model.params()) {
    if (p->cols() == 1) {
      for (double& x : p->value.span()) x += rng.uniform(-0.5, 0.5);
    } else {
      for (double& x : p->value.span()) x = rng.uniform(-opt.weight_scale, opt.weight_scale);
    }
  }

  const std::vector<std::string> vocab{"a", "b", "c", "d", "e"};
  auto sentence = [&] {
    Tokens t(1 + rng.index(opt.max_len));
    for (auto& w : t) w = vocab[rng.index(vocab.size())];
    return t;
  };
  const Mode mode = c.keep_prob < 1.0 ? Mode::train : Mode::infer;
  // Redraw until the point is away from the loss's kinks: identical
  // sentences sit at E = 1, and near-zero embeddings make the cosine singular.
  PairExample ex;
  std::uint64_t dropout_seed = 0;
  double e = 0.0;
  for (;;) {
    ex = PairExample{sentence(), sentence(), c.label};
    dropout_seed = rng.next_u64();
    if (ex.tokens1 == ex.tokens2) continue;
    SeededRng r(dropout_seed);
    const auto a = embed_sentence(model, ex.tokens1, mode, r);
    const auto b = embed_sentence(model, ex.tokens2, mode, r);
    if (l2_norm(a) < 0.1 || l2_norm(b) < 0.1) continue;
    e = energy(a, b);
    break;
  }
  model.loss.margin = c.margin_mode == MarginMode::corrected ? std::max(-1.0, e - 0.3) : std::min(1.0, e + 0.3);

  auto params = model.params();
  auto loss_fn = [&](bool with_grad) {
    SeededRng r(dropout_seed);
    return with_grad ? pair_loss_grad(model, ex, mode, r) : pair_loss(model, ex, mode, r);
  };
  c.max_rel_error = finite_diff_grad_check(loss_fn, params, opt.eps);
  return c.max_rel_error;
}

/// The full audit matrix for `seeds` consecutive seeds: pooling on/off,
/// both margin modes, both labels.
inline std::vector<GradCheckCase> run_grad_check(std::uint64_t first_seed, std::size_t seeds = 5,
                                                 const GradCheckOptions& opt = {}) {
  std::vector<GradCheckCase> cases;
  for (std::uint64_t s = first_seed; s < first_seed + seeds; ++s) {
    for (bool attention : {true, false}) {
      for (MarginMode mm : {MarginMode::corrected, MarginMode::paper_literal}) {
        for (int label : {0, 1}) {
          GradCheckCase c{s, attention, mm, label};
          grad_check_case(c, opt);
          cases.push_back(c);
        }
      }
    }
  }
  return cases;
}

}  // namespace ssn
