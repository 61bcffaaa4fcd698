#pragma once

// The three coherence metrics, computed over any pair scorer.

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssn/baselines.hpp"
#include "ssn/data.hpp"
#include "ssn/error.hpp"
#include "ssn/similarity.hpp"

namespace ssn {

/// Deterministic pair-scoring function. `unit_range` promises scores in [0,1].
struct Scorer {
  std::function<double(std::span<const std::string>, std::span<const std::string>)> fn;
  bool unit_range = false;

  double operator()(std::span<const std::string> a, std::span<const std::string> b) const { return fn(a, b); }
};

struct Accuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::size_t ties = 0;

  double value() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  bool operator==(const Accuracy&) const = default;
};

/// Absent metrics are not applicable to the scorer that produced the report.
struct MetricReport {
  std::optional<Accuracy> sentence_order;
  std::optional<Accuracy> story_order;
  std::optional<Accuracy> pair_classification;

  bool operator==(const MetricReport&) const = default;
};

/// Matched comparison: correct iff score(positive) > score(negative). Ties fail.
inline Accuracy sentence_order_accuracy(const Scorer& scorer, const PairDataset& ds) {
  if (ds.matches.empty()) throw InvalidArgument("sentence_order_accuracy: no matched pairs");
  Accuracy acc;
  for (const auto& m : ds.matches) {
    const auto& p = ds.examples[m.positive];
    const auto& n = ds.examples[m.negative];
    const double sp = scorer(p.tokens1, p.tokens2);
    const double sn = scorer(n.tokens1, n.tokens2);
    ++acc.total;
    if (sp > sn) ++acc.correct;
    else if (sp == sn) ++acc.ties;
  }
  return acc;
}

/// Mean pair score over the consecutive sentences of a story.
inline double story_coherence_score(const Scorer& scorer, std::span<const Tokens> sentences) {
  if (sentences.size() < 2) throw InvalidArgument("story_coherence_score: need at least two sentences");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < sentences.size(); ++i) total += scorer(sentences[i], sentences[i + 1]);
  return total / static_cast<double>(sentences.size() - 1);
}

inline Accuracy story_order_accuracy(const Scorer& scorer, const StoryPairDataset& ds) {
  if (ds.pairs.empty()) throw InvalidArgument("story_order_accuracy: empty dataset");
  Accuracy acc;
  for (const auto& sp : ds.pairs) {
    const double ordered = story_coherence_score(scorer, sp.ordered);
    const double jumbled = story_coherence_score(scorer, sp.jumbled);
    ++acc.total;
    if (ordered > jumbled) ++acc.correct;
    else if (ordered == jumbled) ++acc.ties;
  }
  return acc;
}

/// Predicted label is 1 iff score > threshold. Scores exactly at the
/// threshold predict 0 and are reported as ties.
inline Accuracy pair_classification_accuracy(const Scorer& scorer, const PairDataset& ds, double threshold = 0.5) {
  if (!scorer.unit_range) {
    throw ScorerRangeMismatch("pair classification needs a scorer with scores in [0,1]");
  }
  if (ds.examples.empty()) throw InvalidArgument("pair_classification_accuracy: empty dataset");
  Accuracy acc;
  for (const auto& ex : ds.examples) {
    const double s = scorer(ex.tokens1, ex.tokens2);
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ScorerRangeMismatch("scorer produced " + std::to_string(s) + ", outside [0,1]");
    }
    const int predicted = s > threshold ? 1 : 0;
    ++acc.total;
    if (s == threshold) ++acc.ties;
    if (predicted == ex.label) ++acc.correct;
  }
  return acc;
}

/// Runs every metric the scorer supports on the datasets provided.
inline MetricReport evaluate(const Scorer& scorer, const PairDataset* pairs, const StoryPairDataset* stories) {
  MetricReport r;
  if (pairs && !pairs->matches.empty()) r.sentence_order = sentence_order_accuracy(scorer, *pairs);
  if (stories && !stories->pairs.empty()) r.story_order = story_order_accuracy(scorer, *stories);
  if (pairs && scorer.unit_range && !pairs->examples.empty()) {
    r.pair_classification = pair_classification_accuracy(scorer, *pairs);
  }
  return r;
}

namespace detail {

inline std::string join_tokens(std::span<const std::string> tokens) {
  std::string key;
  for (const auto& t : tokens) {
    key += t;
    key += '\x1f';
  }
  return key;
}

}  // namespace detail

/// Scores with the trained network in infer mode. Sentence embeddings are
/// memoized; the scorer is not safe to share across threads.
inline Scorer make_ssn_scorer(const SsnModel& model) {
  auto cache = std::make_shared<std::unordered_map<std::string, SentenceEmbedding>>();
  auto embed = [&model, cache](std::span<const std::string> t) -> const SentenceEmbedding& {
    auto key = detail::join_tokens(t);
    auto it = cache->find(key);
    if (it == cache->end()) it = cache->emplace(std::move(key), embed_sentence(model, t)).first;
    return it->second;
  };
  return {[embed](std::span<const std::string> a, std::span<const std::string> b) {
            return similarity_score(embed(a), embed(b));
          },
          true};
}

inline Scorer make_baseline_scorer(const EmbeddingTable& table, BaselineMeasure measure) {
  return {[&table, measure](std::span<const std::string> a, std::span<const std::string> b) {
            return baseline_score(table, a, b, measure);
          },
          false};
}

/// Scores 1 for pairs known to be consecutive in the data, 0 otherwise. A
/// harness self-test: it should reach 1.0 on every metric.
inline Scorer make_oracle_scorer(const PairDataset* pairs, const StoryPairDataset* stories) {
  auto known = std::make_shared<std::set<std::pair<std::string, std::string>>>();
  if (pairs) {
    for (const auto& ex : pairs->examples) {
      if (ex.label == 1) known->emplace(detail::join_tokens(ex.tokens1), detail::join_tokens(ex.tokens2));
    }
  }
  if (stories) {
    for (const auto& sp : stories->pairs) {
      for (std::size_t i = 0; i + 1 < sp.ordered.size(); ++i) {
        known->emplace(detail::join_tokens(sp.ordered[i]), detail::join_tokens(sp.ordered[i + 1]));
      }
    }
  }
  return {[known](std::span<const std::string> a, std::span<const std::string> b) {
            return known->count({detail::join_tokens(a), detail::join_tokens(b)}) ? 1.0 : 0.0;
          },
          true};
}

inline nlohmann::ordered_json to_json(const std::optional<Accuracy>& a) {
  if (!a) return nlohmann::ordered_json{{"applicable", false}};
  return nlohmann::ordered_json{{"applicable", true},
                                {"accuracy", a->value()},
                                {"correct", a->correct},
                                {"total", a->total},
                                {"ties", a->ties}};
}

inline nlohmann::ordered_json to_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["sentence_order"] = to_json(r.sentence_order);
  j["story_order"] = to_json(r.story_order);
  j["pair_classification"] = to_json(r.pair_classification);
  j["tie_policy"] = "ties count as incorrect; classification scores equal to the threshold predict 0";
  j["threshold"] = 0.5;
  return j;
}

/// Fixed-column text rendering.
inline std::string render_table(const MetricReport& r, const std::string& title = {}) {
  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s %9s %9s %9s %9s\n", "metric", "accuracy", "correct", "total", "ties");
  os << buf;
  auto row = [&](const char* name, const std::optional<Accuracy>& a) {
    if (a) {
      std::snprintf(buf, sizeof buf, "%-22s %9.4f %9zu %9zu %9zu\n", name, a->value(), a->correct, a->total,
                    a->ties);
    } else {
      std::snprintf(buf, sizeof buf, "%-22s %9s %9s %9s %9s\n", name, "n/a", "-", "-", "-");
    }
    os << buf;
  };
  row("sentence_order", r.sentence_order);
  row("story_order", r.story_order);
  row("pair_classification", r.pair_classification);
  return os.str();
}

}  // namespace ssn
