#pragma once

// Synthetic coherence corpus. Each story draws from one of K disjoint topic
// vocabularies. Sentence i reads "m_i t e_i t e_(i+1) t ." where t is a
// random topic word, e_* walks a per-story entity chain (so consecutive
// sentences share an entity) and m_i is a position marker shared by all
// topics, a stand-in for discourse connectives like "then" or "finally".
// Mean-embedding cosine sees the topic and the shared entity; only an
// order-aware model can use the markers.

#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssn/error.hpp"
#include "ssn/numcore.hpp"

namespace ssn {

struct SynthConfig {
  std::size_t stories = 200;
  std::size_t topics = 10;
  std::size_t sentences_per_story = 5;
  std::size_t topic_words = 6;
  std::size_t entities_per_topic = 10;
  std::uint64_t seed = 0;
};

inline std::string synth_topic_word(std::size_t topic, std::size_t j) {
  return "t" + std::to_string(topic) + "w" + std::to_string(j);
}
inline std::string synth_entity(std::size_t topic, std::size_t j) {
  return "t" + std::to_string(topic) + "e" + std::to_string(j);
}
inline std::string synth_marker(std::size_t i) { return "m" + std::to_string(i); }

/// Every token the generator can emit, sorted by kind then index.
inline std::vector<std::string> synth_vocabulary(const SynthConfig& cfg) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < cfg.sentences_per_story; ++i) v.push_back(synth_marker(i));
  for (std::size_t t = 0; t < cfg.topics; ++t) {
    for (std::size_t j = 0; j < cfg.topic_words; ++j) v.push_back(synth_topic_word(t, j));
    for (std::size_t j = 0; j < cfg.entities_per_topic; ++j) v.push_back(synth_entity(t, j));
  }
  v.push_back(".");
  return v;
}

/// Writes one JSON-lines story per line.
inline void write_synth_corpus(std::ostream& out, const SynthConfig& cfg) {
  if (cfg.topics == 0 || cfg.stories == 0 || cfg.topic_words == 0) {
    throw InvalidArgument("synth: stories, topics and topic words must be positive");
  }
  if (cfg.entities_per_topic < cfg.sentences_per_story + 1) {
    throw InvalidArgument("synth: not enough entities per topic for the chain");
  }
  SeededRng rng(cfg.seed);
  for (std::size_t s = 0; s < cfg.stories; ++s) {
    const std::size_t topic = rng.index(cfg.topics);
    std::vector<std::size_t> chain(cfg.entities_per_topic);
    for (std::size_t j = 0; j < chain.size(); ++j) chain[j] = j;
    rng.shuffle(chain);

    std::vector<std::string> sentences;
    for (std::size_t i = 0; i < cfg.sentences_per_story; ++i) {
      auto topical = [&] { return synth_topic_word(topic, rng.index(cfg.topic_words)); };
      const std::vector<std::string> words{synth_marker(i),  topical(), synth_entity(topic, chain[i]),
                                           topical(),        synth_entity(topic, chain[i + 1]), topical()};
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
      sentences.push_back(text + ".");
    }
    nlohmann::ordered_json j;
    std::ostringstream id;
    id << "synth-" << std::setw(5) << std::setfill('0') << s;
    j["story_id"] = id.str();
    j["sentences"] = sentences;
    out << j.dump() << '\n';
  }
}

/// Random uniform(-1, 1) vectors for `vocab`, word2vec text layout with header.
inline void write_random_embeddings(std::ostream& out, const std::vector<std::string>& vocab, std::size_t dim,
                                    std::uint64_t seed) {
  SeededRng rng(seed);
  out << vocab.size() << ' ' << dim << '\n';
  char buf[32];
  for (const auto& w : vocab) {
    out << w;
    for (std::size_t k = 0; k < dim; ++k) {
      std::snprintf(buf, sizeof buf, " %.6f", rng.uniform(-1.0, 1.0));
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace ssn
