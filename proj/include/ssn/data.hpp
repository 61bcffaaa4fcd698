#pragma once

// Corpus ingestion, tokenization, and the sentence-pair / story-pair dataset
// builders.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssn/embeddings.hpp"
#include "ssn/error.hpp"
#include "ssn/numcore.hpp"
#include "ssn/similarity.hpp"

namespace ssn {

enum class Variant { sentence, skeleton };

struct Story {
  std::string story_id;
  std::vector<std::string> sentences;
  std::optional<std::vector<Tokens>> skeletons;
};

struct Corpus {
  Variant variant = Variant::sentence;
  std::vector<Story> stories;
};

inline bool is_detachable_punct(char c) {
  return std::string_view(".,!?;:\"'()").find(c) != std::string_view::npos;
}

/// Lowercases, splits on whitespace, and peels leading/trailing punctuation
/// off each word as separate tokens. Internal punctuation ("don't") stays.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  for (auto word : detail::split_ws(text)) {
    std::size_t lo = 0, hi = word.size();
    while (lo < hi && is_detachable_punct(word[lo])) ++lo;
    while (hi > lo && is_detachable_punct(word[hi - 1])) --hi;
    for (std::size_t k = 0; k < lo; ++k) out.emplace_back(1, word[k]);
    if (hi > lo) out.push_back(to_lower(word.substr(lo, hi - lo)));
    for (std::size_t k = hi; k < word.size(); ++k) out.emplace_back(1, word[k]);
  }
  return out;
}

inline bool is_punctuation_token(std::string_view tok) {
  return !tok.empty() &&
         std::all_of(tok.begin(), tok.end(), [](char c) { return std::ispunct(static_cast<unsigned char>(c)); });
}

/// Stopword and punctuation removal. Never returns an empty list for
/// non-empty input: when everything would be removed the input comes back.
inline Tokens heuristic_skeleton(const Tokens& tokens, const std::unordered_set<std::string>& stopwords) {
  Tokens out;
  for (const auto& t : tokens) {
    if (is_punctuation_token(t) || stopwords.count(to_lower(t))) continue;
    out.push_back(t);
  }
  return out.empty() ? tokens : out;
}

inline std::unordered_set<std::string> load_stopwords(std::istream& in) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = detail::split_ws(line);
    if (!fields.empty()) words.insert(to_lower(fields[0]));
  }
  return words;
}

inline std::unordered_set<std::string> load_stopwords_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stopword file " + path);
  return load_stopwords(in);
}

/// JSON-lines corpus: {"story_id": str, "sentences": [str...], "skeletons": [[str...]...]?}.
inline Corpus parse_corpus(std::istream& in, Variant variant) {
  Corpus corpus;
  corpus.variant = variant;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::split_ws(line).empty()) continue;

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    Story story;
    try {
      if (!j.is_object()) throw FormatError("record is not a JSON object", line_no);
      if (!j.contains("story_id") || !j["story_id"].is_string()) {
        throw FormatError("missing string field \"story_id\"", line_no);
      }
      if (!j.contains("sentences") || !j["sentences"].is_array()) {
        throw FormatError("missing array field \"sentences\"", line_no);
      }
      story.story_id = j["story_id"].get<std::string>();
      story.sentences = j["sentences"].get<std::vector<std::string>>();
      if (j.contains("skeletons") && !j["skeletons"].is_null()) {
        std::vector<Tokens> sk = j["skeletons"].get<std::vector<Tokens>>();
        for (auto& toks : sk) {
          for (auto& t : toks) t = to_lower(t);
        }
        story.skeletons = std::move(sk);
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad field type: ") + e.what(), line_no);
    }
    if (story.sentences.empty()) throw FormatError("story has no sentences", line_no);
    if (story.skeletons && story.skeletons->size() != story.sentences.size()) {
      throw FormatError("skeleton count " + std::to_string(story.skeletons->size()) +
                            " does not match sentence count " + std::to_string(story.sentences.size()),
                        line_no);
    }
    if (variant == Variant::skeleton && !story.skeletons) {
      throw FormatError("skeleton variant requires a \"skeletons\" field", line_no);
    }
    if (!seen.insert(story.story_id).second) {
      throw FormatError("duplicate story_id \"" + story.story_id + "\"", line_no);
    }
    corpus.stories.push_back(std::move(story));
  }
  return corpus;
}

inline Corpus parse_corpus_file(const std::string& path, Variant variant) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path);
  return parse_corpus(in, variant);
}

/// Fills missing skeletons with heuristic_skeleton output and switches the
/// corpus to the skeleton variant.
inline void attach_heuristic_skeletons(Corpus& corpus, const std::unordered_set<std::string>& stopwords) {
  for (auto& story : corpus.stories) {
    if (story.skeletons) continue;
    std::vector<Tokens> sk;
    for (const auto& s : story.sentences) sk.push_back(heuristic_skeleton(tokenize(s), stopwords));
    story.skeletons = std::move(sk);
  }
  corpus.variant = Variant::skeleton;
}

/// Token lists for a story's sentences under the corpus variant.
inline std::vector<Tokens> story_tokens(const Story& story, Variant variant) {
  if (variant == Variant::skeleton) {
    if (!story.skeletons) throw InvalidArgument("story " + story.story_id + " has no skeletons");
    return *story.skeletons;
  }
  std::vector<Tokens> out;
  out.reserve(story.sentences.size());
  for (const auto& s : story.sentences) out.push_back(tokenize(s));
  return out;
}

struct PairOrigin {
  std::string story1;
  std::size_t sentence1 = 0;
  std::string story2;
  std::size_t sentence2 = 0;
};

struct MatchedPair {
  std::size_t positive = 0;
  std::size_t negative = 0;
};

/// Positive (consecutive) pairs, each matched to one negative that shares its
/// first sentence.
struct PairDataset {
  std::vector<PairExample> examples;
  std::vector<PairOrigin> origins;  // parallel to examples
  std::vector<MatchedPair> matches;
  std::size_t skipped_sentences = 0;

  std::size_t positives() const {
    return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(),
                                                  [](const PairExample& e) { return e.label == 1; }));
  }
  std::size_t negatives() const { return examples.size() - positives(); }
};

struct StoryPair {
  std::string story_id;
  std::vector<Tokens> ordered;
  std::vector<Tokens> jumbled;
  std::vector<std::size_t> permutation;  // jumbled[k] = ordered[permutation[k]]
};

struct StoryPairDataset {
  std::vector<StoryPair> pairs;
  std::size_t excluded_stories = 0;
  std::size_t skipped_sentences = 0;
};

namespace detail {

struct TokenizedStory {
  std::vector<Tokens> sentences;      // non-empty sentences only
  std::vector<std::size_t> positions;  // original sentence index of each
};

inline std::vector<TokenizedStory> tokenize_corpus(const Corpus& corpus, std::size_t& skipped) {
  std::vector<TokenizedStory> out;
  out.reserve(corpus.stories.size());
  for (const auto& story : corpus.stories) {
    TokenizedStory ts;
    auto all = story_tokens(story, corpus.variant);
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i].empty()) {
        ++skipped;
        continue;
      }
      ts.sentences.push_back(std::move(all[i]));
      ts.positions.push_back(i);
    }
    out.push_back(std::move(ts));
  }
  return out;
}

}  // namespace detail

/// For each consecutive pair within a story, one positive plus one negative
/// whose second sentence is drawn uniformly from a uniformly drawn other
/// story (with replacement across negatives). Sentences that tokenize to
/// nothing are skipped and counted.
inline PairDataset build_sentence_pairs(const Corpus& corpus, SeededRng& rng) {
  if (corpus.stories.size() < 2) {
    throw InvalidArgument("build_sentence_pairs: need at least two stories to draw negatives");
  }
  PairDataset ds;
  const auto stories = detail::tokenize_corpus(corpus, ds.skipped_sentences);

  std::vector<std::size_t> sources;
  for (std::size_t s = 0; s < stories.size(); ++s) {
    if (!stories[s].sentences.empty()) sources.push_back(s);
  }

  bool any_pair = false;
  for (std::size_t s = 0; s < stories.size(); ++s) {
    const auto& st = stories[s];
    if (st.sentences.size() < 2) continue;
    any_pair = true;
    std::vector<std::size_t> others;
    for (std::size_t o : sources) {
      if (o != s) others.push_back(o);
    }
    if (others.empty()) {
      throw InvalidArgument("build_sentence_pairs: no other story has a usable sentence");
    }
    const auto& id = corpus.stories[s].story_id;
    for (std::size_t i = 0; i + 1 < st.sentences.size(); ++i) {
      const std::size_t other = others[rng.index(others.size())];
      const auto& os = stories[other];
      const std::size_t r = rng.index(os.sentences.size());

      const std::size_t pos = ds.examples.size();
      ds.examples.push_back({st.sentences[i], st.sentences[i + 1], 1});
      ds.origins.push_back({id, st.positions[i], id, st.positions[i + 1]});
      ds.examples.push_back({st.sentences[i], os.sentences[r], 0});
      ds.origins.push_back({id, st.positions[i], corpus.stories[other].story_id, os.positions[r]});
      ds.matches.push_back({pos, pos + 1});
    }
  }
  if (!any_pair) throw InvalidArgument("build_sentence_pairs: no story has two usable sentences");
  return ds;
}

/// One non-identity uniform shuffle per story with at least two sentences.
inline StoryPairDataset build_story_pairs(const Corpus& corpus, SeededRng& rng) {
  StoryPairDataset ds;
  const auto stories = detail::tokenize_corpus(corpus, ds.skipped_sentences);
  for (std::size_t s = 0; s < stories.size(); ++s) {
    const auto& st = stories[s];
    const bool all_same = std::all_of(st.sentences.begin(), st.sentences.end(),
                                      [&](const Tokens& t) { return t == st.sentences.front(); });
    // A story of identical sentences has no distinguishable reordering.
    if (st.sentences.size() < 2 || all_same) {
      ++ds.excluded_stories;
      continue;
    }
    StoryPair sp;
    sp.story_id = corpus.stories[s].story_id;
    sp.ordered = st.sentences;
    std::vector<std::size_t> perm(st.sentences.size());
    do {
      for (std::size_t k = 0; k < perm.size(); ++k) perm[k] = k;
      rng.shuffle(perm);
      sp.jumbled.clear();
      for (std::size_t k : perm) sp.jumbled.push_back(st.sentences[k]);
    } while (sp.jumbled == sp.ordered);
    sp.permutation = std::move(perm);
    ds.pairs.push_back(std::move(sp));
  }
  return ds;
}

// Dataset files. One JSON object per line.
//   pairs:   {"group": k, "label": 0|1, "tokens1": [...], "tokens2": [...],
//             "story1": id, "sentence1": i, "story2": id, "sentence2": j}
//   stories: {"story_id": id, "ordered": [[...]...], "jumbled": [[...]...], "permutation": [...]}
// Each group holds one positive and its matched negative.

inline void write_pairs(std::ostream& out, const PairDataset& ds) {
  std::vector<std::size_t> group(ds.examples.size(), 0);
  for (std::size_t g = 0; g < ds.matches.size(); ++g) {
    group[ds.matches[g].positive] = g;
    group[ds.matches[g].negative] = g;
  }
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const auto& ex = ds.examples[i];
    nlohmann::ordered_json j;
    j["group"] = group[i];
    j["label"] = ex.label;
    j["tokens1"] = ex.tokens1;
    j["tokens2"] = ex.tokens2;
    if (i < ds.origins.size()) {
      const auto& o = ds.origins[i];
      j["story1"] = o.story1;
      j["sentence1"] = o.sentence1;
      j["story2"] = o.story2;
      j["sentence2"] = o.sentence2;
    }
    out << j.dump() << '\n';
  }
}

inline PairDataset read_pairs(std::istream& in) {
  PairDataset ds;
  std::vector<std::optional<std::size_t>> pos_of, neg_of;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::split_ws(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PairExample ex{j.at("tokens1").get<Tokens>(), j.at("tokens2").get<Tokens>(), j.at("label").get<int>()};
      if (ex.label != 0 && ex.label != 1) throw FormatError("label must be 0 or 1", line_no);
      if (ex.tokens1.empty() || ex.tokens2.empty()) throw FormatError("empty token list", line_no);
      PairOrigin o;
      if (j.contains("story1")) {
        o = {j.at("story1").get<std::string>(), j.at("sentence1").get<std::size_t>(),
             j.at("story2").get<std::string>(), j.at("sentence2").get<std::size_t>()};
      }
      const std::size_t idx = ds.examples.size();
      if (j.contains("group")) {
        const auto g = j.at("group").get<std::size_t>();
        if (g >= pos_of.size()) {
          pos_of.resize(g + 1);
          neg_of.resize(g + 1);
        }
        auto& slot = ex.label == 1 ? pos_of[g] : neg_of[g];
        if (slot) throw FormatError("group " + std::to_string(g) + " has two examples with the same label", line_no);
        slot = idx;
      }
      ds.examples.push_back(std::move(ex));
      ds.origins.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad pair record: ") + e.what(), line_no);
    }
  }
  for (std::size_t g = 0; g < pos_of.size(); ++g) {
    if (pos_of[g].has_value() != neg_of[g].has_value()) {
      throw FormatError("group " + std::to_string(g) + " lacks a matched positive/negative", 0);
    }
    if (pos_of[g]) ds.matches.push_back({*pos_of[g], *neg_of[g]});
  }
  return ds;
}

inline void write_stories(std::ostream& out, const StoryPairDataset& ds) {
  for (const auto& sp : ds.pairs) {
    nlohmann::ordered_json j;
    j["story_id"] = sp.story_id;
    j["ordered"] = sp.ordered;
    j["jumbled"] = sp.jumbled;
    j["permutation"] = sp.permutation;
    out << j.dump() << '\n';
  }
}

inline StoryPairDataset read_stories(std::istream& in) {
  StoryPairDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::split_ws(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StoryPair sp;
      sp.story_id = j.at("story_id").get<std::string>();
      sp.ordered = j.at("ordered").get<std::vector<Tokens>>();
      sp.jumbled = j.at("jumbled").get<std::vector<Tokens>>();
      if (j.contains("permutation")) sp.permutation = j.at("permutation").get<std::vector<std::size_t>>();
      if (sp.ordered.size() < 2) throw FormatError("story pair needs at least two sentences", line_no);
      if (sp.ordered.size() != sp.jumbled.size()) {
        throw FormatError("ordered and jumbled lengths differ", line_no);
      }
      ds.pairs.push_back(std::move(sp));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("bad story record: ") + e.what(), line_no);
    }
  }
  return ds;
}

inline PairDataset read_pairs_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs file " + path);
  return read_pairs(in);
}

inline StoryPairDataset read_stories_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stories file " + path);
  return read_stories(in);
}

}  // namespace ssn
