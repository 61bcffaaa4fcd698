#pragma once

// Subcommands of the `ssn` executable. Exit codes: 0 success, 2 input or
// format error, 3 numeric failure, 4 verification failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssn/ssn.hpp"

namespace ssn::cli {

inline constexpr const char* tool_version = "0.1.0";

enum ExitCode : int { ok = 0, input_error = 2, numeric_error = 3, verification_error = 4 };

/// Resolved invocation, written next to the primary output. Contains no
/// timestamps, so equal manifests imply byte-identical outputs.
struct RunManifest {
  explicit RunManifest(std::string sub) : subcommand(std::move(sub)) {}

  std::string subcommand;
  nlohmann::ordered_json flags = nlohmann::ordered_json::object();
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;  // path -> digest

  void add_input(const std::string& path) {
    if (!path.empty()) inputs[path] = file_digest(path);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "ssn";
    j["version"] = tool_version;
    j["subcommand"] = subcommand;
    j["flags"] = flags;
    j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
    j["inputs"] = nlohmann::ordered_json::object();
    for (const auto& [path, digest] : inputs) j["inputs"][path] = digest;
    return j;
  }
};

struct Context {
  std::ostream& out;
  std::ostream& err;
};

inline void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << contents;
  if (!f) throw Error("failed writing " + path);
}

/// Writes to `explicit_path`, else `<default_stem>.manifest.json`, else stderr.
inline void emit_manifest(const Context& ctx, const RunManifest& m, const std::string& explicit_path,
                          const std::string& default_stem) {
  const std::string text = m.to_json().dump(2) + "\n";
  if (!explicit_path.empty()) write_text_file(explicit_path, text);
  else if (!default_stem.empty()) write_text_file(default_stem + ".manifest.json", text);
  else ctx.err << "manifest: " << m.to_json().dump() << '\n';
}

inline Variant parse_variant(const std::string& s) { return s == "skeleton" ? Variant::skeleton : Variant::sentence; }

inline std::shared_ptr<const EmbeddingTable> load_table(const std::string& path) {
  return std::make_shared<const EmbeddingTable>(load_embeddings_file(path));
}

struct BuildPairsArgs {
  std::string corpus, variant = "sentence", out, out_stories, stopwords, manifest;
  std::uint64_t seed = 0;
};

inline int cmd_build_pairs(const Context& ctx, const BuildPairsArgs& a) {
  const Variant variant = parse_variant(a.variant);
  Corpus corpus;
  if (variant == Variant::skeleton && !a.stopwords.empty()) {
    corpus = parse_corpus_file(a.corpus, Variant::sentence);
    attach_heuristic_skeletons(corpus, load_stopwords_file(a.stopwords));
  } else {
    corpus = parse_corpus_file(a.corpus, variant);
  }
  SeededRng pair_rng(a.seed);
  const PairDataset pairs = build_sentence_pairs(corpus, pair_rng);
  SeededRng story_rng(a.seed);
  const StoryPairDataset stories = build_story_pairs(corpus, story_rng);

  std::ostringstream ps, ss;
  write_pairs(ps, pairs);
  write_stories(ss, stories);
  write_text_file(a.out, ps.str());
  if (!a.out_stories.empty()) write_text_file(a.out_stories, ss.str());

  ctx.out << "stories " << corpus.stories.size() << '\n'
          << "positives " << pairs.positives() << '\n'
          << "negatives " << pairs.negatives() << '\n'
          << "story_pairs " << stories.pairs.size() << '\n'
          << "excluded_stories " << stories.excluded_stories << '\n'
          << "skipped_empty_sentences " << pairs.skipped_sentences << '\n';

  RunManifest m{"build-pairs"};
  m.flags = {{"corpus", a.corpus},   {"variant", a.variant},         {"seed", a.seed},
             {"out", a.out},         {"out_stories", a.out_stories}, {"stopwords", a.stopwords}};
  m.seed = a.seed;
  m.add_input(a.corpus);
  m.add_input(a.stopwords);
  emit_manifest(ctx, m, a.manifest, a.out);
  return ok;
}

struct TrainArgs {
  std::string pairs, embeddings, preset = "ssn3", margin_mode = "corrected", optimizer = "adam";
  std::string checkpoint_out, history_out, val_pairs, manifest;
  std::size_t epochs = 100, batch = 64, hidden = 50;
  double lr = 1e-3, margin = 0.5, clip = 5.0, keep_prob = 1.0;
  std::uint64_t seed = 0;
  bool timing = false;
};

inline TrainConfig config_from_args(const TrainArgs& a) {
  TrainConfig c = a.preset == "ssna2" ? TrainConfig::ssna2() : TrainConfig::ssn3();
  c.epochs = a.epochs;
  c.batch_size = a.batch;
  c.hidden = a.hidden;
  c.learning_rate = a.lr;
  c.loss.margin = a.margin;
  c.loss.margin_mode = a.margin_mode == "paper-literal" ? MarginMode::paper_literal : MarginMode::corrected;
  c.optimizer = a.optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  c.clip_norm = a.clip;
  c.keep_prob = a.keep_prob;
  c.seed = a.seed;
  return c;
}

inline int cmd_train(const Context& ctx, const TrainArgs& a) {
  const TrainConfig cfg = config_from_args(a);
  cfg.validate();
  auto table = load_table(a.embeddings);
  const PairDataset train_pairs = read_pairs_file(a.pairs);
  std::optional<PairDataset> val;
  if (!a.val_pairs.empty()) val = read_pairs_file(a.val_pairs);

  TrainSession session = start_session(cfg, table);
  const std::string history_path = a.history_out.empty() ? a.checkpoint_out + ".history.jsonl" : a.history_out;
  std::ofstream history(history_path);
  if (!history) throw Error("cannot write " + history_path);

  const auto hist = train(session, train_pairs, val ? &*val : nullptr, [&](const EpochRecord& r) {
    history << to_json(r, a.timing).dump() << '\n';
    ctx.err << "epoch " << r.epoch << " loss " << r.loss << '\n';
  });
  save_checkpoint(a.checkpoint_out, session, a.embeddings);

  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", hist.empty() ? 0.0 : hist.back().loss);
  ctx.out << "layers " << cfg.layers << " attention " << (cfg.attention ? "on" : "off") << " hidden " << cfg.hidden
          << " batch " << cfg.batch_size << " epochs " << cfg.epochs << '\n'
          << "final_loss " << buf << '\n';

  RunManifest m{"train"};
  m.flags = to_json(cfg);
  m.flags["preset"] = a.preset;
  m.flags["pairs"] = a.pairs;
  m.flags["embeddings"] = a.embeddings;
  m.flags["val_pairs"] = a.val_pairs;
  m.flags["checkpoint_out"] = a.checkpoint_out;
  m.flags["history_out"] = history_path;
  m.seed = a.seed;
  m.add_input(a.pairs);
  m.add_input(a.embeddings);
  m.add_input(a.val_pairs);
  emit_manifest(ctx, m, a.manifest, a.checkpoint_out);
  return ok;
}

/// Loads a checkpoint together with the embeddings it names (or `override_path`).
inline Checkpoint open_checkpoint(const std::string& path, const std::string& override_path, std::string& used) {
  used = override_path.empty() ? checkpoint_embeddings_source(path) : override_path;
  if (used.empty()) throw Error("checkpoint does not record its embeddings; pass --embeddings");
  return load_checkpoint(path, load_table(used));
}

struct EvalArgs {
  std::string checkpoint, pairs, stories, out, embeddings, manifest;
  bool oracle = false;
};

inline int cmd_eval(const Context& ctx, const EvalArgs& a) {
  std::optional<PairDataset> pairs;
  std::optional<StoryPairDataset> stories;
  if (!a.pairs.empty()) pairs = read_pairs_file(a.pairs);
  if (!a.stories.empty()) stories = read_stories_file(a.stories);

  std::string used_embeddings;
  std::optional<Checkpoint> cp;
  Scorer scorer;
  if (a.oracle) {
    scorer = make_oracle_scorer(pairs ? &*pairs : nullptr, stories ? &*stories : nullptr);
  } else {
    cp = open_checkpoint(a.checkpoint, a.embeddings, used_embeddings);
    scorer = make_ssn_scorer(cp->model);
  }
  const MetricReport report = evaluate(scorer, pairs ? &*pairs : nullptr, stories ? &*stories : nullptr);
  auto j = to_json(report);
  j["scorer"] = a.oracle ? "oracle-self-test" : "ssn";
  if (!a.out.empty()) write_text_file(a.out, j.dump(2) + "\n");
  ctx.out << render_table(report, a.oracle ? "oracle self-test" : "ssn");

  RunManifest m{"eval"};
  m.flags = {{"checkpoint", a.checkpoint}, {"pairs", a.pairs},           {"stories", a.stories},
             {"out", a.out},               {"embeddings", used_embeddings}, {"oracle_self_test", a.oracle}};
  if (!a.oracle) m.add_input(a.checkpoint);
  m.add_input(a.pairs);
  m.add_input(a.stories);
  m.add_input(used_embeddings);
  emit_manifest(ctx, m, a.manifest, a.out);
  return ok;
}

struct BaselineArgs {
  std::string embeddings, pairs, stories, out, manifest;
  std::vector<std::string> measures{"cosine"};
};

inline int cmd_baseline(const Context& ctx, const BaselineArgs& a) {
  const auto table = load_table(a.embeddings);
  std::optional<PairDataset> pairs;
  std::optional<StoryPairDataset> stories;
  if (!a.pairs.empty()) pairs = read_pairs_file(a.pairs);
  if (!a.stories.empty()) stories = read_stories_file(a.stories);

  nlohmann::ordered_json all = nlohmann::ordered_json::object();
  std::vector<std::string> done;
  for (const auto& name : a.measures) {
    const auto measure = name == "neg-euclidean" ? BaselineMeasure::neg_euclidean : BaselineMeasure::cosine;
    const std::string key = to_string(measure);
    if (all.contains(key)) continue;
    const MetricReport report =
        evaluate(make_baseline_scorer(*table, measure), pairs ? &*pairs : nullptr, stories ? &*stories : nullptr);
    all[key] = to_json(report);
    ctx.out << render_table(report, "baseline " + key);
  }
  if (!a.out.empty()) write_text_file(a.out, all.dump(2) + "\n");

  RunManifest m{"baseline"};
  m.flags = {{"embeddings", a.embeddings}, {"pairs", a.pairs}, {"stories", a.stories},
             {"out", a.out},               {"measures", a.measures}};
  m.add_input(a.embeddings);
  m.add_input(a.pairs);
  m.add_input(a.stories);
  emit_manifest(ctx, m, a.manifest, a.out);
  return ok;
}

struct ScoreArgs {
  std::string checkpoint, s1, s2, embeddings, manifest;
};

inline int cmd_score(const Context& ctx, const ScoreArgs& a) {
  const Tokens t1 = tokenize(a.s1), t2 = tokenize(a.s2);
  auto content = [](const Tokens& t) {
    return std::any_of(t.begin(), t.end(), [](const std::string& w) { return !is_punctuation_token(w); });
  };
  if (!content(t1) || !content(t2)) throw EmptySentence("sentence has no tokens after tokenization");
  std::string used;
  const Checkpoint cp = open_checkpoint(a.checkpoint, a.embeddings, used);
  const auto e1 = embed_sentence(cp.model, t1);
  const auto e2 = embed_sentence(cp.model, t2);
  char buf[96];
  std::snprintf(buf, sizeof buf, "similarity %.17g\nenergy %.17g\n", similarity_score(e1, e2), energy(e1, e2));
  ctx.out << buf;

  RunManifest m{"score"};
  m.flags = {{"checkpoint", a.checkpoint}, {"s1", a.s1}, {"s2", a.s2}, {"embeddings", used}};
  m.add_input(a.checkpoint);
  m.add_input(used);
  emit_manifest(ctx, m, a.manifest, "");
  return ok;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  std::size_t seeds = 5;
  std::string manifest;
};

inline int cmd_gradcheck(const Context& ctx, const GradcheckArgs& a) {
  const auto cases = run_grad_check(a.seed, a.seeds);
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.max_rel_error);
    char buf[160];
    std::snprintf(buf, sizeof buf, "seed %llu pooling %-9s margin %-13s label %d  max_rel_error %.3e\n",
                  static_cast<unsigned long long>(c.seed), c.attention ? "attention" : "last",
                  c.margin_mode == MarginMode::corrected ? "corrected" : "paper-literal", c.label, c.max_rel_error);
    ctx.out << buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max_rel_error %.3e\n", worst);
  ctx.out << buf;

  RunManifest m{"gradcheck"};
  m.flags = {{"seed", a.seed}, {"seeds", a.seeds}};
  m.seed = a.seed;
  emit_manifest(ctx, m, a.manifest, "");
  if (!(worst < 1e-4)) {
    ctx.err << "gradient check failed: " << worst << " >= 1e-4\n";
    return verification_error;
  }
  return ok;
}

struct SynthArgs {
  std::size_t stories = 200, topics = 10, dim = 16;
  std::uint64_t seed = 0;
  std::string out, embeddings_out, manifest;
};

inline int cmd_synth(const Context& ctx, const SynthArgs& a) {
  SynthConfig cfg;
  cfg.stories = a.stories;
  cfg.topics = a.topics;
  cfg.seed = a.seed;
  std::ostringstream corpus;
  write_synth_corpus(corpus, cfg);
  write_text_file(a.out, corpus.str());
  if (!a.embeddings_out.empty()) {
    std::ostringstream emb;
    write_random_embeddings(emb, synth_vocabulary(cfg), a.dim, a.seed + 1);
    write_text_file(a.embeddings_out, emb.str());
  }
  ctx.out << "stories " << a.stories << "\ntopics " << a.topics << '\n';

  RunManifest m{"synth"};
  m.flags = {{"stories", a.stories}, {"topics", a.topics}, {"seed", a.seed},
             {"out", a.out},         {"embeddings_out", a.embeddings_out}, {"dim", a.dim}};
  m.seed = a.seed;
  emit_manifest(ctx, m, a.manifest, a.out);
  return ok;
}

/// Parses argv and dispatches. Never throws; failures map to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  const Context ctx{out, err};
  CLI::App app{"Sentence/skeleton similarity network for textual coherence", "ssn"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  BuildPairsArgs bp;
  auto* sub_bp = app.add_subcommand("build-pairs", "Build sentence-pair and story-pair datasets from a corpus");
  sub_bp->add_option("--corpus", bp.corpus, "JSON-lines corpus")->required();
  sub_bp->add_option("--variant", bp.variant)->check(CLI::IsMember({"sentence", "skeleton"}));
  sub_bp->add_option("--seed", bp.seed);
  sub_bp->add_option("--out", bp.out, "pair dataset output (JSON-lines)")->required();
  sub_bp->add_option("--out-stories", bp.out_stories, "story-pair dataset output (JSON-lines)");
  sub_bp->add_option("--stopwords", bp.stopwords, "derive missing skeletons heuristically using this stopword list");
  sub_bp->add_option("--manifest", bp.manifest);

  TrainArgs tr;
  auto* sub_tr = app.add_subcommand("train", "Train a model on a pair dataset");
  sub_tr->add_option("--pairs", tr.pairs)->required();
  sub_tr->add_option("--embeddings", tr.embeddings)->required();
  sub_tr->add_option("--preset", tr.preset)->check(CLI::IsMember({"ssn3", "ssna2"}));
  sub_tr->add_option("--epochs", tr.epochs);
  sub_tr->add_option("--batch", tr.batch);
  sub_tr->add_option("--lr", tr.lr);
  sub_tr->add_option("--margin", tr.margin);
  sub_tr->add_option("--margin-mode", tr.margin_mode)->check(CLI::IsMember({"corrected", "paper-literal"}));
  sub_tr->add_option("--seed", tr.seed);
  sub_tr->add_option("--checkpoint-out", tr.checkpoint_out)->required();
  sub_tr->add_option("--hidden", tr.hidden);
  sub_tr->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
  sub_tr->add_option("--clip", tr.clip, "global gradient-norm clip, 0 disables");
  sub_tr->add_option("--keep-prob", tr.keep_prob, "dropout keep probability between layers");
  sub_tr->add_option("--val-pairs", tr.val_pairs);
  sub_tr->add_option("--history-out", tr.history_out);
  sub_tr->add_flag("--history-timing", tr.timing, "record wall-clock seconds per epoch in the history");
  sub_tr->add_option("--manifest", tr.manifest);

  EvalArgs ev;
  auto* sub_ev = app.add_subcommand("eval", "Evaluate a checkpoint on the three coherence metrics");
  sub_ev->add_option("--checkpoint", ev.checkpoint);
  sub_ev->add_option("--pairs", ev.pairs);
  sub_ev->add_option("--stories", ev.stories);
  sub_ev->add_option("--out", ev.out, "MetricReport JSON output");
  sub_ev->add_option("--embeddings", ev.embeddings, "override the embeddings path recorded in the checkpoint");
  sub_ev->add_flag("--oracle-self-test", ev.oracle, "score with a label oracle instead of the checkpoint");
  sub_ev->add_option("--manifest", ev.manifest);

  BaselineArgs bl;
  std::vector<std::string> measures;
  auto* sub_bl = app.add_subcommand("baseline", "Mean-embedding baselines on the ranking metrics");
  sub_bl->add_option("--embeddings", bl.embeddings)->required();
  sub_bl->add_option("--pairs", bl.pairs);
  sub_bl->add_option("--stories", bl.stories);
  sub_bl->add_option("--measure", measures, "cosine or neg-euclidean; repeatable")
      ->check(CLI::IsMember({"cosine", "neg-euclidean"}));
  sub_bl->add_option("--out", bl.out);
  sub_bl->add_option("--manifest", bl.manifest);

  ScoreArgs sc;
  auto* sub_sc = app.add_subcommand("score", "Score one sentence pair");
  sub_sc->add_option("--checkpoint", sc.checkpoint)->required();
  sub_sc->add_option("--s1", sc.s1)->required();
  sub_sc->add_option("--s2", sc.s2)->required();
  sub_sc->add_option("--embeddings", sc.embeddings);
  sub_sc->add_option("--manifest", sc.manifest);

  GradcheckArgs gc;
  auto* sub_gc = app.add_subcommand("gradcheck", "Finite-difference audit of the full gradient pipeline");
  sub_gc->add_option("--seed", gc.seed);
  sub_gc->add_option("--seeds", gc.seeds, "number of consecutive seeds");
  sub_gc->add_option("--manifest", gc.manifest);

  SynthArgs sy;
  auto* sub_sy = app.add_subcommand("synth", "Write a synthetic topic/entity-chain corpus");
  sub_sy->add_option("--stories", sy.stories);
  sub_sy->add_option("--topics", sy.topics);
  sub_sy->add_option("--seed", sy.seed);
  sub_sy->add_option("--out", sy.out)->required();
  sub_sy->add_option("--embeddings-out", sy.embeddings_out, "also write random vectors over the vocabulary");
  sub_sy->add_option("--dim", sy.dim, "dimension for --embeddings-out");
  sub_sy->add_option("--manifest", sy.manifest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : input_error;
  }

  try {
    if (*sub_bp) return cmd_build_pairs(ctx, bp);
    if (*sub_tr) return cmd_train(ctx, tr);
    if (*sub_ev) {
      if (!ev.oracle && ev.checkpoint.empty()) throw InvalidArgument("eval: --checkpoint is required");
      return cmd_eval(ctx, ev);
    }
    if (*sub_bl) {
      if (!measures.empty()) bl.measures = measures;
      return cmd_baseline(ctx, bl);
    }
    if (*sub_sc) return cmd_score(ctx, sc);
    if (*sub_gc) return cmd_gradcheck(ctx, gc);
    if (*sub_sy) return cmd_synth(ctx, sy);
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return numeric_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return input_error;
  }
  return input_error;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"ssn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ssn::cli
