// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eval_oracle.hpp"
#include "ssn/ssn.hpp"
#include "ssn_cli.hpp"

namespace fs = std::filesystem;
using namespace ssn;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::fprintf(stderr, "ssn %s -> %d: %s\n", args[0].c_str(), code, e.str().c_str());
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome gradient_oracle() {
  Outcome r;
  const auto t0 = std::chrono::steady_clock::now();
  std::string out;
  const int code = run_cli({"gradcheck"}, &out);
  const double secs = seconds_since(t0);
  const auto pos = out.rfind("max_rel_error ");
  const double worst = pos == std::string::npos ? 1.0 : std::stod(out.substr(pos + 14));
  r.require(code == 0, "exit code " + std::to_string(code));
  r.require(worst < 1e-4, "max relative error " + fmt("%.3e", worst) + " >= 1e-4");
  r.require(secs < 10.0, "runtime " + fmt("%.1f", secs) + " s >= 10 s");
  r.note("max_rel_error " + fmt("%.3e", worst) + ", " + fmt("%.2f", secs) + " s");
  return r;
}

Outcome loss_identities() {
  Outcome r;
  const LossConfig corrected{0.5, MarginMode::corrected};
  const LossConfig literal{0.5, MarginMode::paper_literal};
  const std::vector<std::pair<double, double>> checks{
      {loss_pos(1.0), 0.0},          {loss_pos(0.0), 0.25},           {loss_pos(-1.0), 1.0},
      {loss_neg(0.9, corrected), 0.81}, {loss_neg(0.2, corrected), 0.0}, {loss_neg(0.2, literal), 0.04}};
  double worst = 0.0;
  for (const auto& [got, want] : checks) worst = std::max(worst, std::abs(got - want));
  r.require(worst <= 1e-12, "max deviation " + fmt("%.3e", worst));
  r.note("6 identities, max deviation " + fmt("%.1e", worst));
  return r;
}

Outcome score_identity() {
  Outcome r;
  SeededRng rng(2024);
  double worst_id = 0.0, worst_sym = 0.0, worst_scale = 0.0;
  bool in_range = true;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t n = 1 + rng.index(20);
    Vector a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-1.0, 1.0);
      b[i] = rng.uniform(-1.0, 1.0);
    }
    const double e = energy(a, b);
    const double s = similarity_score(a, b);
    in_range = in_range && s >= 0.0 && s <= 1.0;
    worst_id = std::max(worst_id, std::abs(s - (1.0 - std::sqrt((1.0 - e) / 2.0))));
    worst_sym = std::max(worst_sym, std::abs(e - energy(b, a)));
    worst_scale = std::max(worst_scale, std::abs(e - energy(rng.uniform(0.01, 100.0) * a, rng.uniform(0.01, 100.0) * b)));
  }
  // Endpoints, where the identity is ill-conditioned (sqrt amplifies the
  // rounding in 1 - E) but the direct form is exact.
  bool endpoints = true;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng.index(20);
    Vector a(n);
    for (double& x : a) x = rng.uniform(-1.0, 1.0);
    endpoints = endpoints && similarity_score(a, rng.uniform(0.5, 2.0) * a) >= 1.0 - 1e-15 &&
                similarity_score(a, -1.0 * a) <= 1e-15;
  }
  r.require(endpoints, "parallel or antiparallel endpoint off");
  r.require(worst_id <= 1e-12, "identity deviation " + fmt("%.3e", worst_id));
  r.require(in_range, "score outside [0,1]");
  r.require(worst_sym <= 1e-12, "symmetry deviation " + fmt("%.3e", worst_sym));
  r.require(worst_scale <= 1e-12, "scale deviation " + fmt("%.3e", worst_scale));
  r.note("1000 pairs, identity " + fmt("%.1e", worst_id) + ", symmetry " + fmt("%.1e", worst_sym) + ", scale " +
         fmt("%.1e", worst_scale));
  return r;
}

Outcome metric_oracles() {
  Outcome r;
  std::size_t datasets = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    SeededRng rng(seed);
    std::map<std::pair<std::string, std::string>, double> scores;
    auto grid = [&] { return 0.25 * static_cast<double>(rng.index(5)); };
    PairDataset pairs;
    const std::size_t groups = 1 + rng.index(10);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::string p = "p" + std::to_string(g), q = "q" + std::to_string(g), n = "n" + std::to_string(g);
      pairs.examples.push_back({{p}, {q}, 1});
      pairs.examples.push_back({{p}, {n}, 0});
      pairs.matches.push_back({2 * g, 2 * g + 1});
      scores[{p, q}] = grid();
      scores[{p, n}] = grid();
    }
    StoryPairDataset stories;
    const std::size_t nstories = 1 + rng.index(5);
    for (std::size_t s = 0; s < nstories; ++s) {
      StoryPair sp;
      const std::size_t len = 2 + rng.index(3);
      for (std::size_t i = 0; i < len; ++i) sp.ordered.push_back({"s" + std::to_string(s) + "_" + std::to_string(i)});
      std::vector<std::size_t> perm(len);
      do {
        for (std::size_t i = 0; i < len; ++i) perm[i] = i;
        rng.shuffle(perm);
      } while (std::is_sorted(perm.begin(), perm.end()));
      for (std::size_t k : perm) sp.jumbled.push_back(sp.ordered[k]);
      for (const auto& a : sp.ordered) {
        for (const auto& b : sp.ordered) scores[{a[0], b[0]}] = grid();
      }
      stories.pairs.push_back(sp);
    }
    const Scorer f{[scores](std::span<const std::string> a, std::span<const std::string> b) {
                     return scores.at({a[0], b[0]});
                   },
                   true};
    const auto so = sentence_order_accuracy(f, pairs);
    const auto bso = testing::brute_sentence_order(f, pairs);
    const auto st = story_order_accuracy(f, stories);
    const auto bst = testing::brute_story_order(f, stories);
    const auto pc = pair_classification_accuracy(f, pairs);
    const auto bpc = testing::brute_pair_classification(f, pairs);
    const bool same = so.correct == bso.correct && so.total == bso.total && so.ties == bso.ties &&
                      st.correct == bst.correct && st.total == bst.total && st.ties == bst.ties &&
                      pc.correct == bpc.correct && pc.total == bpc.total && pc.ties == bpc.ties;
    if (!same) r.require(false, "brute-force mismatch at seed " + std::to_string(seed));

    const Scorer constant{[](std::span<const std::string>, std::span<const std::string>) { return 0.5; }, true};
    if (sentence_order_accuracy(constant, pairs).value() != 0.0 || story_order_accuracy(constant, stories).value() != 0.0) {
      r.require(false, "constant scorer not 0.0 at seed " + std::to_string(seed));
    }
    ++datasets;
  }
  r.note(std::to_string(datasets) + " hand-built datasets (<= 20 examples) agree exactly; constant scorer 0.0");
  return r;
}

struct SynthData {
  std::shared_ptr<const EmbeddingTable> table;
  Corpus corpus;
};

SynthData synth(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  std::stringstream corpus, emb;
  write_synth_corpus(corpus, cfg);
  write_random_embeddings(emb, synth_vocabulary(cfg), 16, seed + 1);
  return {std::make_shared<const EmbeddingTable>(load_embeddings(emb)), parse_corpus(corpus, Variant::sentence)};
}

Outcome overfit_contract() {
  Outcome r;
  const SynthData d = synth(0);
  SeededRng rng(0);
  const PairDataset all = build_sentence_pairs(d.corpus, rng);
  PairDataset twenty;
  twenty.examples.assign(all.examples.begin(), all.examples.begin() + 20);
  TrainConfig cfg = TrainConfig::ssna2();
  cfg.epochs = 200;
  const auto t0 = std::chrono::steady_clock::now();
  TrainSession s = start_session(cfg, d.table);
  const auto hist = train(s, twenty);
  const double secs = seconds_since(t0);
  const double acc = pair_classification_accuracy(make_ssn_scorer(s.model), twenty).value();
  r.require(hist.back().loss < 0.01, "final loss " + fmt("%.4g", hist.back().loss));
  r.require(acc == 1.0, "training accuracy " + fmt("%.3f", acc));
  r.require(secs < 60.0, "runtime " + fmt("%.1f", secs) + " s");
  r.note("final loss " + fmt("%.4g", hist.back().loss) + ", accuracy " + fmt("%.3f", acc) + ", " + fmt("%.1f", secs) +
         " s");
  return r;
}

Outcome synthetic_end_to_end(const fs::path& work) {
  Outcome r;
  const auto t0 = std::chrono::steady_clock::now();
  auto at = [&](const char* name) { return (work / name).string(); };
  if (run_cli({"synth", "--stories", "200", "--topics", "10", "--seed", "0", "--out", at("corpus.jsonl"),
               "--embeddings-out", at("vectors.txt"), "--dim", "16"}) != 0) {
    r.require(false, "synth failed");
    return r;
  }
  // 80/20 split by story, shuffled with a fixed seed.
  std::vector<std::string> lines;
  {
    std::istringstream in(slurp(work / "corpus.jsonl"));
    for (std::string line; std::getline(in, line);) lines.push_back(line);
  }
  SeededRng split(0);
  split.shuffle(lines);
  const std::size_t cut = lines.size() * 4 / 5;
  {
    std::ofstream tr(work / "train.jsonl"), te(work / "test.jsonl");
    for (std::size_t i = 0; i < lines.size(); ++i) (i < cut ? tr : te) << lines[i] << '\n';
  }
  const bool built =
      run_cli({"build-pairs", "--corpus", at("train.jsonl"), "--seed", "1", "--out", at("train_pairs.jsonl")}) == 0 &&
      run_cli({"build-pairs", "--corpus", at("test.jsonl"), "--seed", "2", "--out", at("test_pairs.jsonl"),
               "--out-stories", at("test_stories.jsonl")}) == 0;
  const bool trained =
      built && run_cli({"train", "--pairs", at("train_pairs.jsonl"), "--embeddings", at("vectors.txt"), "--preset",
                        "ssn3", "--epochs", "30", "--seed", "0", "--checkpoint-out", at("ssn3.ckpt")}) == 0;
  const bool evaluated =
      trained && run_cli({"eval", "--checkpoint", at("ssn3.ckpt"), "--pairs", at("test_pairs.jsonl"), "--stories",
                          at("test_stories.jsonl"), "--out", at("ssn3_report.json")}) == 0 &&
      run_cli({"baseline", "--embeddings", at("vectors.txt"), "--pairs", at("test_pairs.jsonl"), "--stories",
               at("test_stories.jsonl"), "--measure", "cosine", "--out", at("baseline_report.json")}) == 0;
  const double secs = seconds_since(t0);
  if (!evaluated) {
    r.require(false, "pipeline failed");
    return r;
  }
  const auto model = nlohmann::json::parse(slurp(work / "ssn3_report.json"));
  const auto base = nlohmann::json::parse(slurp(work / "baseline_report.json"))["cosine"];
  const double so = model["sentence_order"]["accuracy"], st = model["story_order"]["accuracy"];
  const double bso = base["sentence_order"]["accuracy"], bst = base["story_order"]["accuracy"];
  r.require(so >= 0.90, "sentence-order " + fmt("%.4f", so) + " < 0.90");
  r.require(st >= 0.70, "story-order " + fmt("%.4f", st) + " < 0.70");
  r.require(so > bso, "sentence-order does not beat baseline " + fmt("%.4f", bso));
  r.require(st > bst, "story-order does not beat baseline " + fmt("%.4f", bst));
  r.require(secs < 300.0, "runtime " + fmt("%.1f", secs) + " s");
  r.note("ssn3 sentence-order " + fmt("%.4f", so) + " story-order " + fmt("%.4f", st) + " vs cosine baseline " +
         fmt("%.4f", bso) + " / " + fmt("%.4f", bst) + ", " + fmt("%.1f", secs) + " s");
  return r;
}

std::vector<std::vector<double>> snapshot(SsnModel& m) {
  std::vector<std::vector<double>> out;
  for (const Param* p : m.params()) {
    const auto v = std::as_const(p->value).span();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

Outcome determinism_and_persistence() {
  Outcome r;
  SynthConfig small;
  small.stories = 30;
  small.seed = 3;
  std::stringstream corpus, emb;
  write_synth_corpus(corpus, small);
  write_random_embeddings(emb, synth_vocabulary(small), 16, 4);
  const auto table = std::make_shared<const EmbeddingTable>(load_embeddings(emb));
  SeededRng rng(3);
  const PairDataset pairs = build_sentence_pairs(parse_corpus(corpus, Variant::sentence), rng);

  TrainConfig cfg = TrainConfig::ssna2();
  cfg.hidden = 16;
  cfg.epochs = 3;
  cfg.keep_prob = 0.9;
  cfg.seed = 42;
  TrainSession a = start_session(cfg, table), b = start_session(cfg, table);
  const auto ha = train(a, pairs), hb = train(b, pairs);
  r.require(ha == hb, "histories differ");
  r.require(snapshot(a.model) == snapshot(b.model), "parameters differ");

  std::ostringstream file;
  save_checkpoint(file, a);
  std::istringstream in1(file.str()), in2(file.str());
  const Checkpoint loaded = load_checkpoint(in1, table);
  SeededRng pick(7);
  std::size_t same = 0;
  for (int k = 0; k < 50; ++k) {
    const auto& x = pairs.examples[pick.index(pairs.examples.size())];
    const auto& y = pairs.examples[pick.index(pairs.examples.size())];
    same += score_pair(a.model, x.tokens1, y.tokens2) == score_pair(loaded.model, x.tokens1, y.tokens2) ? 1 : 0;
  }
  r.require(same == 50, std::to_string(50 - same) + " of 50 scores differ after reload");

  // Resuming from the checkpoint continues the identical trajectory.
  TrainSession resumed = resume_session(load_checkpoint(in2, table));
  resumed.config.epochs = 1;
  a.config.epochs = 1;
  const auto ra = train(a, pairs), rr = train(resumed, pairs);
  r.require(ra == rr && snapshot(a.model) == snapshot(resumed.model), "resumed training diverges");
  r.note("bit-identical histories, 50/50 scores equal after reload, resume matches");
  return r;
}

Outcome data_builder_contracts() {
  Outcome r;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const SynthData d = synth(seed);
    SeededRng a(seed), b(seed);
    const PairDataset pa = build_sentence_pairs(d.corpus, a);
    const PairDataset pb = build_sentence_pairs(d.corpus, b);
    r.require(pa.positives() == pa.negatives(), "label imbalance at seed " + std::to_string(seed));
    for (const auto& m : pa.matches) {
      if (pa.examples[m.positive].tokens1 != pa.examples[m.negative].tokens1 ||
          pa.origins[m.positive].story1 != pa.origins[m.negative].story1 ||
          pa.origins[m.positive].sentence1 != pa.origins[m.negative].sentence1 ||
          pa.origins[m.negative].story2 == pa.origins[m.negative].story1) {
        r.require(false, "matched negative does not share its first sentence at seed " + std::to_string(seed));
        break;
      }
    }
    std::ostringstream wa, wb;
    write_pairs(wa, pa);
    write_pairs(wb, pb);
    r.require(wa.str() == wb.str(), "pair rebuild differs at seed " + std::to_string(seed));

    SeededRng c(seed), e(seed);
    const StoryPairDataset sa = build_story_pairs(d.corpus, c);
    const StoryPairDataset sb = build_story_pairs(d.corpus, e);
    for (const auto& sp : sa.pairs) {
      if (sp.jumbled == sp.ordered) r.require(false, "jumbled equals ordered in " + sp.story_id);
    }
    std::ostringstream xa, xb;
    write_stories(xa, sa);
    write_stories(xb, sb);
    r.require(xa.str() == xb.str(), "story rebuild differs at seed " + std::to_string(seed));
  }
  r.note("5 corpora: balanced labels, shared first sentences, jumbled != ordered, byte-identical rebuilds");
  return r;
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_work";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient-oracle", gradient_oracle},
      {"loss-identities", loss_identities},
      {"score-identity", score_identity},
      {"metric-oracles", metric_oracles},
      {"overfit-contract", overfit_contract},
      {"synthetic-end-to-end", [&] { return synthetic_end_to_end(work); }},
      {"determinism-and-persistence", determinism_and_persistence},
      {"data-builder-contracts", data_builder_contracts},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
