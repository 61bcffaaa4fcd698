#pragma once

// Initialization, minibatch optimization of the contrastive loss, and
// checkpoint persistence.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssn/data.hpp"
#include "ssn/digest.hpp"
#include "ssn/embeddings.hpp"
#include "ssn/encoder.hpp"
#include "ssn/error.hpp"
#include "ssn/eval.hpp"
#include "ssn/numcore.hpp"
#include "ssn/similarity.hpp"

namespace ssn {

enum class OptimizerKind { adam, sgd };

struct TrainConfig {
  std::size_t hidden = 50;
  std::size_t layers = 3;
  bool attention = false;
  double keep_prob = 1.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double clip_norm = 5.0;  // 0 disables
  LossConfig loss;
  std::uint64_t seed = 0;

  /// Three stacked layers, last-output pooling.
  static TrainConfig ssn3() { return TrainConfig{}; }

  /// Two stacked layers, attention pooling.
  static TrainConfig ssna2() {
    TrainConfig c;
    c.layers = 2;
    c.attention = true;
    return c;
  }

  void validate() const {
    if (hidden == 0 || layers == 0 || batch_size == 0) {
      throw InvalidArgument("hidden, layers and batch size must be positive");
    }
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw InvalidArgument("keep probability must be in (0, 1]");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("learning rate must be finite and non-negative");
    }
    if (!(clip_norm >= 0.0)) throw InvalidArgument("clip norm must be non-negative");
    if (!(loss.margin >= -1.0 && loss.margin <= 1.0)) throw InvalidArgument("margin must lie in [-1, 1]");
  }

  bool operator==(const TrainConfig& o) const {
    return hidden == o.hidden && layers == o.layers && attention == o.attention && keep_prob == o.keep_prob &&
           batch_size == o.batch_size && epochs == o.epochs && learning_rate == o.learning_rate &&
           optimizer == o.optimizer && clip_norm == o.clip_norm && loss.margin == o.loss.margin &&
           loss.margin_mode == o.loss.margin_mode && seed == o.seed;
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},
          {"layers", c.layers},
          {"attention", c.attention},
          {"keep_prob", c.keep_prob},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd"},
          {"clip_norm", c.clip_norm},
          {"margin", c.loss.margin},
          {"margin_mode", c.loss.margin_mode == MarginMode::corrected ? "corrected" : "paper_literal"},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.attention = j.at("attention").get<bool>();
  c.keep_prob = j.at("keep_prob").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
  c.clip_norm = j.at("clip_norm").get<double>();
  c.loss.margin = j.at("margin").get<double>();
  c.loss.margin_mode =
      j.at("margin_mode").get<std::string>() == "paper_literal" ? MarginMode::paper_literal : MarginMode::corrected;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

/// Glorot-uniform on each gate block, zero biases, forget bias 1.
inline SsnModel init_model(const TrainConfig& config, std::shared_ptr<const EmbeddingTable> table, SeededRng& rng) {
  config.validate();
  if (!table || table->dim() == 0) throw InvalidArgument("init_model: embedding table required");
  SsnModel model;
  model.embeddings = std::move(table);
  model.loss = config.loss;
  model.encoder =
      make_encoder(model.embeddings->dim(), config.hidden, config.layers, config.attention, config.keep_prob);

  auto glorot = [&rng](Param& p, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : p.value.span()) x = rng.uniform(-bound, bound);
  };
  for (auto& layer : model.encoder.layers) {
    glorot(layer.w, layer.input_size, layer.hidden);
    glorot(layer.u, layer.hidden, layer.hidden);
    for (std::size_t k = 0; k < layer.hidden; ++k) layer.bias(LstmLayer::forget_gate, k) = 1.0;
  }
  if (auto& attn = model.encoder.attention) {
    glorot(attn->w, attn->hidden(), attn->hidden());
    glorot(attn->u, attn->hidden(), 1);
  }
  return model;
}

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) or plain SGD.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double learning_rate, std::span<Param* const> params)
      : kind_(kind), lr_(learning_rate) {
    if (kind_ == OptimizerKind::adam) {
      for (const Param* p : params) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
      }
    }
  }

  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  OptimizerKind kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<std::vector<double>>& first_moments() const noexcept { return m_; }
  const std::vector<std::vector<double>>& second_moments() const noexcept { return v_; }

  void step(std::span<Param* const> params) {
    ++t_;
    if (kind_ == OptimizerKind::sgd) {
      for (Param* p : params) {
        auto val = p->value.span();
        auto g = p->grad.span();
        for (std::size_t i = 0; i < val.size(); ++i) val[i] -= lr_ * g[i];
      }
      return;
    }
    check_same_size(params.size(), m_.size(), "optimizer state");
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto val = params[k]->value.span();
      auto g = params[k]->grad.span();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
      }
    }
  }

  // Checkpoint restore.
  void restore(std::uint64_t steps, std::vector<std::vector<double>> m, std::vector<std::vector<double>> v) {
    t_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
  }

 private:
  OptimizerKind kind_ = OptimizerKind::adam;
  double lr_ = 1e-3;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

inline double global_grad_norm(std::span<Param* const> params) {
  double s = 0.0;
  for (const Param* p : params) {
    for (double g : p->grad.span()) s += g * g;
  }
  return std::sqrt(s);
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(std::span<Param* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Param* p : params) {
      for (double& g : p->grad.span()) g *= scale;
    }
  }
  return norm;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // sum over every example in the epoch
  std::vector<double> batch_losses;
  std::optional<Accuracy> val_sentence_order;
  std::optional<Accuracy> val_pair_classification;
  double seconds = 0.0;

  /// Wall-clock time is excluded from equality.
  bool operator==(const EpochRecord& o) const {
    return epoch == o.epoch && loss == o.loss && batch_losses == o.batch_losses &&
           val_sentence_order == o.val_sentence_order && val_pair_classification == o.val_pair_classification;
  }
};

using TrainHistory = std::vector<EpochRecord>;

inline nlohmann::ordered_json to_json(const EpochRecord& r, bool with_timing = false) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["batches"] = r.batch_losses.size();
  if (r.val_sentence_order) j["val_sentence_order"] = r.val_sentence_order->value();
  if (r.val_pair_classification) j["val_pair_classification"] = r.val_pair_classification->value();
  if (with_timing) j["seconds"] = r.seconds;
  return j;
}

/// Everything training mutates: model, optimizer state, generator, epoch count.
struct TrainSession {
  TrainConfig config;
  SsnModel model;
  Optimizer optimizer;
  SeededRng rng;
  std::size_t epoch = 0;
};

/// Seeds the generator from the config, initializes the model from it, and
/// keeps the same generator for shuffling and dropout.
inline TrainSession start_session(const TrainConfig& config, std::shared_ptr<const EmbeddingTable> table) {
  TrainSession s{config, {}, {}, SeededRng(config.seed), 0};
  s.model = init_model(config, std::move(table), s.rng);
  s.optimizer = Optimizer(config.optimizer, config.learning_rate, s.model.params());
  return s;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs `config.epochs` more epochs. Each epoch shuffles the examples, walks
/// them in batches of `batch_size` (the last may be short), sums the pair
/// losses, clips, and steps the optimizer.
inline TrainHistory train(TrainSession& session, const PairDataset& train_pairs, const PairDataset* val_pairs = nullptr,
                          const EpochCallback& on_epoch = {}) {
  if (train_pairs.examples.empty()) throw InvalidArgument("train: empty training set");
  const auto& cfg = session.config;
  auto params = session.model.params();
  std::vector<std::size_t> order(train_pairs.examples.size());
  TrainHistory history;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = ++session.epoch;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    session.rng.shuffle(order);

    for (std::size_t lo = 0, b = 0; lo < order.size(); lo += cfg.batch_size, ++b) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      zero_grads(params);
      double loss = 0.0;
      const std::string where = "epoch " + std::to_string(rec.epoch) + ", batch " + std::to_string(b);
      try {
        for (std::size_t k = lo; k < hi; ++k) {
          loss += pair_loss_grad(session.model, train_pairs.examples[order[k]], Mode::train, session.rng);
        }
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " in " + where);
      }
      if (!std::isfinite(loss) || !std::isfinite(global_grad_norm(params))) {
        throw NumericError("non-finite loss or gradient in " + where);
      }
      clip_global_norm(params, cfg.clip_norm);
      session.optimizer.step(params);
      rec.batch_losses.push_back(loss);
      rec.loss += loss;
    }

    if (val_pairs && !val_pairs->examples.empty()) {
      const Scorer scorer = make_ssn_scorer(session.model);
      if (!val_pairs->matches.empty()) rec.val_sentence_order = sentence_order_accuracy(scorer, *val_pairs);
      rec.val_pair_classification = pair_classification_accuracy(scorer, *val_pairs);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (on_epoch) on_epoch(rec);
    history.push_back(std::move(rec));
  }
  return history;
}

// Checkpoint file: line-oriented text, every real as a hexadecimal float.
//
//   ssn-checkpoint <version>
//   config <json>
//   source <json string: embeddings path recorded at save time>
//   embedding_dim <d>
//   vocabulary_hash <16 hex digits>
//   epoch <n>
//   rng <seed> <engine state>
//   optimizer <adam|sgd> <learning rate> <steps>
//   tensors <count>
//   tensor <name> <rows> <cols>
//   <rows*cols values>
//   [moment1|moment2 <name> <rows> <cols> + values, per tensor, Adam only]
//   end

inline constexpr int checkpoint_version = 1;

struct Checkpoint {
  TrainConfig config;
  SsnModel model;
  Optimizer optimizer;
  SeededRng rng;
  std::size_t epoch = 0;
  std::string embeddings_source;
};

namespace detail {

inline std::string hexfloat(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

inline void write_values(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << hexfloat(values[i]);
  out << '\n';
}

/// Token reader that distinguishes running out of input from bad content.
class CheckpointReader {
 public:
  explicit CheckpointReader(std::istream& in) : in_(in) {}

  std::string word(const char* what) {
    std::string w;
    // A complete file ends with a newline, so a word cut off by end of file is truncation.
    if (!(in_ >> w) || in_.eof()) throw TruncatedCheckpoint(std::string("checkpoint truncated while reading ") + what);
    return w;
  }

  void expect(const std::string& keyword) {
    const auto w = word(keyword.c_str());
    if (w != keyword) throw CheckpointError("checkpoint: expected '" + keyword + "', found '" + w + "'");
  }

  std::uint64_t integer(const char* what) {
    const auto w = word(what);
    char* end = nullptr;
    const auto v = std::strtoull(w.c_str(), &end, 10);
    if (end != w.c_str() + w.size() || w.empty() || w[0] == '-') {
      throw CheckpointError(std::string("checkpoint: bad integer for ") + what);
    }
    return v;
  }

  double real(const char* what) {
    const auto w = word(what);
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size() || w.empty()) {
      throw CheckpointError(std::string("checkpoint: bad real for ") + what);
    }
    return v;
  }

  std::string rest_of_line(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw TruncatedCheckpoint(std::string("checkpoint truncated at ") + what);
    const auto first = line.find_first_not_of(' ');
    return first == std::string::npos ? std::string() : line.substr(first);
  }

  void values(std::span<double> out, const std::string& name) {
    for (double& x : out) x = real(name.c_str());
  }

 private:
  std::istream& in_;
};

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const TrainSession& s, const std::string& embeddings_source = {}) {
  const auto& table = *s.model.embeddings;
  out << "ssn-checkpoint " << checkpoint_version << '\n';
  out << "config " << to_json(s.config).dump() << '\n';
  out << "source " << nlohmann::json(embeddings_source).dump() << '\n';
  out << "embedding_dim " << table.dim() << '\n';
  out << "vocabulary_hash " << hex64(table.vocabulary_hash()) << '\n';
  out << "epoch " << s.epoch << '\n';
  out << "rng " << s.rng.state() << '\n';
  out << "optimizer " << (s.optimizer.kind() == OptimizerKind::adam ? "adam" : "sgd") << ' '
      << detail::hexfloat(s.optimizer.learning_rate()) << ' ' << s.optimizer.steps() << '\n';
  const auto params = s.model.encoder.params();
  out << "tensors " << params.size() << '\n';
  for (const Param* p : params) {
    out << "tensor " << p->name << ' ' << p->rows() << ' ' << p->cols() << '\n';
    detail::write_values(out, p->value.span());
  }
  if (s.optimizer.kind() == OptimizerKind::adam) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      out << "moment1 " << params[k]->name << ' ' << params[k]->rows() << ' ' << params[k]->cols() << '\n';
      detail::write_values(out, s.optimizer.first_moments()[k]);
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      out << "moment2 " << params[k]->name << ' ' << params[k]->rows() << ' ' << params[k]->cols() << '\n';
      detail::write_values(out, s.optimizer.second_moments()[k]);
    }
  }
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const TrainSession& s, const std::string& embeddings_source = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  save_checkpoint(out, s, embeddings_source);
  if (!out) throw Error("failed writing checkpoint " + path);
}

/// Reads the header far enough to recover the embeddings path recorded at save time.
inline std::string checkpoint_embeddings_source(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  detail::CheckpointReader rd(in);
  rd.expect("ssn-checkpoint");
  if (rd.integer("version") != checkpoint_version) throw CheckpointVersionMismatch("unsupported checkpoint version");
  rd.expect("config");
  rd.rest_of_line("config");
  rd.expect("source");
  try {
    return nlohmann::json::parse(rd.rest_of_line("source")).get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError("checkpoint: malformed source line");
  }
}

/// Validates version, vocabulary hash against `table`, and every tensor shape.
/// Never returns a partially loaded model.
inline Checkpoint load_checkpoint(std::istream& in, std::shared_ptr<const EmbeddingTable> table) {
  detail::CheckpointReader rd(in);
  rd.expect("ssn-checkpoint");
  const auto version = rd.integer("version");
  if (version != checkpoint_version) {
    throw CheckpointVersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                                    std::to_string(checkpoint_version));
  }
  Checkpoint cp;
  rd.expect("config");
  try {
    cp.config = train_config_from_json(nlohmann::json::parse(rd.rest_of_line("config")));
    rd.expect("source");
    cp.embeddings_source = nlohmann::json::parse(rd.rest_of_line("source")).get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  }
  rd.expect("embedding_dim");
  const auto dim = rd.integer("embedding_dim");
  rd.expect("vocabulary_hash");
  const auto hash = rd.word("vocabulary_hash");
  if (hash != hex64(table->vocabulary_hash())) {
    throw VocabularyHashMismatch("checkpoint was trained against a different embedding table (hash " + hash +
                                 ", loaded " + hex64(table->vocabulary_hash()) + ")");
  }
  if (dim != table->dim()) throw CheckpointShapeMismatch("checkpoint embedding dimension differs from table");

  rd.expect("epoch");
  cp.epoch = rd.integer("epoch");
  rd.expect("rng");
  try {
    cp.rng.restore(rd.rest_of_line("rng"));
  } catch (const InvalidArgument&) {
    throw CheckpointError("checkpoint: malformed generator state");
  }
  rd.expect("optimizer");
  const auto kind_word = rd.word("optimizer");
  if (kind_word != "adam" && kind_word != "sgd") throw CheckpointError("checkpoint: unknown optimizer " + kind_word);
  const auto kind = kind_word == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  const double lr = rd.real("learning rate");
  const auto steps = rd.integer("optimizer steps");

  try {
    cp.model.embeddings = table;
    cp.model.loss = cp.config.loss;
    cp.model.encoder = make_encoder(table->dim(), cp.config.hidden, cp.config.layers, cp.config.attention,
                                    cp.config.keep_prob);
  } catch (const InvalidArgument& e) {
    throw CheckpointShapeMismatch(std::string("checkpoint config is inconsistent: ") + e.what());
  }
  auto params = cp.model.params();
  rd.expect("tensors");
  if (rd.integer("tensor count") != params.size()) {
    throw CheckpointShapeMismatch("checkpoint tensor count differs from the configured architecture");
  }
  auto read_block = [&](const char* keyword, Param& p, std::span<double> dest) {
    rd.expect(keyword);
    const auto name = rd.word("tensor name");
    const auto rows = rd.integer("rows");
    const auto cols = rd.integer("cols");
    if (name != p.name || rows != p.rows() || cols != p.cols()) {
      throw CheckpointShapeMismatch("checkpoint tensor " + name + " (" + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ") does not match expected " + p.name + " (" +
                                    std::to_string(p.rows()) + "x" + std::to_string(p.cols()) + ")");
    }
    rd.values(dest, p.name);
  };
  for (Param* p : params) read_block("tensor", *p, p->value.span());

  std::vector<std::vector<double>> m, v;
  if (kind == OptimizerKind::adam) {
    for (Param* p : params) {
      m.emplace_back(p->size());
      read_block("moment1", *p, m.back());
    }
    for (Param* p : params) {
      v.emplace_back(p->size());
      read_block("moment2", *p, v.back());
    }
  }
  rd.expect("end");
  cp.optimizer = Optimizer(kind, lr, params);
  cp.optimizer.restore(steps, std::move(m), std::move(v));
  return cp;
}

inline Checkpoint load_checkpoint(const std::string& path, std::shared_ptr<const EmbeddingTable> table) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path);
  return load_checkpoint(in, std::move(table));
}

inline TrainSession resume_session(Checkpoint cp) {
  return TrainSession{cp.config, std::move(cp.model), std::move(cp.optimizer), cp.rng, cp.epoch};
}

}  // namespace ssn
