#pragma once

// Stacked unidirectional LSTM sentence encoder with last-output or additive
// self-attention pooling. Backward passes are written by hand per component
// and accumulate into Param::grad.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssn/error.hpp"
#include "ssn/numcore.hpp"

namespace ssn {

enum class Mode { train, infer };

/// One LSTM layer. The four gates are stacked row-wise in the order
/// input (i), forget (f), output (o), candidate (g): rows [k*h, (k+1)*h).
struct LstmLayer {
  std::size_t input_size = 0;
  std::size_t hidden = 0;
  Param w;  // 4h x input_size
  Param u;  // 4h x hidden
  Param b;  // 4h x 1

  LstmLayer() = default;
  LstmLayer(std::size_t in, std::size_t h, const std::string& prefix)
      : input_size(in),
        hidden(h),
        w(prefix + ".w", 4 * h, in),
        u(prefix + ".u", 4 * h, h),
        b(prefix + ".b", 4 * h, 1) {}

  enum Gate : std::size_t { input_gate = 0, forget_gate = 1, output_gate = 2, candidate = 3 };

  double& bias(Gate gate, std::size_t k) { return b.value(gate * hidden + k, 0); }
};

/// Everything one cell step needs for its backward pass.
struct LstmStep {
  Vector x, h_prev, c_prev;
  Vector i, f, o, g;
  Vector c, tanh_c, h;
};

inline LstmStep lstm_cell_forward(const LstmLayer& layer, const Vector& x, const Vector& h_prev,
                                  const Vector& c_prev) {
  const std::size_t h = layer.hidden;
  check_same_size(x.size(), layer.input_size, "lstm_cell_forward input");
  check_same_size(h_prev.size(), h, "lstm_cell_forward h_prev");
  check_same_size(c_prev.size(), h, "lstm_cell_forward c_prev");

  LstmStep s{x, h_prev, c_prev, Vector(h), Vector(h), Vector(h), Vector(h),
             Vector(h), Vector(h), Vector(h)};
  for (std::size_t r = 0; r < 4 * h; ++r) {
    const double z = layer.b.value(r, 0) + dot(layer.w.value.row(r), x.span()) +
                     dot(layer.u.value.row(r), h_prev.span());
    const std::size_t k = r % h;
    switch (r / h) {
      case LstmLayer::input_gate: s.i[k] = sigmoid(z); break;
      case LstmLayer::forget_gate: s.f[k] = sigmoid(z); break;
      case LstmLayer::output_gate: s.o[k] = sigmoid(z); break;
      default: s.g[k] = std::tanh(z); break;
    }
  }
  for (std::size_t k = 0; k < h; ++k) {
    s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = s.o[k] * s.tanh_c[k];
  }
  return s;
}

struct LstmStepGrad {
  Vector dx, dh_prev, dc_prev;
};

/// Backward through one cell step given dL/dh_t and dL/dc_t. Accumulates
/// parameter gradients into `layer`; `need_dx` skips the input gradient for the
/// bottom layer, whose inputs are frozen embeddings.
inline LstmStepGrad lstm_cell_backward(LstmLayer& layer, const LstmStep& s, const Vector& dh,
                                       const Vector& dc_in, bool need_dx = true) {
  const std::size_t h = layer.hidden;
  Vector dz(4 * h);
  LstmStepGrad out{need_dx ? Vector(layer.input_size) : Vector(), Vector(h), Vector(h)};
  for (std::size_t k = 0; k < h; ++k) {
    const double d_o = dh[k] * s.tanh_c[k];
    const double dc = dc_in[k] + dh[k] * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
    const double d_i = dc * s.g[k];
    const double d_f = dc * s.c_prev[k];
    const double d_g = dc * s.i[k];
    out.dc_prev[k] = dc * s.f[k];
    dz[LstmLayer::input_gate * h + k] = d_i * s.i[k] * (1.0 - s.i[k]);
    dz[LstmLayer::forget_gate * h + k] = d_f * s.f[k] * (1.0 - s.f[k]);
    dz[LstmLayer::output_gate * h + k] = d_o * s.o[k] * (1.0 - s.o[k]);
    dz[LstmLayer::candidate * h + k] = d_g * (1.0 - s.g[k] * s.g[k]);
  }
  for (std::size_t r = 0; r < 4 * h; ++r) {
    const double d = dz[r];
    if (d == 0.0) continue;
    layer.b.grad(r, 0) += d;
    for (std::size_t c = 0; c < layer.input_size; ++c) {
      layer.w.grad(r, c) += d * s.x[c];
      if (need_dx) out.dx[c] += d * layer.w.value(r, c);
    }
    for (std::size_t c = 0; c < h; ++c) {
      layer.u.grad(r, c) += d * s.h_prev[c];
      out.dh_prev[c] += d * layer.u.value(r, c);
    }
  }
  return out;
}

/// Additive self-attention: c_i = u . tanh(W o_i + b), alpha = softmax(c),
/// pooled = sum_i alpha_i o_i.
struct AttentionParams {
  Param w;  // h x h
  Param b;  // h x 1
  Param u;  // h x 1

  AttentionParams() = default;
  explicit AttentionParams(std::size_t h) : w("attn.w", h, h), b("attn.b", h, 1), u("attn.u", h, 1) {}

  std::size_t hidden() const noexcept { return w.rows(); }
};

struct EncoderParams {
  std::vector<LstmLayer> layers;
  double keep_prob = 1.0;
  std::optional<AttentionParams> attention;

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().input_size; }
  std::size_t hidden() const { return layers.empty() ? 0 : layers.back().hidden; }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (auto& l : layers) {
      out.push_back(&l.w);
      out.push_back(&l.u);
      out.push_back(&l.b);
    }
    if (attention) {
      out.push_back(&attention->w);
      out.push_back(&attention->b);
      out.push_back(&attention->u);
    }
    return out;
  }

  std::vector<const Param*> params() const {
    std::vector<const Param*> out;
    for (Param* p : const_cast<EncoderParams*>(this)->params()) out.push_back(p);
    return out;
  }
};

/// Creates correctly shaped, zero-valued encoder parameters.
inline EncoderParams make_encoder(std::size_t input_size, std::size_t hidden, std::size_t layers,
                                  bool attention, double keep_prob = 1.0) {
  if (layers == 0) throw InvalidArgument("encoder needs at least one layer");
  if (hidden == 0 || input_size == 0) throw InvalidArgument("encoder dimensions must be positive");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw InvalidArgument("keep probability must be in (0, 1]");
  EncoderParams p;
  p.keep_prob = keep_prob;
  for (std::size_t k = 0; k < layers; ++k) {
    p.layers.emplace_back(k == 0 ? input_size : hidden, hidden, "lstm" + std::to_string(k));
  }
  if (attention) p.attention.emplace(hidden);
  return p;
}

using EncoderOutputs = std::vector<Vector>;
using SentenceEmbedding = Vector;

/// Forward record for backpropagation through time.
struct EncoderTrace {
  std::vector<std::vector<LstmStep>> steps;  // [layer][t]
  std::vector<std::vector<Vector>> masks;    // [layer][t], dropout after layer k < top; empty when inert
  EncoderOutputs outputs;
};

inline EncoderTrace encode_traced(const EncoderParams& params, std::span<const Vector> inputs, Mode mode,
                                  SeededRng& rng) {
  if (inputs.empty()) throw EmptySentence("encode_sequence: empty sequence");
  if (params.layers.empty()) throw InvalidArgument("encode_sequence: encoder has no layers");
  const bool dropout = mode == Mode::train && params.keep_prob < 1.0;
  const std::size_t T = inputs.size();

  EncoderTrace trace;
  trace.steps.resize(params.layers.size());
  if (dropout) trace.masks.resize(params.layers.size() - 1);

  std::vector<Vector> current(inputs.begin(), inputs.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LstmLayer& layer = params.layers[l];
    Vector h(layer.hidden), c(layer.hidden);
    auto& steps = trace.steps[l];
    steps.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      steps.push_back(lstm_cell_forward(layer, current[t], h, c));
      h = steps.back().h;
      c = steps.back().c;
    }
    for (std::size_t t = 0; t < T; ++t) current[t] = steps[t].h;

    if (dropout && l + 1 < params.layers.size()) {
      auto& masks = trace.masks[l];
      const double scale = 1.0 / params.keep_prob;
      for (std::size_t t = 0; t < T; ++t) {
        Vector m(layer.hidden);
        for (std::size_t k = 0; k < m.size(); ++k) {
          m[k] = rng.uniform() < params.keep_prob ? scale : 0.0;
          current[t][k] *= m[k];
        }
        masks.push_back(std::move(m));
      }
    }
  }
  trace.outputs = std::move(current);
  return trace;
}

/// Runs the stack from zero initial state; inverted dropout between layers in
/// train mode only.
inline EncoderOutputs encode_sequence(const EncoderParams& params, std::span<const Vector> inputs,
                                      Mode mode, SeededRng& rng) {
  return encode_traced(params, inputs, mode, rng).outputs;
}

/// Backpropagation through time. `d_outputs[t]` is dL/d(top output t).
inline void encoder_backward(EncoderParams& params, const EncoderTrace& trace,
                             std::vector<Vector> d_outputs) {
  const std::size_t T = trace.outputs.size();
  check_same_size(d_outputs.size(), T, "encoder_backward");
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    LstmLayer& layer = params.layers[l];
    const auto& steps = trace.steps[l];
    if (!trace.masks.empty() && l + 1 < params.layers.size()) {
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < layer.hidden; ++k) d_outputs[t][k] *= trace.masks[l][t][k];
      }
    }
    const bool need_dx = l > 0;
    std::vector<Vector> d_inputs(need_dx ? T : 0);
    Vector dh_next(layer.hidden), dc_next(layer.hidden);
    for (std::size_t t = T; t-- > 0;) {
      Vector dh = d_outputs[t] + dh_next;
      auto g = lstm_cell_backward(layer, steps[t], dh, dc_next, need_dx);
      dh_next = std::move(g.dh_prev);
      dc_next = std::move(g.dc_prev);
      if (need_dx) d_inputs[t] = std::move(g.dx);
    }
    d_outputs = std::move(d_inputs);
  }
}

inline SentenceEmbedding last_output_pool(const EncoderOutputs& outputs) {
  if (outputs.empty()) throw EmptySentence("last_output_pool: no outputs");
  return outputs.back();
}

struct AttentionTrace {
  std::vector<Vector> z;  // tanh(W o_i + b)
  Vector scores;
  Vector weights;
};

struct AttentionResult {
  SentenceEmbedding embedding;
  Vector weights;
};

inline AttentionTrace attention_traced(const AttentionParams& attn, const EncoderOutputs& outputs,
                                       SentenceEmbedding& pooled) {
  if (outputs.empty()) throw EmptySentence("attention_pool: no outputs");
  const std::size_t h = attn.hidden();
  AttentionTrace tr;
  tr.scores = Vector(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    check_same_size(outputs[i].size(), h, "attention_pool");
    Vector z = matvec(attn.w.value, outputs[i]);
    for (std::size_t k = 0; k < h; ++k) z[k] = std::tanh(z[k] + attn.b.value(k, 0));
    tr.scores[i] = dot(attn.u.value.span(), z.span());
    tr.z.push_back(std::move(z));
  }
  tr.weights = softmax(tr.scores);
  pooled = Vector(h);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    for (std::size_t k = 0; k < h; ++k) pooled[k] += tr.weights[i] * outputs[i][k];
  }
  return tr;
}

inline AttentionResult attention_pool(const AttentionParams& attn, const EncoderOutputs& outputs) {
  AttentionResult r;
  r.weights = attention_traced(attn, outputs, r.embedding).weights;
  return r;
}

/// Returns dL/d o_i and accumulates attention parameter gradients.
inline std::vector<Vector> attention_backward(AttentionParams& attn, const EncoderOutputs& outputs,
                                              const AttentionTrace& tr, const Vector& d_pooled) {
  const std::size_t T = outputs.size();
  const std::size_t h = attn.hidden();
  std::vector<Vector> d_out(T);
  Vector d_alpha(T);
  for (std::size_t i = 0; i < T; ++i) {
    d_alpha[i] = dot(d_pooled, outputs[i]);
    d_out[i] = tr.weights[i] * d_pooled;
  }
  const double mean_d = dot(tr.weights, d_alpha);
  for (std::size_t i = 0; i < T; ++i) {
    const double d_score = tr.weights[i] * (d_alpha[i] - mean_d);
    if (d_score == 0.0) continue;
    for (std::size_t k = 0; k < h; ++k) {
      const double zk = tr.z[i][k];
      attn.u.grad(k, 0) += d_score * zk;
      const double d_pre = d_score * attn.u.value(k, 0) * (1.0 - zk * zk);
      attn.b.grad(k, 0) += d_pre;
      for (std::size_t c = 0; c < h; ++c) {
        attn.w.grad(k, c) += d_pre * outputs[i][c];
        d_out[i][c] += d_pre * attn.w.value(k, c);
      }
    }
  }
  return d_out;
}

/// Forward record of one sentence through encoder and pooling.
struct SentenceTrace {
  EncoderTrace encoder;
  std::optional<AttentionTrace> attention;
  SentenceEmbedding embedding;
};

inline SentenceTrace encode_sentence_traced(const EncoderParams& params, std::span<const Vector> inputs,
                                            Mode mode, SeededRng& rng) {
  SentenceTrace st;
  st.encoder = encode_traced(params, inputs, mode, rng);
  if (params.attention) {
    st.attention = attention_traced(*params.attention, st.encoder.outputs, st.embedding);
  } else {
    st.embedding = last_output_pool(st.encoder.outputs);
  }
  return st;
}

inline void sentence_backward(EncoderParams& params, const SentenceTrace& st, const Vector& d_embedding) {
  std::vector<Vector> d_out;
  if (params.attention) {
    d_out = attention_backward(*params.attention, st.encoder.outputs, *st.attention, d_embedding);
  } else {
    d_out.assign(st.encoder.outputs.size(), Vector(params.hidden()));
    d_out.back() = d_embedding;
  }
  encoder_backward(params, st.encoder, std::move(d_out));
}

}  // namespace ssn
