// SPDX-License-Identifier: Apache-2.0
#include "core/translate.hpp"

#include <algorithm>
#include <cmath>

namespace actseq {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kLstmMean: return "lstm-mean";
    case Variant::kLstmSs: return "lstm-ss";
    case Variant::kLstmEd: return "lstm-ed";
    case Variant::kGruAa: return "gru-aa";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kLstmMean, Variant::kLstmSs, Variant::kLstmEd, Variant::kGruAa}) {
    if (variant_name(v) == name) return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown model variant '" + std::string(name) +
                                        "' (expected lstm-mean, lstm-ss, lstm-ed or gru-aa)");
}

// ---------------------------------------------------------------------------
// Model construction

namespace {

std::size_t decoder_input_dim(Variant v, const ModelDims& d) {
  switch (v) {
    case Variant::kLstmEd: return d.embed_dim;
    case Variant::kLstmMean:
    case Variant::kLstmSs: return d.input_dim + d.embed_dim;
    case Variant::kGruAa: return d.embed_dim + d.hidden_dim;
  }
  return 0;
}

std::vector<LstmCellParams> lstm_stack_zeros(std::size_t input_dim, const ModelDims& d) {
  std::vector<LstmCellParams> stack;
  for (std::size_t l = 0; l < d.layers; ++l) {
    stack.push_back(LstmCellParams::zeros(l == 0 ? input_dim : d.hidden_dim, d.hidden_dim));
  }
  return stack;
}

Seq2SeqModel zero_model(Variant variant, const ModelDims& d) {
  require(d.input_dim > 0 && d.hidden_dim > 0 && d.embed_dim > 0,
          "model dimensions must be positive");
  require(d.token_count >= 4, "token count must cover at least one class plus SOS/EOS/PAD");
  require(d.layers >= 1, "layer count must be positive");
  require(variant != Variant::kGruAa || d.layers == 1, "GRU-AA is single-layer");

  Seq2SeqModel m;
  m.variant = variant;
  m.dims = d;
  switch (variant) {
    case Variant::kLstmEd:
      m.encoder_lstm = lstm_stack_zeros(d.input_dim, d);
      m.decoder_lstm = lstm_stack_zeros(d.embed_dim, d);
      break;
    case Variant::kLstmMean:
    case Variant::kLstmSs:
      m.decoder_lstm = lstm_stack_zeros(decoder_input_dim(variant, d), d);
      break;
    case Variant::kGruAa:
      m.encoder_gru = GruCellParams::zeros(d.input_dim, d.hidden_dim);
      m.decoder_gru = GruCellParams::zeros(decoder_input_dim(variant, d), d.hidden_dim);
      m.attention_w = Matrix(2 * d.hidden_dim, d.hidden_dim);
      m.attention_v = Matrix(1, d.hidden_dim);
      break;
  }
  m.embedding = Matrix(d.token_count, d.embed_dim);
  m.output_w = Matrix(d.token_count, m.output_input_dim());
  m.output_b = Matrix(d.token_count, 1);
  return m;
}

}  // namespace

std::size_t Seq2SeqModel::output_input_dim() const {
  return variant == Variant::kGruAa ? 2 * dims.hidden_dim + dims.embed_dim : dims.hidden_dim;
}

Seq2SeqModel Seq2SeqModel::create(Variant variant, const ModelDims& dims, std::uint64_t seed,
                                  std::uint64_t vocab_hash) {
  Seq2SeqModel m = zero_model(variant, dims);
  m.vocab_hash = vocab_hash;
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims.hidden_dim));
  each(m, [&](const std::string&, Matrix& w) { fill_uniform(w, scale, rng); });
  return m;
}

Seq2SeqModel Seq2SeqModel::zeros_like() const {
  Seq2SeqModel m = zero_model(variant, dims);
  m.vocab_hash = vocab_hash;
  return m;
}

std::size_t Seq2SeqModel::parameter_count() const {
  std::size_t n = 0;
  each(*this, [&](const std::string&, const Matrix& w) { n += w.size(); });
  return n;
}

Vec Seq2SeqModel::flatten() const {
  Vec out;
  out.reserve(parameter_count());
  each(*this, [&](const std::string&, const Matrix& w) {
    out.insert(out.end(), w.values().begin(), w.values().end());
  });
  return out;
}

void Seq2SeqModel::assign(ConstSpan flat) {
  require(flat.size() == parameter_count(), "assign: parameter count mismatch");
  std::size_t off = 0;
  each(*this, [&](const std::string&, Matrix& w) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), w.size(), w.values().begin());
    off += w.size();
  });
}

void Seq2SeqModel::add_scaled(const Seq2SeqModel& other, double alpha) {
  std::vector<const Matrix*> src;
  each(other, [&](const std::string&, const Matrix& w) { src.push_back(&w); });
  std::size_t k = 0;
  each(*this, [&](const std::string&, Matrix& w) {
    require(k < src.size() && src[k]->size() == w.size(), "add_scaled: shape mismatch");
    axpy(alpha, src[k]->values(), w.values());
    ++k;
  });
}

void Seq2SeqModel::set_zero() {
  each(*this, [](const std::string&, Matrix& w) { w.set_zero(); });
}

bool Seq2SeqModel::all_finite() const {
  bool ok = true;
  each(*this, [&](const std::string&, const Matrix& w) { ok = ok && w.all_finite(); });
  return ok;
}

bool operator==(const Seq2SeqModel& a, const Seq2SeqModel& b) {
  if (a.variant != b.variant || a.vocab_hash != b.vocab_hash) return false;
  const auto& da = a.dims;
  const auto& db = b.dims;
  if (da.input_dim != db.input_dim || da.hidden_dim != db.hidden_dim ||
      da.embed_dim != db.embed_dim || da.token_count != db.token_count || da.layers != db.layers) {
    return false;
  }
  return a.flatten() == b.flatten();
}

// ---------------------------------------------------------------------------
// Shared pieces

namespace {

void check_inputs(const Seq2SeqModel& model, const std::vector<Vec>& inputs) {
  require(!inputs.empty(), "feature sequence must have at least one frame");
  for (const auto& x : inputs) {
    if (x.size() != model.dims.input_dim) {
      fail(ErrorCode::kInvalidArgument, "feature dimension " + std::to_string(x.size()) +
                                            " does not match model input dimension " +
                                            std::to_string(model.dims.input_dim));
    }
  }
}

ConstSpan embedding_row(const Seq2SeqModel& model, Token t) { return model.embedding.row(t); }

Vec project_output(const Seq2SeqModel& model, ConstSpan in) {
  Vec s(model.output_b.values().begin(), model.output_b.values().end());
  gemv_acc(model.output_w, in, s);
  return s;
}

struct StackState {
  std::vector<Vec> h, c;
};

StackState zero_stack_state(const ModelDims& d) {
  return {std::vector<Vec>(d.layers, Vec(d.hidden_dim, 0.0)),
          std::vector<Vec>(d.layers, Vec(d.hidden_dim, 0.0))};
}

const Vec& stack_step(const std::vector<LstmCellParams>& stack, ConstSpan x, StackState& st,
                      std::vector<LstmCache>* caches) {
  if (caches) caches->assign(stack.size(), LstmCache{});
  Vec in(x.begin(), x.end());
  for (std::size_t l = 0; l < stack.size(); ++l) {
    auto out = lstm_step(in, st.h[l], st.c[l], stack[l], caches ? &(*caches)[l] : nullptr);
    st.h[l] = std::move(out.h);
    st.c[l] = std::move(out.c);
    in = st.h[l];
  }
  return st.h.back();
}

/// Gradient carried across time for each layer of an LSTM stack.
struct StackCarry {
  std::vector<Vec> dh, dc;
};

StackCarry zero_carry(const ModelDims& d) {
  return {std::vector<Vec>(d.layers, Vec(d.hidden_dim, 0.0)),
          std::vector<Vec>(d.layers, Vec(d.hidden_dim, 0.0))};
}

/// Reverse of stack_step. `dh_top` is the gradient reaching the top layer's
/// output at this step from outside the recurrence (may be empty).
Vec stack_step_backward(const std::vector<LstmCellParams>& stack,
                        const std::vector<LstmCache>& caches, ConstSpan dh_top, StackCarry& carry,
                        std::vector<LstmCellParams>& grads) {
  Vec from_above;
  for (std::size_t li = stack.size(); li-- > 0;) {
    Vec dh = carry.dh[li];
    if (li + 1 == stack.size()) {
      if (!dh_top.empty()) axpy(1.0, dh_top, dh);
    } else {
      axpy(1.0, from_above, dh);
    }
    auto g = lstm_step_backward(caches[li], stack[li], dh, carry.dc[li], grads[li]);
    carry.dh[li] = std::move(g.dh_prev);
    carry.dc[li] = std::move(g.dc_prev);
    from_above = std::move(g.dx);
  }
  return from_above;
}

const Matrix& att_w(const Seq2SeqModel& m) { return *m.attention_w; }
const Matrix& att_v(const Seq2SeqModel& m) { return *m.attention_v; }

/// Encoder half of the attention pre-activation: W_att[0:H, :]^T h.
Vec encoder_projection(const Seq2SeqModel& m, ConstSpan h) {
  const std::size_t hd = m.dims.hidden_dim;
  Vec out(hd, 0.0);
  const Matrix& w = att_w(m);
  for (std::size_t j = 0; j < hd; ++j) axpy(h[j], w.row(j), out);
  return out;
}

/// Decoder half: W_att[H:2H, :]^T h_dec.
Vec decoder_projection(const Seq2SeqModel& m, ConstSpan h_dec) {
  const std::size_t hd = m.dims.hidden_dim;
  Vec out(hd, 0.0);
  const Matrix& w = att_w(m);
  for (std::size_t j = 0; j < hd; ++j) axpy(h_dec[j], w.row(hd + j), out);
  return out;
}

/// beta_i = tanh(enc_proj_i + dec_proj) . V, alpha = softmax(beta). Stores
/// the tanh activations in `hidden` when non-null.
Vec attend(const Seq2SeqModel& m, const std::vector<Vec>& enc_proj, ConstSpan dec_proj,
           Matrix* hidden) {
  const std::size_t t_len = enc_proj.size();
  const std::size_t hd = m.dims.hidden_dim;
  auto v = att_v(m).row(0);
  Vec beta(t_len);
  Vec u(hd);
  for (std::size_t i = 0; i < t_len; ++i) {
    for (std::size_t k = 0; k < hd; ++k) u[k] = std::tanh(enc_proj[i][k] + dec_proj[k]);
    beta[i] = dot(u, v);
    if (hidden) std::copy(u.begin(), u.end(), hidden->row(i).begin());
  }
  return softmax(beta);
}

Vec concat(std::initializer_list<ConstSpan> parts) {
  Vec out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ---------------------------------------------------------------------------
// Encoders

void encode_into(const Seq2SeqModel& m, const std::vector<Vec>& inputs, ForwardTrace& tr,
                 bool keep) {
  const auto& d = m.dims;
  tr.length = inputs.size();
  tr.input_dim = d.input_dim;
  switch (m.variant) {
    case Variant::kLstmEd: {
      StackState st = zero_stack_state(d);
      if (keep) tr.enc_lstm.resize(inputs.size());
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        tr.enc_states.push_back(stack_step(m.encoder_lstm, inputs[t], st, keep ? &tr.enc_lstm[t] : nullptr));
      }
      tr.init_h = st.h;
      tr.init_c = st.c;
      break;
    }
    case Variant::kGruAa: {
      Vec h(d.hidden_dim, 0.0);
      if (keep) tr.enc_gru.resize(inputs.size());
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        h = gru_step(inputs[t], h, *m.encoder_gru, keep ? &tr.enc_gru[t] : nullptr);
        tr.enc_states.push_back(h);
        tr.enc_proj.push_back(encoder_projection(m, h));
      }
      tr.init_h = {h};
      break;
    }
    case Variant::kLstmMean: {
      tr.mean_input.assign(d.input_dim, 0.0);
      for (const auto& x : inputs) axpy(1.0, x, tr.mean_input);
      for (double& v : tr.mean_input) v /= static_cast<double>(inputs.size());
      StackState st = zero_stack_state(d);
      tr.init_h = st.h;
      tr.init_c = st.c;
      break;
    }
    case Variant::kLstmSs: {
      StackState st = zero_stack_state(d);
      if (keep) tr.enc_lstm.resize(inputs.size());
      Vec in(d.input_dim + d.embed_dim, 0.0);
      for (std::size_t t = 0; t < inputs.size(); ++t) {
        std::copy(inputs[t].begin(), inputs[t].end(), in.begin());
        tr.enc_states.push_back(stack_step(m.decoder_lstm, in, st, keep ? &tr.enc_lstm[t] : nullptr));
      }
      tr.init_h = st.h;
      tr.init_c = st.c;
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Decoder

Token next_input(const DecodePolicy& policy, const ForwardTrace& tr, const ModelDims& d) {
  const std::size_t q = tr.scores.size();
  if (q == 0) return d.sos();
  if (policy.targets && q < policy.forcing.size() && policy.forcing[q]) {
    require(q - 1 < policy.targets->size(), "teacher forcing beyond target length");
    return (*policy.targets)[q - 1];
  }
  return tr.argmax[q - 1];
}

void decode_into(const Seq2SeqModel& m, const DecodePolicy& policy, ForwardTrace& tr, bool keep) {
  require(policy.max_steps >= 1, "max_decode_len must be at least 1");
  const auto& d = m.dims;
  StackState st;
  Vec h_dec;
  if (m.variant == Variant::kGruAa) {
    h_dec = tr.init_h.front();
  } else {
    st = {tr.init_h, tr.init_c};
  }

  for (std::size_t q = 0; q < policy.max_steps; ++q) {
    const Token tok = next_input(policy, tr, d);
    tr.fed.push_back(tok);
    ConstSpan emb = embedding_row(m, tok);
    Vec out_in;
    switch (m.variant) {
      case Variant::kLstmEd: {
        if (keep) tr.dec_lstm.emplace_back();
        out_in = stack_step(m.decoder_lstm, emb, st, keep ? &tr.dec_lstm.back() : nullptr);
        break;
      }
      case Variant::kLstmMean: {
        if (keep) tr.dec_lstm.emplace_back();
        Vec in = concat({tr.mean_input, emb});
        out_in = stack_step(m.decoder_lstm, in, st, keep ? &tr.dec_lstm.back() : nullptr);
        break;
      }
      case Variant::kLstmSs: {
        if (keep) tr.dec_lstm.emplace_back();
        Vec in(d.input_dim + d.embed_dim, 0.0);
        std::copy(emb.begin(), emb.end(), in.begin() + static_cast<std::ptrdiff_t>(d.input_dim));
        out_in = stack_step(m.decoder_lstm, in, st, keep ? &tr.dec_lstm.back() : nullptr);
        break;
      }
      case Variant::kGruAa: {
        Vec dec_proj = decoder_projection(m, h_dec);
        Matrix hidden;
        if (keep) hidden = Matrix(tr.length, d.hidden_dim);
        Vec alpha = attend(m, tr.enc_proj, dec_proj, keep ? &hidden : nullptr);
        Vec ctx = context_vector(tr.enc_states, alpha);
        Vec x_dec = concat({emb, ctx});
        if (keep) {
          tr.dec_gru.emplace_back();
          tr.dec_prev_h.push_back(h_dec);
          tr.att_hidden.push_back(std::move(hidden));
        }
        h_dec = gru_step(x_dec, h_dec, *m.decoder_gru, keep ? &tr.dec_gru.back() : nullptr);
        out_in = concat({h_dec, ctx, emb});
        tr.alpha.push_back(std::move(alpha));
        if (keep) tr.context.push_back(std::move(ctx));
        break;
      }
    }
    Vec s = project_output(m, out_in);
    if (keep) tr.out_input.push_back(std::move(out_in));
    const Token best = decode_argmax(s, d);
    tr.scores.push_back(std::move(s));
    tr.argmax.push_back(best);
    if (policy.stop_at_eos && best == d.eos()) {
      tr.hit_eos = true;
      break;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations

Token decode_argmax(ConstSpan scores, const ModelDims& d) {
  require(scores.size() == d.token_count, "score vector has wrong size");
  std::size_t best = d.token_count;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == d.sos() || i == d.pad()) continue;
    if (best == d.token_count || scores[i] > scores[best]) best = i;
  }
  return static_cast<Token>(best);
}

DecodePolicy DecodePolicy::greedy(std::size_t max_decode_len) {
  DecodePolicy p;
  p.max_steps = max_decode_len;
  p.stop_at_eos = true;
  return p;
}

DecodePolicy DecodePolicy::teacher(const TokenSeq& targets, std::vector<bool> forcing) {
  DecodePolicy p;
  p.max_steps = targets.size() + 1;
  p.stop_at_eos = false;
  p.targets = &targets;
  p.forcing = std::move(forcing);
  p.forcing.resize(p.max_steps, false);
  return p;
}

ForwardTrace forward(const Seq2SeqModel& model, const std::vector<Vec>& inputs,
                     const DecodePolicy& policy, bool keep_cache) {
  check_inputs(model, inputs);
  if (policy.targets) {
    for (Token t : *policy.targets) {
      require(t < model.dims.class_count(), "target token " + std::to_string(t) + " is not an action class");
    }
  }
  ForwardTrace tr;
  tr.cached = keep_cache;
  encode_into(model, inputs, tr, keep_cache);
  decode_into(model, policy, tr, keep_cache);
  return tr;
}

EncoderOutput encode(const Seq2SeqModel& model, const FeatureSequence& features) {
  if (model.variant == Variant::kLstmMean) {
    fail(ErrorCode::kUnsupported, "encode: LSTM-Mean has no recurrent encoder");
  }
  check_inputs(model, features.frames);
  ForwardTrace tr;
  encode_into(model, features.frames, tr, false);
  EncoderOutput out;
  out.states = std::move(tr.enc_states);
  out.final_h = std::move(tr.init_h);
  out.final_c = std::move(tr.init_c);
  return out;
}

Vec attention(const Seq2SeqModel& model, const std::vector<Vec>& states, ConstSpan decoder_state) {
  if (model.variant != Variant::kGruAa || !model.attention_w) {
    fail(ErrorCode::kUnsupported, "attention: model variant " +
                                      std::string(variant_name(model.variant)) +
                                      " has no attention parameters");
  }
  require(!states.empty(), "attention: no encoder states");
  require(decoder_state.size() == model.dims.hidden_dim, "attention: decoder state size mismatch");
  std::vector<Vec> proj;
  proj.reserve(states.size());
  for (const auto& h : states) {
    require(h.size() == model.dims.hidden_dim, "attention: encoder state size mismatch");
    proj.push_back(encoder_projection(model, h));
  }
  return attend(model, proj, decoder_projection(model, decoder_state), nullptr);
}

Vec context_vector(const std::vector<Vec>& states, ConstSpan alpha) {
  require(states.size() == alpha.size(), "context_vector: weight count does not match state count");
  require(!states.empty(), "context_vector: no states");
  Vec c(states.front().size(), 0.0);
  for (std::size_t j = 0; j < states.size(); ++j) axpy(alpha[j], states[j], c);
  return c;
}

Prediction to_prediction(const Seq2SeqModel& model, const ForwardTrace& tr) {
  Prediction p;
  for (Token t : tr.argmax) {
    if (t == model.dims.eos()) break;
    p.tokens.push_back(t);
  }
  p.step_scores = tr.scores;
  if (model.variant == Variant::kGruAa) {
    Matrix w(tr.length, tr.alpha.size());
    for (std::size_t q = 0; q < tr.alpha.size(); ++q) {
      for (std::size_t i = 0; i < tr.length; ++i) w(i, q) = tr.alpha[q][i];
    }
    p.attention = AttentionTrace{std::move(w)};
  }
  return p;
}

Prediction decode_greedy(const Seq2SeqModel& model, const EncoderOutput& encoded,
                         std::size_t max_decode_len) {
  require(max_decode_len >= 1, "max_decode_len must be at least 1");
  require(!encoded.states.empty(), "decode_greedy: empty encoder output");
  ForwardTrace tr;
  tr.length = encoded.states.size();
  tr.input_dim = model.dims.input_dim;
  tr.enc_states = encoded.states;
  tr.init_h = encoded.final_h;
  tr.init_c = encoded.final_c;
  switch (model.variant) {
    case Variant::kGruAa:
      for (const auto& h : tr.enc_states) tr.enc_proj.push_back(encoder_projection(model, h));
      if (tr.init_h.empty()) tr.init_h = {tr.enc_states.back()};
      break;
    case Variant::kLstmEd:
    case Variant::kLstmSs:
      require(tr.init_h.size() == model.dims.layers && tr.init_c.size() == model.dims.layers,
              "decode_greedy: encoder output lacks final states");
      break;
    case Variant::kLstmMean:
      fail(ErrorCode::kUnsupported, "decode_greedy: LSTM-Mean decodes via forward_baseline");
  }
  decode_into(model, DecodePolicy::greedy(max_decode_len), tr, false);
  return to_prediction(model, tr);
}

Prediction forward_baseline(const Seq2SeqModel& model, const FeatureSequence& features,
                            std::size_t max_decode_len) {
  if (model.variant != Variant::kLstmMean && model.variant != Variant::kLstmSs) {
    fail(ErrorCode::kUnsupported, "forward_baseline: variant " +
                                      std::string(variant_name(model.variant)) +
                                      " is not a baseline");
  }
  return to_prediction(model, forward(model, features.frames,
                                      DecodePolicy::greedy(max_decode_len), false));
}

Prediction translate(const Seq2SeqModel& model, const FeatureSequence& features,
                     std::size_t max_decode_len) {
  return to_prediction(model, forward(model, features.frames,
                                      DecodePolicy::greedy(max_decode_len), false));
}

// ---------------------------------------------------------------------------
// Backward

void backward(const Seq2SeqModel& m, const ForwardTrace& tr, const std::vector<Vec>& dscores,
              Seq2SeqModel& g, std::vector<Vec>* dinputs) {
  if (!tr.cached) fail(ErrorCode::kInvalidState, "backward: trace was recorded without caches");
  require(dscores.size() == tr.steps(), "backward: one score gradient per decoding step required");
  const auto& d = m.dims;
  if (dinputs) dinputs->assign(tr.length, Vec(d.input_dim, 0.0));

  // Output projection is shared by all variants.
  std::vector<Vec> dout_in(tr.steps());
  for (std::size_t q = 0; q < tr.steps(); ++q) {
    require(dscores[q].size() == d.token_count, "backward: score gradient has wrong size");
    outer_acc(g.output_w, dscores[q], tr.out_input[q]);
    axpy(1.0, dscores[q], g.output_b.values());
    dout_in[q].assign(m.output_input_dim(), 0.0);
    gemv_t_acc(m.output_w, dscores[q], dout_in[q]);
  }

  auto add_embedding_grad = [&](Token tok, ConstSpan de) { axpy(1.0, de, g.embedding.row(tok)); };

  switch (m.variant) {
    case Variant::kLstmEd: {
      StackCarry carry = zero_carry(d);
      for (std::size_t q = tr.steps(); q-- > 0;) {
        Vec dx = stack_step_backward(m.decoder_lstm, tr.dec_lstm[q], dout_in[q], carry, g.decoder_lstm);
        add_embedding_grad(tr.fed[q], dx);
      }
      for (std::size_t t = tr.length; t-- > 0;) {
        Vec dx = stack_step_backward(m.encoder_lstm, tr.enc_lstm[t], {}, carry, g.encoder_lstm);
        if (dinputs) (*dinputs)[t] = std::move(dx);
      }
      break;
    }
    case Variant::kLstmMean: {
      StackCarry carry = zero_carry(d);
      Vec dmean(d.input_dim, 0.0);
      for (std::size_t q = tr.steps(); q-- > 0;) {
        Vec dx = stack_step_backward(m.decoder_lstm, tr.dec_lstm[q], dout_in[q], carry, g.decoder_lstm);
        axpy(1.0, ConstSpan(dx).first(d.input_dim), dmean);
        add_embedding_grad(tr.fed[q], ConstSpan(dx).subspan(d.input_dim));
      }
      if (dinputs) {
        const double inv = 1.0 / static_cast<double>(tr.length);
        for (auto& dx : *dinputs) axpy(inv, dmean, dx);
      }
      break;
    }
    case Variant::kLstmSs: {
      StackCarry carry = zero_carry(d);
      for (std::size_t q = tr.steps(); q-- > 0;) {
        Vec dx = stack_step_backward(m.decoder_lstm, tr.dec_lstm[q], dout_in[q], carry, g.decoder_lstm);
        add_embedding_grad(tr.fed[q], ConstSpan(dx).subspan(d.input_dim));
      }
      for (std::size_t t = tr.length; t-- > 0;) {
        Vec dx = stack_step_backward(m.decoder_lstm, tr.enc_lstm[t], {}, carry, g.decoder_lstm);
        if (dinputs) std::copy_n(dx.begin(), d.input_dim, (*dinputs)[t].begin());
      }
      break;
    }
    case Variant::kGruAa: {
      const std::size_t hd = d.hidden_dim;
      const std::size_t ed = d.embed_dim;
      const Matrix& w = att_w(m);
      auto v = att_v(m).row(0);
      Matrix& gw = *g.attention_w;
      auto gv = g.attention_v->row(0);
      std::vector<Vec> dstates(tr.length, Vec(hd, 0.0));
      Vec carry(hd, 0.0);
      Vec dpre(hd), dpre_sum(hd);
      for (std::size_t q = tr.steps(); q-- > 0;) {
        const Vec& dfeat = dout_in[q];
        Vec dh_new(dfeat.begin(), dfeat.begin() + static_cast<std::ptrdiff_t>(hd));
        axpy(1.0, carry, dh_new);
        Vec dctx(dfeat.begin() + static_cast<std::ptrdiff_t>(hd),
                 dfeat.begin() + static_cast<std::ptrdiff_t>(2 * hd));
        Vec de(dfeat.begin() + static_cast<std::ptrdiff_t>(2 * hd), dfeat.end());

        auto gru = gru_step_backward(tr.dec_gru[q], *m.decoder_gru, dh_new, *g.decoder_gru);
        axpy(1.0, ConstSpan(gru.dx).first(ed), de);
        axpy(1.0, ConstSpan(gru.dx).subspan(ed), dctx);
        add_embedding_grad(tr.fed[q], de);

        // Context vector and softmax.
        const Vec& alpha = tr.alpha[q];
        Vec dalpha(tr.length);
        double weighted = 0.0;
        for (std::size_t i = 0; i < tr.length; ++i) {
          dalpha[i] = dot(dctx, tr.enc_states[i]);
          weighted += alpha[i] * dalpha[i];
          axpy(alpha[i], dctx, dstates[i]);
        }
        // Additive scoring.
        std::fill(dpre_sum.begin(), dpre_sum.end(), 0.0);
        const Matrix& hidden = tr.att_hidden[q];
        for (std::size_t i = 0; i < tr.length; ++i) {
          const double dbeta = alpha[i] * (dalpha[i] - weighted);
          if (dbeta == 0.0) continue;
          auto u = hidden.row(i);
          axpy(dbeta, u, gv);
          for (std::size_t k = 0; k < hd; ++k) dpre[k] = dbeta * v[k] * (1.0 - u[k] * u[k]);
          const Vec& hi = tr.enc_states[i];
          for (std::size_t j = 0; j < hd; ++j) {
            axpy(hi[j], dpre, gw.row(j));
            dstates[i][j] += dot(w.row(j), dpre);
          }
          axpy(1.0, dpre, dpre_sum);
        }
        const Vec& h_prev = tr.dec_prev_h[q];
        Vec dh_prev = std::move(gru.dh_prev);
        for (std::size_t j = 0; j < hd; ++j) {
          axpy(h_prev[j], dpre_sum, gw.row(hd + j));
          dh_prev[j] += dot(w.row(hd + j), dpre_sum);
        }
        carry = std::move(dh_prev);
      }
      // Decoder starts from the last encoder state.
      axpy(1.0, carry, dstates.back());
      Vec dh(hd, 0.0);
      for (std::size_t t = tr.length; t-- > 0;) {
        axpy(1.0, dstates[t], dh);
        auto gru = gru_step_backward(tr.enc_gru[t], *m.encoder_gru, dh, *g.encoder_gru);
        dh = std::move(gru.dh_prev);
        if (dinputs) (*dinputs)[t] = std::move(gru.dx);
      }
      break;
    }
  }
}

}  // namespace actseq
