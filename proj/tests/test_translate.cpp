// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>
#include <sstream>

#include "core/train.hpp"
#include "core/translate.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace actseq;
using actseq::testing::code_of;

namespace {

constexpr Variant kAll[] = {Variant::kLstmMean, Variant::kLstmSs, Variant::kLstmEd, Variant::kGruAa};

ModelDims small_dims(std::size_t layers = 1) {
  ModelDims d;
  d.input_dim = 4;
  d.hidden_dim = 5;
  d.embed_dim = 3;
  d.token_count = 7;
  d.layers = layers;
  return d;
}

FeatureSequence random_features(std::size_t t, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureSequence f;
  f.source_id = "x";
  for (std::size_t i = 0; i < t; ++i) {
    Vec v(dim);
    for (double& x : v) x = u(rng);
    f.frames.push_back(v);
  }
  return f;
}

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// GRU step written out from the gate definitions.
Vec gru_ref(const Vec& x, const Vec& h, const GruCellParams& p) {
  const std::size_t n = h.size();
  Vec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double a[3], r_[3];
    for (std::size_t g = 0; g < 3; ++g) {
      a[g] = p.bias_input(g * n + k, 0);
      r_[g] = p.bias_recurrent(g * n + k, 0);
      for (std::size_t c = 0; c < x.size(); ++c) a[g] += p.w_input(g * n + k, c) * x[c];
      for (std::size_t c = 0; c < n; ++c) r_[g] += p.w_recurrent(g * n + k, c) * h[c];
    }
    const double z = sig(a[0] + r_[0]), r = sig(a[1] + r_[1]);
    const double cand = std::tanh(a[2] + r * r_[2]);
    out[k] = (1.0 - z) * cand + z * h[k];
  }
  return out;
}

struct Replay {
  TokenSeq tokens;
  std::vector<Vec> alphas;
};

// Straight-line greedy GRU-AA decode: encoder GRU from zero state, decoder
// starts at the last encoder state, attention reads the previous decoder
// state, the decoder consumes [embedding; context] and the output layer
// reads [state; context; embedding].
Replay gru_aa_replay(const Seq2SeqModel& m, const FeatureSequence& f, std::size_t max_len) {
  const std::size_t hd = m.dims.hidden_dim;
  std::vector<Vec> states;
  Vec h(hd, 0.0);
  for (const auto& x : f.frames) {
    h = gru_ref(x, h, *m.encoder_gru);
    states.push_back(h);
  }
  Replay out;
  Token tok = m.dims.sos();
  for (std::size_t q = 0; q < max_len; ++q) {
    Vec beta(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) {
      double b = 0.0;
      for (std::size_t k = 0; k < hd; ++k) {
        double pre = 0.0;
        for (std::size_t j = 0; j < hd; ++j)
          pre += (*m.attention_w)(j, k) * states[i][j] + (*m.attention_w)(hd + j, k) * h[j];
        b += (*m.attention_v)(0, k) * std::tanh(pre);
      }
      beta[i] = b;
    }
    double mx = beta[0], z = 0.0;
    for (double b : beta) mx = std::max(mx, b);
    Vec alpha(beta.size());
    for (std::size_t i = 0; i < beta.size(); ++i) z += (alpha[i] = std::exp(beta[i] - mx));
    for (double& a : alpha) a /= z;
    Vec ctx(hd, 0.0);
    for (std::size_t i = 0; i < states.size(); ++i)
      for (std::size_t k = 0; k < hd; ++k) ctx[k] += alpha[i] * states[i][k];
    Vec emb(m.embedding.row(tok).begin(), m.embedding.row(tok).end());
    Vec x = emb;
    x.insert(x.end(), ctx.begin(), ctx.end());
    h = gru_ref(x, h, *m.decoder_gru);
    Vec read = h;
    read.insert(read.end(), ctx.begin(), ctx.end());
    read.insert(read.end(), emb.begin(), emb.end());
    Token best = 0;
    double best_score = -1e300;
    for (std::size_t c = 0; c < m.dims.token_count; ++c) {
      if (c == m.dims.sos() || c == m.dims.pad()) continue;
      double s = m.output_b(c, 0);
      for (std::size_t k = 0; k < read.size(); ++k) s += m.output_w(c, k) * read[k];
      if (s > best_score) {
        best_score = s;
        best = static_cast<Token>(c);
      }
    }
    out.alphas.push_back(alpha);
    if (best == m.dims.eos()) break;
    out.tokens.push_back(best);
    tok = best;
  }
  return out;
}

Seq2SeqModel scaled(Seq2SeqModel m, double factor) {
  Vec v = m.flatten();
  for (double& x : v) x *= factor;
  m.assign(v);
  return m;
}

}  // namespace

TEST_CASE("variant names round trip") {
  for (Variant v : kAll) CHECK(parse_variant(variant_name(v)) == v);
  CHECK(variant_name(Variant::kGruAa) == "gru-aa");
  CHECK(variant_name(Variant::kLstmMean) == "lstm-mean");
  CHECK(code_of([] { parse_variant("transformer"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("argmax skips protocol tokens and prefers lower ids on ties") {
  const auto d = small_dims();  // SOS 4, EOS 5, PAD 6
  CHECK(decode_argmax(Vec{0, 1, 1, 0, 9, 0, 9}, d) == 1);
  CHECK(decode_argmax(Vec{0, 0, 0, 0, 9, 3, 9}, d) == 5);
  CHECK(decode_argmax(Vec{2, 2, 2, 2, 2, 2, 2}, d) == 0);
  CHECK(code_of([&] { decode_argmax(Vec{1, 2}, d); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("parameter shapes") {
  const auto d = small_dims();
  const auto m = Seq2SeqModel::create(Variant::kGruAa, d, 3);
  CHECK(m.attention_w->rows() == 2 * d.hidden_dim);
  CHECK(m.attention_w->cols() == d.hidden_dim);
  CHECK(m.attention_v->rows() == 1);
  CHECK(m.encoder_gru->w_input.rows() == 3 * d.hidden_dim);
  CHECK(m.decoder_gru->input_dim() == d.embed_dim + d.hidden_dim);
  CHECK(m.output_w.cols() == 2 * d.hidden_dim + d.embed_dim);
  CHECK(m.embedding.rows() == d.token_count);

  const auto ed = Seq2SeqModel::create(Variant::kLstmEd, d, 3);
  CHECK(ed.encoder_lstm.size() == 1);
  CHECK(ed.output_w.cols() == d.hidden_dim);
  CHECK_FALSE(ed.attention_w.has_value());

  const auto mean = Seq2SeqModel::create(Variant::kLstmMean, small_dims(2), 3);
  CHECK(mean.decoder_lstm.size() == 2);
  CHECK(mean.decoder_lstm[0].input_dim() == d.input_dim + d.embed_dim);
  CHECK(mean.decoder_lstm[1].input_dim() == d.hidden_dim);

  const double bound = 1.0 / std::sqrt(static_cast<double>(d.hidden_dim));
  for (double v : m.flatten()) CHECK(std::abs(v) <= bound);
  CHECK(Seq2SeqModel::create(Variant::kGruAa, d, 3) == m);
  CHECK_FALSE(Seq2SeqModel::create(Variant::kGruAa, d, 4) == m);
}

TEST_CASE("attention weights") {
  std::mt19937_64 rng(1);
  const auto m = Seq2SeqModel::create(Variant::kGruAa, small_dims(), 9);
  const Vec dec(5, 0.3);
  std::vector<Vec> one{Vec(5, 0.1)};
  CHECK(attention(m, one, dec) == Vec{1.0});

  auto flat = m;
  flat.attention_v->values()[0] = 0.0;
  std::fill(flat.attention_v->values().begin(), flat.attention_v->values().end(), 0.0);
  std::vector<Vec> states;
  for (int i = 0; i < 4; ++i) states.push_back(random_features(1, 5, rng).frames[0]);
  for (double a : attention(flat, states, dec)) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));

  const Vec alpha = attention(m, states, dec);
  double sum = 0.0;
  for (double a : alpha) {
    CHECK(a > 0.0);
    sum += a;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));

  const auto ed = Seq2SeqModel::create(Variant::kLstmEd, small_dims(), 9);
  CHECK(code_of([&] { attention(ed, states, dec); }) == ErrorCode::kUnsupported);
}

TEST_CASE("context vector") {
  const std::vector<Vec> s{{1, 2}, {3, 4}, {5, 6}};
  CHECK(context_vector(s, Vec{0, 1, 0}) == Vec{3, 4});
  const Vec mean = context_vector(s, Vec{1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(mean[0] == doctest::Approx(3.0));
  CHECK(mean[1] == doctest::Approx(4.0));
  CHECK(code_of([&] { context_vector(s, Vec{1, 0}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("gru-aa greedy decode matches a straight-line replay") {
  std::mt19937_64 rng(17);
  std::size_t emitted = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    // Larger weights make the decode path non-trivial.
    const auto m = scaled(Seq2SeqModel::create(Variant::kGruAa, small_dims(), seed), 3.0);
    const auto f = random_features(6, 4, rng);
    const auto got = translate(m, f, 8);
    const auto want = gru_aa_replay(m, f, 8);
    CHECK(got.tokens == want.tokens);
    emitted += want.tokens.size();
    REQUIRE(got.attention.has_value());
    REQUIRE(got.attention->weights.cols() == want.alphas.size());
    for (std::size_t q = 0; q < want.alphas.size(); ++q)
      for (std::size_t i = 0; i < 6; ++i)
        CHECK(got.attention->weights(i, q) == doctest::Approx(want.alphas[q][i]).epsilon(1e-12));
  }
  CHECK(emitted > 0);
}

TEST_CASE("decoding stops at EOS or the cap") {
  std::mt19937_64 rng(2);
  const auto f = random_features(3, 4, rng);
  for (Variant v : kAll) {
    CAPTURE(variant_name(v));
    auto m = Seq2SeqModel::create(v, small_dims(v == Variant::kLstmEd || v == Variant::kGruAa ? 1 : 2), 5);
    std::fill(m.output_w.values().begin(), m.output_w.values().end(), 0.0);
    std::fill(m.output_b.values().begin(), m.output_b.values().end(), 0.0);
    m.output_b(m.dims.eos(), 0) = 5.0;
    auto p = translate(m, f, 6);
    CHECK(p.tokens.empty());
    CHECK(p.step_scores.size() == 1);

    m.output_b(m.dims.eos(), 0) = -5.0;
    m.output_b(2, 0) = 5.0;
    p = translate(m, f, 6);
    CHECK(p.tokens == TokenSeq(6, 2));

    // A constant shift of every score leaves the decode unchanged.
    auto shifted = scaled(Seq2SeqModel::create(v, m.dims, 8), 3.0);
    const auto before = translate(shifted, f, 6).tokens;
    for (double& b : shifted.output_b.values()) b += 1.5;
    CHECK(translate(shifted, f, 6).tokens == before);
  }
}

TEST_CASE("unsupported and invalid calls") {
  std::mt19937_64 rng(3);
  const auto f = random_features(3, 4, rng);
  const auto mean = Seq2SeqModel::create(Variant::kLstmMean, small_dims(2), 1);
  const auto gru = Seq2SeqModel::create(Variant::kGruAa, small_dims(), 1);
  CHECK(code_of([&] { encode(mean, f); }) == ErrorCode::kUnsupported);
  CHECK(code_of([&] { forward_baseline(gru, f, 4); }) == ErrorCode::kUnsupported);
  CHECK(forward_baseline(mean, f, 4).tokens == translate(mean, f, 4).tokens);
  CHECK(code_of([&] { translate(gru, random_features(3, 2, rng), 4); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { translate(gru, f, 0); }) == ErrorCode::kInvalidArgument);

  const auto tr = forward(gru, f.frames, DecodePolicy::greedy(3), false);
  auto g = gru.zeros_like();
  CHECK(code_of([&] { backward(gru, tr, std::vector<Vec>(tr.steps(), Vec(7, 0.0)), g, nullptr); }) ==
        ErrorCode::kInvalidState);
}

TEST_CASE("encode then decode equals translate") {
  std::mt19937_64 rng(6);
  const auto f = random_features(5, 4, rng);
  for (Variant v : {Variant::kLstmEd, Variant::kGruAa}) {
    const auto m = scaled(Seq2SeqModel::create(v, small_dims(), 2), 2.0);
    CHECK(decode_greedy(m, encode(m, f), 7).tokens == translate(m, f, 7).tokens);
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  for (Variant v : kAll) {
    const auto m = Seq2SeqModel::create(v, small_dims(v == Variant::kLstmMean ? 2 : 1), 4, 0xabc);
    std::stringstream ss;
    save_model(m, ss);
    const auto back = load_model(ss);
    CHECK(back == m);
    CHECK(back.vocab_hash == 0xabc);
    CHECK(back.variant == v);

    std::string bytes = ss.str();
    std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
    CHECK(code_of([&] { load_model(truncated); }) == ErrorCode::kParse);
    bytes[0] = 'X';
    std::stringstream bad_magic(bytes);
    CHECK(code_of([&] { load_model(bad_magic); }) == ErrorCode::kParse);
  }
  CHECK(code_of([] { load_model(std::filesystem::path("/nonexistent/model.ckpt")); }) == ErrorCode::kIo);
}

TEST_CASE("sequence loss gradients match central differences over many seeds") {
  // The absolute allowance is the finite-difference noise floor at eps 1e-5:
  // about one ulp of the loss divided by 2 * eps.
  constexpr double eps = 1e-5, rel_tol = 1e-4, abs_floor = 5e-10;
  const TokenSeq target{2, 0, 1};
  const std::vector<bool> forcing{true, true, false, true};
  for (Variant v : kAll) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      CAPTURE(variant_name(v));
      CAPTURE(seed);
      const auto dims = small_dims(v == Variant::kLstmMean || v == Variant::kLstmSs ? 2 : 1);
      auto m = Seq2SeqModel::create(v, dims, seed);
      std::mt19937_64 rng(seed * 31);
      const auto f = random_features(4, dims.input_dim, rng);
      auto g = m.zeros_like();
      sequence_loss(m, f.frames, target, forcing, &g);
      const Vec analytic = g.flatten();
      Vec theta = m.flatten();
      std::size_t bad = 0;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const double keep = theta[k];
        theta[k] = keep + eps;
        m.assign(theta);
        const double up = sequence_loss(m, f.frames, target, forcing, nullptr).loss;
        theta[k] = keep - eps;
        m.assign(theta);
        const double down = sequence_loss(m, f.frames, target, forcing, nullptr).loss;
        theta[k] = keep;
        const double numeric = (up - down) / (2.0 * eps);
        const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
        if (std::abs(numeric - analytic[k]) > rel_tol * scale + abs_floor) ++bad;
      }
      m.assign(theta);
      CHECK(bad == 0);
    }
  }
}

TEST_CASE("input gradients match central differences") {
  constexpr double eps = 1e-5;
  const TokenSeq target{1, 3};
  for (Variant v : kAll) {
    CAPTURE(variant_name(v));
    const auto dims = small_dims(v == Variant::kLstmMean || v == Variant::kLstmSs ? 2 : 1);
    const auto m = scaled(Seq2SeqModel::create(v, dims, 12), 2.0);
    std::mt19937_64 rng(12);
    auto f = random_features(3, dims.input_dim, rng);
    const auto policy = DecodePolicy::teacher(target, {true, true, true});
    auto loss_of = [&](const std::vector<Vec>& in, std::vector<Vec>* dscores) {
      const auto tr = forward(m, in, policy, dscores != nullptr);
      double loss = 0.0;
      for (std::size_t q = 0; q < tr.steps(); ++q) {
        const Token want = q < target.size() ? target[q] : m.dims.eos();
        loss += cross_entropy(tr.scores[q], want);
        if (dscores) dscores->push_back(cross_entropy_grad(tr.scores[q], want));
      }
      return std::pair{loss, tr};
    };
    std::vector<Vec> ds;
    auto [loss, tr] = loss_of(f.frames, &ds);
    auto g = m.zeros_like();
    std::vector<Vec> dinputs;
    backward(m, tr, ds, g, &dinputs);
    double worst = 0.0;
    for (std::size_t t = 0; t < f.frames.size(); ++t) {
      for (std::size_t k = 0; k < dims.input_dim; ++k) {
        auto in = f.frames;
        in[t][k] += eps;
        const double up = loss_of(in, nullptr).first;
        in[t][k] -= 2 * eps;
        const double down = loss_of(in, nullptr).first;
        const double numeric = (up - down) / (2 * eps);
        const double a = dinputs[t][k];
        worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8}));
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("mean pooling of a constant sequence returns the constant") {
  const auto m = Seq2SeqModel::create(Variant::kLstmMean, small_dims(2), 3);
  const std::vector<Vec> frames(5, Vec{0.5, -1.0, 2.0, 0.25});
  const auto tr = forward(m, frames, DecodePolicy::greedy(3), false);
  REQUIRE(tr.mean_input.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(tr.mean_input[k] == doctest::Approx(frames[0][k]).epsilon(1e-15));
}
