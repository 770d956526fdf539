// SPDX-License-Identifier: Apache-2.0
#include "core/gradcheck_suite.hpp"

#include <algorithm>
#include <random>

#include "core/caption.hpp"
#include "core/cells.hpp"
#include "core/train.hpp"
#include "core/translate.hpp"

namespace actseq {
namespace {

constexpr std::size_t kSteps = 4;
constexpr std::size_t kInput = 4;
constexpr std::size_t kHidden = 4;

std::vector<Vec> random_frames(std::size_t t, std::size_t d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec> out(t, Vec(d));
  for (auto& f : out)
    for (double& v : f) v = u(rng);
  return out;
}

// Unit-scale weights rather than the training init: at 1/sqrt(H) scale the
// attention is nearly uniform and its gradient is second-order small, which
// leaves coordinates below the finite-difference noise floor.
void randomize(Seq2SeqModel& m, std::mt19937_64& rng) {
  Seq2SeqModel::each(m, [&](const std::string&, Matrix& w) { fill_uniform(w, 1.0, rng); });
}

Vec random_vec(std::size_t n, std::mt19937_64& rng) {
  return random_frames(1, n, rng).front();
}

// Parameter vector layout for the cell checks: weights, then x_1..x_T,
// then the initial state(s).
template <class Params>
Vec pack(const Params& p, const std::vector<Vec>& xs, std::initializer_list<const Vec*> extra) {
  Vec flat;
  Params::each(p, [&](auto, const Matrix& m) {
    flat.insert(flat.end(), m.values().begin(), m.values().end());
  });
  for (const auto& x : xs) flat.insert(flat.end(), x.begin(), x.end());
  for (const Vec* v : extra) flat.insert(flat.end(), v->begin(), v->end());
  return flat;
}

template <class Params>
std::size_t unpack_params(Params& p, ConstSpan flat) {
  std::size_t off = 0;
  Params::each(p, [&](auto, Matrix& m) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m.values().size(), m.values().begin());
    off += m.values().size();
  });
  return off;
}

Vec take(ConstSpan flat, std::size_t& off, std::size_t n) {
  Vec v(flat.begin() + static_cast<std::ptrdiff_t>(off), flat.begin() + static_cast<std::ptrdiff_t>(off + n));
  off += n;
  return v;
}

void put(MutSpan flat, std::size_t& off, const Vec& v) {
  std::copy(v.begin(), v.end(), flat.begin() + static_cast<std::ptrdiff_t>(off));
  off += v.size();
}

template <class Params>
void put_params(MutSpan flat, std::size_t& off, const Params& g) {
  Params::each(g, [&](auto, const Matrix& m) {
    std::copy(m.values().begin(), m.values().end(), flat.begin() + static_cast<std::ptrdiff_t>(off));
    off += m.values().size();
  });
}

// Unrolled cell with loss sum_t <r_t, h_t> (+ <s, c_T> for the LSTM).
GradCheckCase lstm_cell_case(std::mt19937_64& rng, double eps) {
  const auto init = LstmCellParams::random(kInput, kHidden, rng);
  const auto xs = random_frames(kSteps, kInput, rng);
  const Vec h0 = random_vec(kHidden, rng), c0 = random_vec(kHidden, rng);
  const auto rs = random_frames(kSteps, kHidden, rng);
  const Vec s = random_vec(kHidden, rng);

  LossFn fn = [&](ConstSpan theta, MutSpan grad) {
    LstmCellParams p = LstmCellParams::zeros(kInput, kHidden);
    std::size_t off = unpack_params(p, theta);
    std::vector<Vec> x(kSteps);
    for (auto& v : x) v = take(theta, off, kInput);
    Vec h = take(theta, off, kHidden), c = take(theta, off, kHidden);
    std::vector<LstmCache> caches(kSteps);
    double loss = 0.0;
    for (std::size_t t = 0; t < kSteps; ++t) {
      auto st = lstm_step(x[t], h, c, p, &caches[t]);
      h = std::move(st.h);
      c = std::move(st.c);
      loss += dot(rs[t], h);
    }
    loss += dot(s, c);
    if (grad.empty()) return loss;

    LstmCellParams g = LstmCellParams::zeros(kInput, kHidden);
    std::vector<Vec> dx(kSteps);
    Vec dh(kHidden, 0.0), dc = s;
    for (std::size_t t = kSteps; t-- > 0;) {
      axpy(1.0, rs[t], dh);
      auto in = lstm_step_backward(caches[t], p, dh, dc, g);
      dx[t] = std::move(in.dx);
      dh = std::move(in.dh_prev);
      dc = std::move(in.dc_prev);
    }
    std::size_t w = 0;
    put_params(grad, w, g);
    for (const auto& v : dx) put(grad, w, v);
    put(grad, w, dh);
    put(grad, w, dc);
    return loss;
  };
  const Vec theta = pack(init, xs, {&h0, &c0});
  return {"lstm-cell", theta.size(), grad_check(fn, theta, eps)};
}

GradCheckCase gru_cell_case(std::mt19937_64& rng, double eps) {
  const auto init = GruCellParams::random(kInput, kHidden, rng);
  const auto xs = random_frames(kSteps, kInput, rng);
  const Vec h0 = random_vec(kHidden, rng);
  const auto rs = random_frames(kSteps, kHidden, rng);

  LossFn fn = [&](ConstSpan theta, MutSpan grad) {
    GruCellParams p = GruCellParams::zeros(kInput, kHidden);
    std::size_t off = unpack_params(p, theta);
    std::vector<Vec> x(kSteps);
    for (auto& v : x) v = take(theta, off, kInput);
    Vec h = take(theta, off, kHidden);
    std::vector<GruCache> caches(kSteps);
    double loss = 0.0;
    for (std::size_t t = 0; t < kSteps; ++t) {
      h = gru_step(x[t], h, p, &caches[t]);
      loss += dot(rs[t], h);
    }
    if (grad.empty()) return loss;

    GruCellParams g = GruCellParams::zeros(kInput, kHidden);
    std::vector<Vec> dx(kSteps);
    Vec dh(kHidden, 0.0);
    for (std::size_t t = kSteps; t-- > 0;) {
      axpy(1.0, rs[t], dh);
      auto in = gru_step_backward(caches[t], p, dh, g);
      dx[t] = std::move(in.dx);
      dh = std::move(in.dh_prev);
    }
    std::size_t w = 0;
    put_params(grad, w, g);
    for (const auto& v : dx) put(grad, w, v);
    put(grad, w, dh);
    return loss;
  };
  const Vec theta = pack(init, xs, {&h0});
  return {"gru-cell", theta.size(), grad_check(fn, theta, eps)};
}

// Full sequence loss with mixed teacher forcing so both the ground-truth and
// the free-running input paths are exercised.
GradCheckCase model_case(Variant variant, std::mt19937_64& rng, double eps) {
  ModelDims dims;
  dims.input_dim = kInput;
  dims.hidden_dim = kHidden;
  dims.embed_dim = 3;
  dims.token_count = 3 + 3;
  dims.layers = (variant == Variant::kLstmMean || variant == Variant::kLstmSs) ? 2 : 1;
  auto model = Seq2SeqModel::create(variant, dims, rng());
  randomize(model, rng);
  const auto frames = random_frames(kSteps, kInput, rng);
  const TokenSeq target = {2, 0, 1};
  const std::vector<bool> forcing = {true, true, false, true};

  LossFn fn = [&](ConstSpan theta, MutSpan grad) {
    Seq2SeqModel m = model;
    m.assign(theta);
    if (grad.empty()) return sequence_loss(m, frames, target, forcing, nullptr).loss;
    Seq2SeqModel g = m.zeros_like();
    const double loss = sequence_loss(m, frames, target, forcing, &g).loss;
    const Vec flat = g.flatten();
    std::copy(flat.begin(), flat.end(), grad.begin());
    return loss;
  };
  const Vec theta = model.flatten();
  return {std::string(variant_name(variant)) + "-loss", theta.size(), grad_check(fn, theta, eps)};
}

GradCheckCase pipeline_case(bool normalize, std::mt19937_64& rng, double eps) {
  TrainingConfig cfg;
  cfg.hidden_dim = kHidden;
  cfg.embedding_dim = 3;
  cfg.seed = rng();
  // 3 actions and 5 words, each plus the three reserved tokens.
  auto pipeline = create_pipeline(kInput, 6, 8, cfg, 3, 5);
  pipeline.normalize_scores = normalize;
  randomize(pipeline.stage1, rng);
  randomize(pipeline.stage2, rng);
  FeatureSequence features{"gc", random_frames(kSteps, kInput, rng)};
  const TokenSeq words = {0, 1, 3, 4};
  const std::vector<bool> forcing = {true, true, false, true, true};
  const std::size_t n1 = pipeline.stage1.parameter_count();

  LossFn fn = [&](ConstSpan theta, MutSpan grad) {
    CaptionPipeline p = pipeline;
    p.stage1.assign(theta.first(n1));
    p.stage2.assign(theta.subspan(n1));
    if (grad.empty()) return joint_loss(p, features, words, forcing, nullptr).loss;
    PipelineGrads g{p.stage1.zeros_like(), p.stage2.zeros_like()};
    const double loss = joint_loss(p, features, words, forcing, &g).loss;
    const Vec a = g.stage1.flatten(), b = g.stage2.flatten();
    std::copy(a.begin(), a.end(), grad.begin());
    std::copy(b.begin(), b.end(), grad.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return loss;
  };
  Vec theta = pipeline.stage1.flatten();
  const Vec rest = pipeline.stage2.flatten();
  theta.insert(theta.end(), rest.begin(), rest.end());
  return {normalize ? "caption-pipeline-softmax" : "caption-pipeline", theta.size(),
          grad_check(fn, theta, eps)};
}

}  // namespace

std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed, double eps) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckCase> out;
  out.push_back(lstm_cell_case(rng, eps));
  out.push_back(gru_cell_case(rng, eps));
  for (Variant v : {Variant::kLstmMean, Variant::kLstmSs, Variant::kLstmEd, Variant::kGruAa}) {
    out.push_back(model_case(v, rng, eps));
  }
  out.push_back(pipeline_case(false, rng, eps));
  out.push_back(pipeline_case(true, rng, eps));
  return out;
}

}  // namespace actseq
