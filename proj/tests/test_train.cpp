// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "core/train.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace actseq;
using actseq::testing::code_of;

namespace {

Dataset tiny_data(std::size_t count, std::size_t first = 0) {
  SyntheticSpec spec;
  spec.num_classes = 3;
  spec.input_dim = 4;
  spec.min_actions = 1;
  spec.max_actions = 3;
  spec.min_duration = 2;
  spec.max_duration = 3;
  spec.noise_sigma = 0.3;
  return generate(spec, count, first);
}

TrainingConfig tiny_config() {
  TrainingConfig c;
  c.hidden_dim = 8;
  c.embedding_dim = 4;
  c.batch_size = 4;
  c.epochs = 3;
  c.learning_rate = 1e-2;
  return c;
}

}  // namespace

TEST_CASE("config presets") {
  const auto p = TrainingConfig::full();
  CHECK(p.hidden_dim == 512);
  CHECK(p.embedding_dim == 512);
  CHECK(p.batch_size == 32);
  CHECK(p.epochs == 10);
  CHECK(p.learning_rate == 1e-3);
  CHECK(p.teacher_forcing_prob == 0.5);
  CHECK(p.patience == 3);
  CHECK(p.clip_norm == 5.0);
  const auto d = TrainingConfig::desk();
  CHECK(d.hidden_dim == 64);
  CHECK(d.embedding_dim == 32);
  CHECK(d.batch_size == 8);
  CHECK(d.epochs == 20);

  auto bad = p;
  bad.teacher_forcing_prob = 1.5;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidArgument);
  bad = p;
  bad.batch_size = 0;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("batches cover every example once, bucketed and padded") {
  const auto data = tiny_data(23);
  const auto ex = make_examples(data, TargetKind::kActions);
  std::mt19937_64 rng(1);
  const Token pad = 5;
  const auto batches = make_batches(ex, 4, pad, rng);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.indices.size() <= 4);
    REQUIRE(b.padded_targets.size() == b.indices.size());
    const std::size_t width = b.padded_targets[0].size();
    for (std::size_t k = 0; k < b.indices.size(); ++k) {
      seen.insert(b.indices[k]);
      CHECK(b.padded_targets[k].size() == width);
      CHECK(unpad(b.padded_targets[k], pad) == ex[b.indices[k]].target);
    }
  }
  CHECK(seen.size() == 23);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 23);

  // Length buckets: the length ranges of two batches overlap at most at an end.
  auto range = [&](const Batch& b) {
    std::size_t lo = SIZE_MAX, hi = 0;
    for (auto i : b.indices) {
      lo = std::min(lo, ex[i].target.size());
      hi = std::max(hi, ex[i].target.size());
    }
    return std::pair{lo, hi};
  };
  for (const auto& x : batches) {
    for (const auto& y : batches) {
      if (&x == &y) continue;
      const auto [xl, xh] = range(x);
      const auto [yl, yh] = range(y);
      CHECK((xh <= yl || yh <= xl));
    }
  }

  std::mt19937_64 again(1);
  const auto repeat = make_batches(ex, 4, pad, again);
  REQUIRE(repeat.size() == batches.size());
  for (std::size_t i = 0; i < batches.size(); ++i) CHECK(repeat[i].indices == batches[i].indices);
}

TEST_CASE("teacher forcing draws") {
  std::mt19937_64 rng(3);
  std::size_t forced = 0, sequences = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto f = draw_forcing(5, 0.5, ForcingGranularity::kPerSequence, rng);
    CHECK(std::all_of(f.begin(), f.end(), [&](bool b) { return b == f[0]; }));
    forced += f[0];
    ++sequences;
  }
  // Binomial(2000, 0.5) within 4 standard deviations.
  CHECK(std::abs(static_cast<double>(forced) - 1000.0) <= 4.0 * std::sqrt(500.0));

  bool mixed = false;
  for (int i = 0; i < 50; ++i) {
    const auto f = draw_forcing(6, 0.5, ForcingGranularity::kPerStep, rng);
    mixed = mixed || std::any_of(f.begin(), f.end(), [&](bool b) { return b != f[0]; });
  }
  CHECK(mixed);
  const auto always = draw_forcing(4, 1.0, ForcingGranularity::kPerStep, rng);
  CHECK(std::all_of(always.begin(), always.end(), [](bool b) { return b; }));
}

TEST_CASE("adam update against a hand-written recurrence") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, e = 1e-8;
  Vec theta{1.0, -2.0};
  Adam adam(2, lr);
  double m[2] = {0, 0}, v[2] = {0, 0}, want[2] = {1.0, -2.0};
  const Vec grads[3] = {{0.5, -1.0}, {0.2, 0.3}, {-0.4, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    adam.step(theta, grads[t - 1]);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      want[i] -= lr * mh / (std::sqrt(vh) + e);
    }
    CHECK(theta[0] == doctest::Approx(want[0]).epsilon(1e-14));
    CHECK(theta[1] == doctest::Approx(want[1]).epsilon(1e-14));
  }
  // First step moves each coordinate by about lr in the sign of the gradient.
  Vec fresh{0.0};
  Adam one(1, 0.01);
  one.step(fresh, Vec{123.0});
  CHECK(fresh[0] == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(code_of([&] { one.step(fresh, Vec{1.0, 2.0}); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("global norm clipping") {
  Vec g{3.0, 4.0};
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g == Vec{3.0, 4.0});
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));
}

TEST_CASE("uniform scores give (p + 1) log(C + 3)") {
  const auto data = tiny_data(1);
  ModelDims d;
  d.input_dim = 4;
  d.hidden_dim = 5;
  d.embed_dim = 3;
  d.token_count = 6;
  for (Variant v : {Variant::kLstmMean, Variant::kLstmSs, Variant::kLstmEd, Variant::kGruAa}) {
    auto m = Seq2SeqModel::create(v, d, 1);
    std::fill(m.output_w.values().begin(), m.output_w.values().end(), 0.0);
    std::fill(m.output_b.values().begin(), m.output_b.values().end(), 0.0);
    const TokenSeq target{0, 2, 1};
    const auto r = sequence_loss(m, data.samples[0].features.frames, target, {true, true, true, true}, nullptr);
    CHECK(r.steps == 4);
    CHECK(r.loss == doctest::Approx(4.0 * std::log(6.0)).epsilon(1e-12));
    const auto empty = sequence_loss(m, data.samples[0].features.frames, TokenSeq{}, {true}, nullptr);
    CHECK(empty.steps == 1);
    CHECK(empty.loss == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  }
}

TEST_CASE("loss log format") {
  const std::vector<EpochLog> log{{0, 1.5, 2.25, 0.0}, {1, 0.5, 0.75, 50.0}};
  CHECK(format_loss_log(log) == "epoch,train_loss,val_loss,val_bleu1\n0,1.5,2.25,0\n1,0.5,0.75,50\n");
}

TEST_CASE("decode cap default") {
  const auto data = tiny_data(30);
  const auto ex = make_examples(data, TargetKind::kActions);
  std::size_t longest = 0;
  for (const auto& s : data.samples) longest = std::max(longest, s.actions.size());
  CHECK(default_max_decode_len(ex) == 2 * (longest + 1));
}

TEST_CASE("training lowers the loss and is deterministic") {
  const auto tr_data = tiny_data(24);
  const auto va_data = tiny_data(8, 100);
  const auto tr = make_examples(tr_data, TargetKind::kActions);
  const auto va = make_examples(va_data, TargetKind::kActions);
  for (Variant v : {Variant::kLstmEd, Variant::kGruAa}) {
    CAPTURE(variant_name(v));
    auto cfg = tiny_config();
    const auto m0 = create_model(v, 4, tr_data.actions.token_count(), cfg);
    std::vector<std::size_t> seen;
    const auto a = train(m0, tr, va, cfg, [&](const EpochLog& e) { seen.push_back(e.epoch); });
    REQUIRE(a.log.size() >= 2);
    CHECK(a.log.front().epoch == 0);
    CHECK(seen.front() == 0);
    CHECK(seen.size() == a.log.size());
    CHECK(a.log.back().val_loss < a.log.front().val_loss);

    const auto b = train(m0, tr, va, cfg);
    CHECK(format_loss_log(a.log) == format_loss_log(b.log));
    CHECK(a.model == b.model);

    cfg.workers = 3;
    const auto c = train(m0, tr, va, cfg);
    CHECK(format_loss_log(a.log) == format_loss_log(c.log));
    CHECK(a.model == c.model);

    // The returned model is the best-validation checkpoint.
    double best = a.log.front().val_loss;
    for (const auto& e : a.log) best = std::min(best, e.val_loss);
    CHECK(a.log[a.best_epoch].val_loss == best);
    CHECK(evaluate_loss(a.model, va) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("zero learning rate keeps the model and stops after the patience window") {
  const auto tr_data = tiny_data(12);
  const auto va_data = tiny_data(4, 50);
  const auto tr = make_examples(tr_data, TargetKind::kActions);
  const auto va = make_examples(va_data, TargetKind::kActions);
  auto cfg = tiny_config();
  cfg.learning_rate = 0.0;
  cfg.epochs = 10;
  cfg.patience = 2;
  const auto m0 = create_model(Variant::kGruAa, 4, tr_data.actions.token_count(), cfg);
  const auto r = train(m0, tr, va, cfg);
  CHECK(r.model == m0);
  CHECK(r.best_epoch == 0);
  CHECK(r.log.size() == 3);
}

TEST_CASE("training input errors") {
  const auto data = tiny_data(4);
  const auto ex = make_examples(data, TargetKind::kActions);
  const auto cfg = tiny_config();
  const auto m = create_model(Variant::kGruAa, 4, data.actions.token_count(), cfg);
  CHECK(code_of([&] { train(m, {}, ex, cfg); }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] { train(m, ex, {}, cfg); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("examples borrow features and pick the target") {
  const auto data = tiny_data(3);
  const auto acts = make_examples(data, TargetKind::kActions);
  const auto caps = make_examples(data, TargetKind::kCaption);
  CHECK(acts[1].inputs == &data.samples[1].features.frames);
  CHECK(acts[1].target == data.samples[1].actions);
  CHECK(caps[2].target == data.samples[2].caption);
}
