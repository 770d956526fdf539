// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "core/cells.hpp"
#include "core/error.hpp"
#include "doctest.h"

using namespace actseq;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Vec rand_vec(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vec v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Row `r` of W times x, written out.
double row_dot(const Matrix& w, std::size_t r, const Vec& x) {
  double s = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) s += w(r, c) * x[c];
  return s;
}

struct LstmOut {
  Vec c, h;
};

LstmOut lstm_oracle(const Vec& x, const Vec& h, const Vec& c, const LstmCellParams& p) {
  const std::size_t n = h.size();
  LstmOut o{Vec(n), Vec(n)};
  for (std::size_t k = 0; k < n; ++k) {
    auto pre = [&](std::size_t gate) {
      const std::size_t r = gate * n + k;
      return row_dot(p.w_input, r, x) + row_dot(p.w_recurrent, r, h) + p.bias(r, 0);
    };
    const double i = sig(pre(0)), f = sig(pre(1)), g = std::tanh(pre(2)), out = sig(pre(3));
    o.c[k] = f * c[k] + i * g;
    o.h[k] = out * std::tanh(o.c[k]);
  }
  return o;
}

Vec gru_oracle(const Vec& x, const Vec& h, const GruCellParams& p) {
  const std::size_t n = h.size();
  Vec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto in = [&](std::size_t gate) { return row_dot(p.w_input, gate * n + k, x) + p.bias_input(gate * n + k, 0); };
    auto rec = [&](std::size_t gate) {
      return row_dot(p.w_recurrent, gate * n + k, h) + p.bias_recurrent(gate * n + k, 0);
    };
    const double z = sig(in(0) + rec(0));
    const double r = sig(in(1) + rec(1));
    const double cand = std::tanh(in(2) + r * rec(2));
    out[k] = (1.0 - z) * cand + z * h[k];
  }
  return out;
}

template <class P>
Vec flat(const P& p) {
  Vec v;
  P::each(p, [&](auto, const Matrix& m) { v.insert(v.end(), m.values().begin(), m.values().end()); });
  return v;
}

template <class P>
void unflat(P& p, ConstSpan v) {
  std::size_t off = 0;
  P::each(p, [&](auto, Matrix& m) {
    for (double& x : m.values()) x = v[off++];
  });
}

// Chain of `steps` cells with a softmax readout on every h; returns the max
// relative error of the full parameter gradient.
double lstm_chain_check(std::size_t dx, std::size_t dh, std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto init = LstmCellParams::random(dx, dh, rng);
  std::vector<Vec> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(rand_vec(dx, rng));
  Matrix readout(3, dh);
  fill_uniform(readout, 1.0, rng);
  LossFn fn = [&](ConstSpan th, MutSpan grad) {
    auto p = LstmCellParams::zeros(dx, dh);
    unflat(p, th);
    Vec h(dh, 0.0), c(dh, 0.0);
    std::vector<LstmCache> caches(steps);
    std::vector<Vec> dscore(steps);
    double loss = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      auto s = lstm_step(xs[t], h, c, p, &caches[t]);
      h = s.h;
      c = s.c;
      Vec score(3, 0.0);
      gemv_acc(readout, h, score);
      loss += cross_entropy(score, t % 3);
      dscore[t] = cross_entropy_grad(score, t % 3);
    }
    if (grad.empty()) return loss;
    auto g = LstmCellParams::zeros(dx, dh);
    Vec dhn(dh, 0.0), dcn(dh, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
      gemv_t_acc(readout, dscore[t], dhn);
      auto in = lstm_step_backward(caches[t], p, dhn, dcn, g);
      dhn = in.dh_prev;
      dcn = in.dc_prev;
    }
    const Vec f = flat(g);
    std::copy(f.begin(), f.end(), grad.begin());
    return loss;
  };
  return grad_check(fn, flat(init), 1e-5).max_rel_error;
}

double gru_chain_check(std::size_t dx, std::size_t dh, std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto init = GruCellParams::random(dx, dh, rng);
  std::vector<Vec> xs;
  for (std::size_t t = 0; t < steps; ++t) xs.push_back(rand_vec(dx, rng));
  Matrix readout(3, dh);
  fill_uniform(readout, 1.0, rng);
  const Vec h0 = rand_vec(dh, rng, 0.5);
  LossFn fn = [&](ConstSpan th, MutSpan grad) {
    auto p = GruCellParams::zeros(dx, dh);
    unflat(p, th);
    Vec h = h0;
    std::vector<GruCache> caches(steps);
    std::vector<Vec> dscore(steps);
    double loss = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      h = gru_step(xs[t], h, p, &caches[t]);
      Vec score(3, 0.0);
      gemv_acc(readout, h, score);
      loss += cross_entropy(score, (t + 1) % 3);
      dscore[t] = cross_entropy_grad(score, (t + 1) % 3);
    }
    if (grad.empty()) return loss;
    auto g = GruCellParams::zeros(dx, dh);
    Vec dhn(dh, 0.0);
    for (std::size_t t = steps; t-- > 0;) {
      gemv_t_acc(readout, dscore[t], dhn);
      dhn = gru_step_backward(caches[t], p, dhn, g).dh_prev;
    }
    const Vec f = flat(g);
    std::copy(f.begin(), f.end(), grad.begin());
    return loss;
  };
  return grad_check(fn, flat(init), 1e-5).max_rel_error;
}

}  // namespace

TEST_CASE("lstm zero-parameter algebra") {
  const auto p = LstmCellParams::zeros(3, 2);
  auto s = lstm_step(Vec{0, 0, 0}, Vec{0, 0}, Vec{0, 0}, p);
  CHECK(s.c == Vec{0, 0});
  CHECK(s.h == Vec{0, 0});
  s = lstm_step(Vec{1, -2, 3}, Vec{0.3, 0.1}, Vec{0.8, -0.4}, p);
  CHECK(s.c[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.c[1] == doctest::Approx(-0.2).epsilon(1e-15));
}

TEST_CASE("gru zero-parameter algebra") {
  const auto p = GruCellParams::zeros(3, 2);
  CHECK(gru_step(Vec{0, 0, 0}, Vec{0.6, -1.0}, p) == Vec{0.3, -0.5});
  CHECK(gru_step(Vec{1, 2, 3}, Vec{0, 0}, p) == Vec{0, 0});
}

TEST_CASE("lstm and gru forward match straight-line oracles") {
  std::mt19937_64 rng(21);
  for (std::size_t dx : {1, 3, 8}) {
    for (std::size_t dh : {1, 3, 8}) {
      const auto lp = LstmCellParams::random(dx, dh, rng);
      const Vec x = rand_vec(dx, rng), h = rand_vec(dh, rng), c = rand_vec(dh, rng);
      const auto got = lstm_step(x, h, c, lp);
      const auto want = lstm_oracle(x, h, c, lp);
      for (std::size_t k = 0; k < dh; ++k) {
        CHECK(got.c[k] == doctest::Approx(want.c[k]).epsilon(1e-13));
        CHECK(got.h[k] == doctest::Approx(want.h[k]).epsilon(1e-13));
        CHECK(std::abs(got.h[k]) < 1.0);
      }
      const auto gp = GruCellParams::random(dx, dh, rng);
      const Vec gh = gru_step(x, h, gp);
      const Vec gw = gru_oracle(x, h, gp);
      for (std::size_t k = 0; k < dh; ++k) {
        CHECK(gh[k] == doctest::Approx(gw[k]).epsilon(1e-13));
        CHECK(std::abs(gh[k]) <= std::max(std::abs(h[k]), 1.0));
      }
    }
  }
}

TEST_CASE("cell forward is deterministic") {
  std::mt19937_64 rng(4);
  const auto p = GruCellParams::random(4, 5, rng);
  const Vec x = rand_vec(4, rng), h = rand_vec(5, rng);
  CHECK(gru_step(x, h, p) == gru_step(x, h, p));
}

TEST_CASE("backward through single steps and chains") {
  for (std::size_t dx : {1, 3, 8}) {
    for (std::size_t dh : {1, 3, 8}) {
      CAPTURE(dx);
      CAPTURE(dh);
      CHECK(lstm_chain_check(dx, dh, 1, 100 + dx * 10 + dh) < 1e-4);
      CHECK(gru_chain_check(dx, dh, 1, 200 + dx * 10 + dh) < 1e-4);
    }
  }
  CHECK(lstm_chain_check(3, 4, 10, 7) < 1e-4);
  CHECK(gru_chain_check(3, 4, 10, 7) < 1e-4);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  std::mt19937_64 rng(8);
  const auto lp = LstmCellParams::random(3, 4, rng);
  LstmCache lc;
  lstm_step(rand_vec(3, rng), rand_vec(4, rng), rand_vec(4, rng), lp, &lc);
  auto lg = LstmCellParams::zeros(3, 4);
  lstm_step_backward(lc, lp, Vec(4, 0.0), Vec(4, 0.0), lg);
  for (double v : flat(lg)) CHECK(v == 0.0);

  const auto gp = GruCellParams::random(3, 4, rng);
  GruCache gc;
  gru_step(rand_vec(3, rng), rand_vec(4, rng), gp, &gc);
  auto gg = GruCellParams::zeros(3, 4);
  gru_step_backward(gc, gp, Vec(4, 0.0), gg);
  for (double v : flat(gg)) CHECK(v == 0.0);
}

TEST_CASE("cell errors") {
  const auto lp = LstmCellParams::zeros(3, 2);
  CHECK_THROWS_AS(lstm_step(Vec{1, 2}, Vec{0, 0}, Vec{0, 0}, lp), Error);
  const auto gp = GruCellParams::zeros(3, 2);
  CHECK_THROWS_AS(gru_step(Vec{1, 2, 3}, Vec{0}, gp), Error);
  try {
    gru_step(Vec{1, 2, 3}, Vec{0}, gp);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidArgument);
  }

  auto grads = GruCellParams::zeros(3, 2);
  try {
    gru_step_backward(GruCache{}, gp, Vec{1, 1}, grads);
    FAIL("missing cache accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidState);
  }
  auto lgrads = LstmCellParams::zeros(3, 2);
  try {
    lstm_step_backward(LstmCache{}, lp, Vec{1, 1}, Vec{0, 0}, lgrads);
    FAIL("missing cache accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidState);
  }
}
