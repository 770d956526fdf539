// SPDX-License-Identifier: Apache-2.0
#include "core/cells.hpp"

#include <cmath>
#include <string>

namespace actseq {

namespace {

void check_dims(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    fail(ErrorCode::kInvalidArgument, std::string(what) + ": expected dimension " +
                                          std::to_string(want) + ", got " + std::to_string(got));
  }
}

double init_scale(std::size_t hidden_dim) { return 1.0 / std::sqrt(static_cast<double>(hidden_dim)); }

}  // namespace

LstmCellParams LstmCellParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Matrix(4 * hidden_dim, input_dim), Matrix(4 * hidden_dim, hidden_dim),
          Matrix(4 * hidden_dim, 1)};
}

LstmCellParams LstmCellParams::random(std::size_t input_dim, std::size_t hidden_dim,
                                      std::mt19937_64& rng) {
  auto p = zeros(input_dim, hidden_dim);
  const double s = init_scale(hidden_dim);
  each(p, [&](std::string_view, Matrix& m) { fill_uniform(m, s, rng); });
  return p;
}

GruCellParams GruCellParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {Matrix(3 * hidden_dim, input_dim), Matrix(3 * hidden_dim, hidden_dim),
          Matrix(3 * hidden_dim, 1), Matrix(3 * hidden_dim, 1)};
}

GruCellParams GruCellParams::random(std::size_t input_dim, std::size_t hidden_dim,
                                    std::mt19937_64& rng) {
  auto p = zeros(input_dim, hidden_dim);
  const double s = init_scale(hidden_dim);
  each(p, [&](std::string_view, Matrix& m) { fill_uniform(m, s, rng); });
  return p;
}

LstmState lstm_step(ConstSpan x, ConstSpan h_prev, ConstSpan c_prev, const LstmCellParams& p,
                    LstmCache* cache) {
  const std::size_t h = p.hidden_dim();
  check_dims(x.size(), p.input_dim(), "lstm_step input");
  check_dims(h_prev.size(), h, "lstm_step hidden state");
  check_dims(c_prev.size(), h, "lstm_step cell state");

  Vec a(p.bias.values().begin(), p.bias.values().end());
  gemv_acc(p.w_input, x, a);
  gemv_acc(p.w_recurrent, h_prev, a);
  for (std::size_t k = 0; k < h; ++k) {
    a[k] = sigmoid(a[k]);
    a[h + k] = sigmoid(a[h + k]);
    a[2 * h + k] = std::tanh(a[2 * h + k]);
    a[3 * h + k] = sigmoid(a[3 * h + k]);
  }
  LstmState out{Vec(h), Vec(h)};
  Vec tanh_c(h);
  for (std::size_t k = 0; k < h; ++k) {
    out.c[k] = a[h + k] * c_prev[k] + a[k] * a[2 * h + k];
    tanh_c[k] = std::tanh(out.c[k]);
    out.h[k] = a[3 * h + k] * tanh_c[k];
  }
  if (cache) {
    cache->valid = true;
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->gates = std::move(a);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

StepInputGrads lstm_step_backward(const LstmCache& cache, const LstmCellParams& p, ConstSpan dh,
                                  ConstSpan dc, LstmCellParams& grads) {
  if (!cache.valid) fail(ErrorCode::kInvalidState, "lstm_step_backward: missing forward cache");
  const std::size_t h = p.hidden_dim();
  check_dims(dh.size(), h, "lstm_step_backward dh");
  check_dims(dc.size(), h, "lstm_step_backward dc");

  const Vec& g = cache.gates;
  Vec da(4 * h);
  StepInputGrads out{Vec(p.input_dim(), 0.0), Vec(h, 0.0), Vec(h)};
  for (std::size_t k = 0; k < h; ++k) {
    const double i = g[k], f = g[h + k], cand = g[2 * h + k], o = g[3 * h + k];
    const double tc = cache.tanh_c[k];
    const double dcell = dc[k] + dh[k] * o * (1.0 - tc * tc);
    da[k] = dcell * cand * i * (1.0 - i);
    da[h + k] = dcell * cache.c_prev[k] * f * (1.0 - f);
    da[2 * h + k] = dcell * i * (1.0 - cand * cand);
    da[3 * h + k] = dh[k] * tc * o * (1.0 - o);
    out.dc_prev[k] = dcell * f;
  }
  outer_acc(grads.w_input, da, cache.x);
  outer_acc(grads.w_recurrent, da, cache.h_prev);
  axpy(1.0, da, grads.bias.values());
  gemv_t_acc(p.w_input, da, out.dx);
  gemv_t_acc(p.w_recurrent, da, out.dh_prev);
  return out;
}

Vec gru_step(ConstSpan x, ConstSpan h_prev, const GruCellParams& p, GruCache* cache) {
  const std::size_t h = p.hidden_dim();
  check_dims(x.size(), p.input_dim(), "gru_step input");
  check_dims(h_prev.size(), h, "gru_step hidden state");

  Vec ax(p.bias_input.values().begin(), p.bias_input.values().end());
  gemv_acc(p.w_input, x, ax);
  Vec ah(p.bias_recurrent.values().begin(), p.bias_recurrent.values().end());
  gemv_acc(p.w_recurrent, h_prev, ah);

  Vec z(h), r(h), n(h), rec(h), out(h);
  for (std::size_t k = 0; k < h; ++k) {
    z[k] = sigmoid(ax[k] + ah[k]);
    r[k] = sigmoid(ax[h + k] + ah[h + k]);
    rec[k] = ah[2 * h + k];
    n[k] = std::tanh(ax[2 * h + k] + r[k] * rec[k]);
    out[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
  }
  if (cache) {
    cache->valid = true;
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->n = std::move(n);
    cache->rec_candidate = std::move(rec);
  }
  return out;
}

StepInputGrads gru_step_backward(const GruCache& cache, const GruCellParams& p, ConstSpan dh,
                                 GruCellParams& grads) {
  if (!cache.valid) fail(ErrorCode::kInvalidState, "gru_step_backward: missing forward cache");
  const std::size_t h = p.hidden_dim();
  check_dims(dh.size(), h, "gru_step_backward dh");

  // dax: gradient wrt the input-side affine terms; dah: recurrent-side terms.
  Vec dax(3 * h), dah(3 * h);
  StepInputGrads out{Vec(p.input_dim(), 0.0), Vec(h), {}};
  for (std::size_t k = 0; k < h; ++k) {
    const double z = cache.z[k], r = cache.r[k], n = cache.n[k];
    const double dn = dh[k] * (1.0 - z);
    const double dz = dh[k] * (cache.h_prev[k] - n);
    const double dan = dn * (1.0 - n * n);
    const double dar = dan * cache.rec_candidate[k] * r * (1.0 - r);
    const double daz = dz * z * (1.0 - z);
    dax[k] = daz;
    dax[h + k] = dar;
    dax[2 * h + k] = dan;
    dah[k] = daz;
    dah[h + k] = dar;
    dah[2 * h + k] = dan * r;
    out.dh_prev[k] = dh[k] * z;
  }
  outer_acc(grads.w_input, dax, cache.x);
  axpy(1.0, dax, grads.bias_input.values());
  outer_acc(grads.w_recurrent, dah, cache.h_prev);
  axpy(1.0, dah, grads.bias_recurrent.values());
  gemv_t_acc(p.w_input, dax, out.dx);
  gemv_t_acc(p.w_recurrent, dah, out.dh_prev);
  return out;
}

}  // namespace actseq
