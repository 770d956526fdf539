// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <string_view>

#include "core/numkit.hpp"

namespace actseq {

/// LSTM weights with the four gates stacked row-wise in the order
/// input, forget, candidate, output.
struct LstmCellParams {
  Matrix w_input;      // 4H x Dx
  Matrix w_recurrent;  // 4H x H
  Matrix bias;         // 4H x 1

  static LstmCellParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  static LstmCellParams random(std::size_t input_dim, std::size_t hidden_dim,
                               std::mt19937_64& rng);

  std::size_t input_dim() const { return w_input.cols(); }
  std::size_t hidden_dim() const { return w_recurrent.cols(); }

  template <class Self, class F>
  static void each(Self& self, F&& f) {
    f("w_input", self.w_input);
    f("w_recurrent", self.w_recurrent);
    f("bias", self.bias);
  }
};

/// GRU weights with gates stacked as update, reset, candidate. The
/// recurrent bias of the candidate gate sits inside the reset product.
struct GruCellParams {
  Matrix w_input;         // 3H x Dx
  Matrix w_recurrent;     // 3H x H
  Matrix bias_input;      // 3H x 1
  Matrix bias_recurrent;  // 3H x 1

  static GruCellParams zeros(std::size_t input_dim, std::size_t hidden_dim);
  static GruCellParams random(std::size_t input_dim, std::size_t hidden_dim,
                              std::mt19937_64& rng);

  std::size_t input_dim() const { return w_input.cols(); }
  std::size_t hidden_dim() const { return w_recurrent.cols(); }

  template <class Self, class F>
  static void each(Self& self, F&& f) {
    f("w_input", self.w_input);
    f("w_recurrent", self.w_recurrent);
    f("bias_input", self.bias_input);
    f("bias_recurrent", self.bias_recurrent);
  }
};

struct LstmCache {
  bool valid = false;
  Vec x, h_prev, c_prev;
  Vec gates;  // post-activation i, f, g, o (4H)
  Vec c, tanh_c;
};

struct GruCache {
  bool valid = false;
  Vec x, h_prev;
  Vec z, r, n;
  Vec rec_candidate;  // W_hn h_prev + b_hn, before the reset product
};

struct LstmState {
  Vec c, h;
};

struct StepInputGrads {
  Vec dx;
  Vec dh_prev;
  Vec dc_prev;  // empty for GRU
};

LstmState lstm_step(ConstSpan x, ConstSpan h_prev, ConstSpan c_prev, const LstmCellParams& p,
                    LstmCache* cache = nullptr);

Vec gru_step(ConstSpan x, ConstSpan h_prev, const GruCellParams& p, GruCache* cache = nullptr);

/// Accumulates parameter gradients into `grads` and returns gradients with
/// respect to the step inputs. `dc` is the gradient flowing into the new cell
/// state from later steps.
StepInputGrads lstm_step_backward(const LstmCache& cache, const LstmCellParams& p, ConstSpan dh,
                                  ConstSpan dc, LstmCellParams& grads);

StepInputGrads gru_step_backward(const GruCache& cache, const GruCellParams& p, ConstSpan dh,
                                 GruCellParams& grads);

}  // namespace actseq
