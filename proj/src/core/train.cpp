// SPDX-License-Identifier: Apache-2.0
#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "core/metrics.hpp"

namespace actseq {

TrainingConfig TrainingConfig::full() { return TrainingConfig{}; }

TrainingConfig TrainingConfig::desk() {
  TrainingConfig c;
  c.hidden_dim = 64;
  c.embedding_dim = 32;
  c.batch_size = 8;
  c.epochs = 20;
  return c;
}

void TrainingConfig::validate() const {
  require(hidden_dim > 0, "hidden_dim must be positive");
  require(embedding_dim > 0, "embedding_dim must be positive");
  require(batch_size > 0, "batch_size must be positive");
  require(epochs > 0, "epochs must be positive");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning_rate must be >= 0");
  require(teacher_forcing_prob >= 0.0 && teacher_forcing_prob <= 1.0,
          "teacher_forcing_prob must lie in [0, 1]");
  require(patience > 0, "patience must be positive");
  require(clip_norm > 0.0, "clip_norm must be positive");
  require(baseline_layers > 0, "baseline_layers must be positive");
  require(workers > 0, "workers must be positive");
}

std::vector<Example> make_examples(const Dataset& data, TargetKind kind) {
  std::vector<Example> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    out.push_back({&s.features.frames, kind == TargetKind::kActions ? s.actions : s.caption});
  }
  return out;
}

LossResult sequence_loss(const Seq2SeqModel& model, const std::vector<Vec>& inputs,
                         const TokenSeq& target, const std::vector<bool>& forcing,
                         Seq2SeqModel* grads) {
  const auto policy = DecodePolicy::teacher(target, forcing);
  const auto trace = forward(model, inputs, policy, grads != nullptr);
  LossResult res;
  std::vector<Vec> dscores;
  if (grads) dscores.reserve(trace.steps());
  for (std::size_t q = 0; q < trace.steps(); ++q) {
    const Token want = q < target.size() ? target[q] : model.dims.eos();
    res.loss += cross_entropy(trace.scores[q], want);
    if (grads) dscores.push_back(cross_entropy_grad(trace.scores[q], want));
  }
  res.steps = trace.steps();
  if (grads) backward(model, trace, dscores, *grads, nullptr);
  return res;
}

TokenSeq unpad(const TokenSeq& padded, Token pad) {
  auto end = std::find(padded.begin(), padded.end(), pad);
  return TokenSeq(padded.begin(), end);
}

std::vector<Batch> make_batches(const std::vector<Example>& examples, std::size_t batch_size,
                                Token pad, std::mt19937_64& rng) {
  require(batch_size > 0, "batch_size must be positive");
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].target.size() < examples[b].target.size();
  });
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    Batch b;
    const std::size_t end = std::min(order.size(), start + batch_size);
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
    std::size_t width = 0;
    for (auto i : b.indices) width = std::max(width, examples[i].target.size());
    for (auto i : b.indices) {
      TokenSeq t = examples[i].target;
      t.resize(width, pad);
      b.padded_targets.push_back(std::move(t));
    }
    batches.push_back(std::move(b));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::vector<bool> draw_forcing(std::size_t steps, double prob, ForcingGranularity mode,
                               std::mt19937_64& rng) {
  std::bernoulli_distribution coin(prob);
  std::vector<bool> out(steps, false);
  if (mode == ForcingGranularity::kPerSequence) {
    const bool f = coin(rng);
    std::fill(out.begin(), out.end(), f);
  } else {
    for (std::size_t q = 0; q < steps; ++q) out[q] = coin(rng);
  }
  return out;
}

Adam::Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(Vec& params, const Vec& grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(), "Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
    v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double clip_global_norm(Vec& grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

double evaluate_loss(const Seq2SeqModel& model, const std::vector<Example>& examples) {
  double loss = 0.0;
  std::size_t steps = 0;
  for (const auto& ex : examples) {
    const auto r = sequence_loss(model, *ex.inputs, ex.target,
                                 std::vector<bool>(ex.target.size() + 1, true), nullptr);
    loss += r.loss;
    steps += r.steps;
  }
  return steps == 0 ? 0.0 : loss / static_cast<double>(steps);
}

std::string format_loss_log(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_bleu1\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_bleu1);
    out << buf;
  }
  return out.str();
}

Seq2SeqModel create_model(Variant variant, std::size_t input_dim, std::size_t token_count,
                          const TrainingConfig& config, std::uint64_t vocab_hash) {
  ModelDims dims;
  dims.input_dim = input_dim;
  dims.hidden_dim = config.hidden_dim;
  dims.embed_dim = config.embedding_dim;
  dims.token_count = token_count;
  dims.layers = (variant == Variant::kLstmMean || variant == Variant::kLstmSs)
                    ? config.baseline_layers
                    : 1;
  return Seq2SeqModel::create(variant, dims, splitmix64(config.seed ^ 0x6d6f64656cULL), vocab_hash);
}

std::size_t default_max_decode_len(const std::vector<Example>& train) {
  std::size_t longest = 0;
  for (const auto& ex : train) longest = std::max(longest, ex.target.size());
  return 2 * (longest + 1);
}

std::vector<TokenSeq> predict_all(const Seq2SeqModel& model, const std::vector<Example>& examples,
                                  std::size_t max_decode_len) {
  std::vector<TokenSeq> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto tr = forward(model, *ex.inputs, DecodePolicy::greedy(max_decode_len), false);
    out.push_back(to_prediction(model, tr).tokens);
  }
  return out;
}

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t k = std::min(workers, n);
  for (std::size_t w = 0; w < k; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += k) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

double val_bleu1(const Seq2SeqModel& model, const std::vector<Example>& val, std::size_t max_len) {
  if (val.empty()) return 0.0;
  std::vector<TokenSeq> refs;
  for (const auto& ex : val) refs.push_back(ex.target);
  return bleu(predict_all(model, val, max_len), refs, 1).value;
}

}  // namespace

TrainResult train(Seq2SeqModel model, const std::vector<Example>& train_set,
                  const std::vector<Example>& val_set, const TrainingConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  require(!train_set.empty(), "train: empty training set");
  require(!val_set.empty(), "train: empty validation set");
  const std::size_t max_len =
      config.max_decode_len ? config.max_decode_len : default_max_decode_len(train_set);

  std::mt19937_64 rng(config.seed);
  TrainResult result;
  EpochLog first{0, evaluate_loss(model, train_set), evaluate_loss(model, val_set),
                 val_bleu1(model, val_set, max_len)};
  result.log.push_back(first);
  if (on_epoch) on_epoch(first);
  result.model = model;
  double best_val = first.val_loss;
  std::size_t since_best = 0;

  Vec theta = model.flatten();
  Adam adam(theta.size(), config.learning_rate);
  const Token pad = model.dims.pad();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = make_batches(train_set, config.batch_size, pad, rng);
    double loss_sum = 0.0;
    std::size_t step_sum = 0;
    for (const auto& batch : batches) {
      const std::size_t n = batch.indices.size();
      std::vector<TokenSeq> targets(n);
      std::vector<std::vector<bool>> forcing(n);
      for (std::size_t k = 0; k < n; ++k) {
        targets[k] = unpad(batch.padded_targets[k], pad);
        forcing[k] = draw_forcing(targets[k].size() + 1, config.teacher_forcing_prob,
                                  config.forcing, rng);
      }
      std::vector<Seq2SeqModel> grads(n);
      std::vector<LossResult> losses(n);
      parallel_for(n, config.workers, [&](std::size_t k) {
        grads[k] = model.zeros_like();
        losses[k] = sequence_loss(model, *train_set[batch.indices[k]].inputs, targets[k],
                                  forcing[k], &grads[k]);
      });
      // Ordered reduction keeps results independent of the worker count.
      for (std::size_t k = 1; k < n; ++k) grads[0].add_scaled(grads[k], 1.0);
      for (const auto& l : losses) {
        loss_sum += l.loss;
        step_sum += l.steps;
      }
      Vec g = grads[0].flatten();
      const double inv = 1.0 / static_cast<double>(n);
      for (double& v : g) v *= inv;
      clip_global_norm(g, config.clip_norm);
      adam.step(theta, g);
      model.assign(theta);
    }
    EpochLog entry{epoch, step_sum ? loss_sum / static_cast<double>(step_sum) : 0.0,
                   evaluate_loss(model, val_set), val_bleu1(model, val_set, max_len)};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (entry.val_loss < best_val) {
      best_val = entry.val_loss;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

}  // namespace actseq
