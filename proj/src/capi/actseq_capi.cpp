// SPDX-License-Identifier: Apache-2.0
#include "actseq/actseq.h"

#include <fstream>
#include <new>
#include <string>

#include "core/caption.hpp"
#include "core/gradcheck_suite.hpp"
#include "core/localize.hpp"
#include "core/metrics.hpp"
#include "core/synthdata.hpp"
#include "core/train.hpp"

struct actseq_dataset {
  actseq::Dataset data;
};

struct actseq_model {
  actseq::Seq2SeqModel model;
};

struct actseq_pipeline {
  actseq::CaptionPipeline pipeline;
};

namespace {

thread_local std::string g_last_error;

actseq_status to_status(actseq::ErrorCode code) {
  using actseq::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return ACTSEQ_ERR_INVALID_ARGUMENT;
    case ErrorCode::kInvalidState: return ACTSEQ_ERR_INVALID_STATE;
    case ErrorCode::kUnsupported: return ACTSEQ_ERR_UNSUPPORTED;
    case ErrorCode::kLookup: return ACTSEQ_ERR_LOOKUP;
    case ErrorCode::kParse: return ACTSEQ_ERR_PARSE;
    case ErrorCode::kInconsistency: return ACTSEQ_ERR_INCONSISTENCY;
    case ErrorCode::kGeneration: return ACTSEQ_ERR_GENERATION;
    case ErrorCode::kIo: return ACTSEQ_ERR_IO;
  }
  return ACTSEQ_ERR_INTERNAL;
}

template <class F>
actseq_status guarded(F&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ACTSEQ_OK;
  } catch (const actseq::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return ACTSEQ_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ACTSEQ_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  actseq::require(p != nullptr, std::string(what) + " must not be null");
}

actseq::SyntheticSpec from_c(const actseq_synth_spec& s) {
  actseq::SyntheticSpec spec;
  spec.num_classes = s.num_classes;
  spec.input_dim = s.input_dim;
  spec.min_actions = s.min_actions;
  spec.max_actions = s.max_actions;
  spec.min_duration = s.min_duration;
  spec.max_duration = s.max_duration;
  spec.separation = s.separation;
  spec.noise_sigma = s.noise_sigma;
  switch (s.transition) {
    case ACTSEQ_TRANSITION_UNIFORM: spec.transition_kind = actseq::TransitionKind::kUniform; break;
    case ACTSEQ_TRANSITION_NO_REPEAT: spec.transition_kind = actseq::TransitionKind::kNoRepeat; break;
    default: actseq::fail(actseq::ErrorCode::kInvalidArgument, "unknown transition kind");
  }
  spec.seed = s.seed;
  return spec;
}

actseq::TrainingConfig from_c(const actseq_train_config& c) {
  actseq::TrainingConfig t;
  t.hidden_dim = c.hidden_dim;
  t.embedding_dim = c.embedding_dim;
  t.batch_size = c.batch_size;
  t.epochs = c.epochs;
  t.learning_rate = c.learning_rate;
  t.teacher_forcing_prob = c.teacher_forcing_prob;
  t.forcing = c.per_step_forcing ? actseq::ForcingGranularity::kPerStep
                                 : actseq::ForcingGranularity::kPerSequence;
  t.patience = c.patience;
  t.seed = c.seed;
  t.clip_norm = c.clip_norm;
  t.baseline_layers = c.baseline_layers;
  t.max_decode_len = c.max_decode_len;
  t.workers = c.workers;
  t.validate();
  return t;
}

void to_c(const actseq::TrainingConfig& t, actseq_train_config* c) {
  c->hidden_dim = t.hidden_dim;
  c->embedding_dim = t.embedding_dim;
  c->batch_size = t.batch_size;
  c->epochs = t.epochs;
  c->learning_rate = t.learning_rate;
  c->teacher_forcing_prob = t.teacher_forcing_prob;
  c->per_step_forcing = t.forcing == actseq::ForcingGranularity::kPerStep;
  c->patience = t.patience;
  c->seed = t.seed;
  c->clip_norm = t.clip_norm;
  c->baseline_layers = t.baseline_layers;
  c->max_decode_len = t.max_decode_len;
  c->workers = t.workers;
}

actseq::Variant from_c(actseq_variant v) {
  switch (v) {
    case ACTSEQ_LSTM_MEAN: return actseq::Variant::kLstmMean;
    case ACTSEQ_LSTM_SS: return actseq::Variant::kLstmSs;
    case ACTSEQ_LSTM_ED: return actseq::Variant::kLstmEd;
    case ACTSEQ_GRU_AA: return actseq::Variant::kGruAa;
  }
  actseq::fail(actseq::ErrorCode::kInvalidArgument, "unknown variant");
}

actseq::TargetKind from_c(actseq_target t) {
  switch (t) {
    case ACTSEQ_TARGET_ACTIONS: return actseq::TargetKind::kActions;
    case ACTSEQ_TARGET_CAPTION: return actseq::TargetKind::kCaption;
  }
  actseq::fail(actseq::ErrorCode::kInvalidArgument, "unknown target kind");
}

const actseq::Vocabulary& target_vocab(const actseq::Dataset& d, actseq_target t) {
  return t == ACTSEQ_TARGET_CAPTION ? d.words : d.actions;
}

void check_vocab(const actseq::Seq2SeqModel& m, const actseq::Vocabulary& v) {
  if (m.dims.token_count != v.token_count() || (m.vocab_hash != 0 && m.vocab_hash != v.hash())) {
    actseq::fail(actseq::ErrorCode::kInconsistency,
                 "model vocabulary does not match the dataset vocabulary");
  }
}

void write_log(const char* path, const std::vector<actseq::EpochLog>& log) {
  if (!path) return;
  std::ofstream out(path, std::ios::binary);
  if (!out) actseq::fail(actseq::ErrorCode::kIo, std::string("cannot write ") + path);
  out << actseq::format_loss_log(log);
}

actseq_epoch to_c(const actseq::EpochLog& e) {
  return {e.epoch, e.train_loss, e.val_loss, e.val_bleu1};
}

actseq_report make_report(const std::vector<actseq::TokenSeq>& preds,
                          const std::vector<actseq::TokenSeq>& refs) {
  actseq_report r{};
  r.count = preds.size();
  for (std::size_t n = 1; n <= 4; ++n) r.bleu[n - 1] = actseq::bleu(preds, refs, n).value;
  r.accuracy = actseq::seq_item_accuracy(preds, refs).value;
  r.rouge_l = actseq::rouge_l(preds, refs).value;
  r.length_within_one = actseq::length_within(preds, refs, 1).value;
  return r;
}

std::vector<actseq::TokenSeq> references(const actseq::Dataset& d, actseq_target t) {
  std::vector<actseq::TokenSeq> refs;
  for (const auto& s : d.samples) refs.push_back(t == ACTSEQ_TARGET_CAPTION ? s.caption : s.actions);
  return refs;
}

void write_lines(const char* path, const actseq::Dataset& d, const actseq::Vocabulary& v,
                 const std::vector<actseq::TokenSeq>& seqs) {
  need(path, "path");
  std::ofstream out(path, std::ios::binary);
  if (!out) actseq::fail(actseq::ErrorCode::kIo, std::string("cannot write ") + path);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    out << d.samples[i].features.source_id << '\t';
    for (std::size_t k = 0; k < seqs[i].size(); ++k) out << (k ? " " : "") << v.name(seqs[i][k]);
    out << '\n';
  }
}

}  // namespace

extern "C" {

const char* actseq_last_error(void) { return g_last_error.c_str(); }

const char* actseq_status_name(actseq_status status) {
  switch (status) {
    case ACTSEQ_OK: return "ok";
    case ACTSEQ_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ACTSEQ_ERR_INVALID_STATE: return "invalid state";
    case ACTSEQ_ERR_UNSUPPORTED: return "unsupported";
    case ACTSEQ_ERR_LOOKUP: return "lookup";
    case ACTSEQ_ERR_PARSE: return "parse";
    case ACTSEQ_ERR_INCONSISTENCY: return "inconsistency";
    case ACTSEQ_ERR_GENERATION: return "generation";
    case ACTSEQ_ERR_IO: return "io";
    case ACTSEQ_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* actseq_variant_name(actseq_variant variant) {
  switch (variant) {
    case ACTSEQ_LSTM_MEAN: return "lstm-mean";
    case ACTSEQ_LSTM_SS: return "lstm-ss";
    case ACTSEQ_LSTM_ED: return "lstm-ed";
    case ACTSEQ_GRU_AA: return "gru-aa";
  }
  return "unknown";
}

actseq_status actseq_parse_variant(const char* name, actseq_variant* out) {
  return guarded([&] {
    need(name, "name");
    need(out, "out");
    *out = static_cast<actseq_variant>(actseq::parse_variant(name));
  });
}

void actseq_synth_spec_default(actseq_synth_spec* spec) {
  if (!spec) return;
  const actseq::SyntheticSpec s;
  *spec = {s.num_classes, s.input_dim,  s.min_actions, s.max_actions, s.min_duration,
           s.max_duration, s.separation, s.noise_sigma, ACTSEQ_TRANSITION_NO_REPEAT, s.seed};
}

void actseq_train_config_full(actseq_train_config* config) {
  if (config) to_c(actseq::TrainingConfig::full(), config);
}

void actseq_train_config_desk(actseq_train_config* config) {
  if (config) to_c(actseq::TrainingConfig::desk(), config);
}

actseq_status actseq_dataset_generate(const actseq_synth_spec* spec, uint64_t count,
                                      uint64_t first_index, actseq_dataset** out) {
  return guarded([&] {
    need(spec, "spec");
    need(out, "out");
    *out = new actseq_dataset{actseq::generate(from_c(*spec), count, first_index)};
  });
}

actseq_status actseq_dataset_load(const char* path, actseq_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new actseq_dataset{actseq::load_dataset(path)};
  });
}

actseq_status actseq_dataset_load_external(const char* features_path, const char* labels_path,
                                           const char* vocab_path, actseq_dataset** out) {
  return guarded([&] {
    need(features_path, "features_path");
    need(labels_path, "labels_path");
    need(out, "out");
    std::optional<actseq::ActionVocabulary> vocab;
    if (vocab_path) vocab = actseq::Vocabulary::load(vocab_path);
    *out = new actseq_dataset{actseq::load_external(features_path, labels_path, vocab)};
  });
}

actseq_status actseq_dataset_save(const actseq_dataset* data, const char* path) {
  return guarded([&] {
    need(data, "data");
    need(path, "path");
    actseq::save_dataset(data->data, path);
  });
}

actseq_status actseq_dataset_save_vocab(const actseq_dataset* data, const char* actions_path,
                                        const char* words_path) {
  return guarded([&] {
    need(data, "data");
    if (actions_path) data->data.actions.save(actions_path);
    if (words_path) data->data.words.save(words_path);
  });
}

actseq_status actseq_dataset_size(const actseq_dataset* data, uint64_t* out) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    *out = data->data.samples.size();
  });
}

actseq_status actseq_dataset_decode_len(const actseq_dataset* data, actseq_target target,
                                        uint64_t* out) {
  return guarded([&] {
    need(data, "data");
    need(out, "out");
    *out = actseq::default_max_decode_len(actseq::make_examples(data->data, from_c(target)));
  });
}

void actseq_dataset_free(actseq_dataset* data) { delete data; }

actseq_status actseq_model_train(actseq_variant variant, actseq_target target,
                                 const actseq_train_config* config, const actseq_dataset* train,
                                 const actseq_dataset* val, const char* loss_log_path,
                                 actseq_epoch_fn on_epoch, void* user, actseq_model** out) {
  return guarded([&] {
    need(config, "config");
    need(train, "train");
    need(val, "val");
    need(out, "out");
    const auto cfg = from_c(*config);
    const auto kind = from_c(target);
    const auto& vocab = target_vocab(train->data, target);
    auto model = actseq::create_model(from_c(variant), train->data.input_dim(), vocab.token_count(),
                                      cfg, vocab.hash());
    const auto tr = actseq::make_examples(train->data, kind);
    const auto va = actseq::make_examples(val->data, kind);
    auto result = actseq::train(std::move(model), tr, va, cfg, [&](const actseq::EpochLog& e) {
      if (!on_epoch) return;
      const actseq_epoch c = to_c(e);
      on_epoch("train", &c, user);
    });
    write_log(loss_log_path, result.log);
    *out = new actseq_model{std::move(result.model)};
  });
}

actseq_status actseq_model_load(const char* path, actseq_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new actseq_model{actseq::load_model(std::filesystem::path(path))};
  });
}

actseq_status actseq_model_save(const actseq_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    actseq::save_model(model->model, std::filesystem::path(path));
  });
}

actseq_status actseq_model_variant(const actseq_model* model, actseq_variant* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    *out = static_cast<actseq_variant>(model->model.variant);
  });
}

actseq_status actseq_model_evaluate(const actseq_model* model, const actseq_dataset* data,
                                    actseq_target target, uint64_t max_decode_len,
                                    actseq_report* out) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    actseq::require(max_decode_len >= 1, "max_decode_len must be positive");
    check_vocab(model->model, target_vocab(data->data, target));
    const auto ex = actseq::make_examples(data->data, from_c(target));
    *out = make_report(actseq::predict_all(model->model, ex, max_decode_len),
                       references(data->data, target));
  });
}

actseq_status actseq_model_write_predictions(const actseq_model* model, const actseq_dataset* data,
                                             actseq_target target, uint64_t max_decode_len,
                                             const char* path) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    actseq::require(max_decode_len >= 1, "max_decode_len must be positive");
    const auto& vocab = target_vocab(data->data, target);
    check_vocab(model->model, vocab);
    const auto ex = actseq::make_examples(data->data, from_c(target));
    write_lines(path, data->data, vocab, actseq::predict_all(model->model, ex, max_decode_len));
  });
}

void actseq_model_free(actseq_model* model) { delete model; }

actseq_status actseq_pipeline_train(const actseq_model* stage1,
                                    const actseq_train_config* stage1_config,
                                    const actseq_train_config* joint_config, int normalize_scores,
                                    const actseq_dataset* train, const actseq_dataset* val,
                                    const char* stage1_log_path, const char* joint_log_path,
                                    actseq_epoch_fn on_epoch, void* user, actseq_pipeline** out) {
  return guarded([&] {
    need(stage1_config, "stage1_config");
    need(joint_config, "joint_config");
    need(train, "train");
    need(val, "val");
    need(out, "out");
    const auto c1 = from_c(*stage1_config);
    const auto cj = from_c(*joint_config);
    const auto& d = train->data;
    const std::size_t alen =
        c1.max_decode_len ? c1.max_decode_len
                          : actseq::default_max_decode_len(actseq::make_examples(d, actseq::TargetKind::kActions));
    const std::size_t wlen =
        cj.max_decode_len ? cj.max_decode_len
                          : actseq::default_max_decode_len(actseq::make_examples(d, actseq::TargetKind::kCaption));
    auto p = actseq::create_pipeline(d.input_dim(), d.actions.token_count(), d.words.token_count(), c1,
                                     alen, wlen);
    p.stage1.vocab_hash = d.actions.hash();
    p.stage2.vocab_hash = d.words.hash();
    p.normalize_scores = normalize_scores != 0;
    if (stage1) {
      check_vocab(stage1->model, d.actions);
      actseq::require(stage1->model.variant == actseq::Variant::kGruAa &&
                          stage1->model.dims.input_dim == d.input_dim(),
                      "stage-1 model must be a gru-aa model over the dataset features");
      p.stage1 = stage1->model;
    }
    auto r = actseq::train_pipeline(
        std::move(p), d, val->data, c1, cj,
        [&](const char* phase, const actseq::EpochLog& e) {
          if (!on_epoch) return;
          const actseq_epoch c = to_c(e);
          on_epoch(phase, &c, user);
        },
        stage1 != nullptr);
    if (!stage1) write_log(stage1_log_path, r.stage1_log);
    write_log(joint_log_path, r.joint_log);
    *out = new actseq_pipeline{std::move(r.pipeline)};
  });
}

actseq_status actseq_pipeline_load(const char* path, actseq_pipeline** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new actseq_pipeline{actseq::load_pipeline(path)};
  });
}

actseq_status actseq_pipeline_save(const actseq_pipeline* pipeline, const char* path) {
  return guarded([&] {
    need(pipeline, "pipeline");
    need(path, "path");
    actseq::save_pipeline(pipeline->pipeline, path);
  });
}

actseq_status actseq_pipeline_evaluate(const actseq_pipeline* pipeline, const actseq_dataset* data,
                                       actseq_report* out) {
  return guarded([&] {
    need(pipeline, "pipeline");
    need(data, "data");
    need(out, "out");
    check_vocab(pipeline->pipeline.stage2, data->data.words);
    *out = make_report(actseq::caption_all(pipeline->pipeline, data->data),
                       references(data->data, ACTSEQ_TARGET_CAPTION));
  });
}

actseq_status actseq_pipeline_write_captions(const actseq_pipeline* pipeline,
                                             const actseq_dataset* data, const char* path) {
  return guarded([&] {
    need(pipeline, "pipeline");
    need(data, "data");
    check_vocab(pipeline->pipeline.stage2, data->data.words);
    write_lines(path, data->data, data->data.words, actseq::caption_all(pipeline->pipeline, data->data));
  });
}

void actseq_pipeline_free(actseq_pipeline* pipeline) { delete pipeline; }

actseq_status actseq_localize(const actseq_model* model, const actseq_dataset* data,
                              uint64_t max_decode_len, actseq_localization_rule rule,
                              uint64_t shuffle_seed, const char* grid_path,
                              actseq_localization_report* out) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    actseq::require(max_decode_len >= 1, "max_decode_len must be positive");
    check_vocab(model->model, data->data.actions);
    const auto r = rule == ACTSEQ_LOCALIZE_NEAREST_STEP ? actseq::LocalizationRule::kNearestStep
                                                        : actseq::LocalizationRule::kAttentionMass;
    std::vector<actseq::LocalizationGrid> grids;
    for (const auto& s : data->data.samples) {
      grids.push_back(actseq::localize(model->model, s.features, max_decode_len, r));
    }
    if (grid_path) {
      std::ofstream f(grid_path, std::ios::binary);
      if (!f) actseq::fail(actseq::ErrorCode::kIo, std::string("cannot write ") + grid_path);
      for (const auto& g : grids) actseq::write_grid(f, g);
    }
    out->videos = grids.size();
    out->map = actseq::evaluate_localization(grids, data->data.samples);
    out->shuffled_map = actseq::shuffled_baseline_map(grids, data->data.samples, shuffle_seed);
  });
}

actseq_status actseq_grad_check(uint64_t seed, actseq_gradcheck_fn on_case, void* user,
                                double* worst) {
  return guarded([&] {
    double w = 0.0;
    for (const auto& c : actseq::run_gradient_suite(seed)) {
      if (on_case) on_case(c.name.c_str(), c.parameters, c.report.max_rel_error, user);
      w = std::max(w, c.report.max_rel_error);
    }
    if (worst) *worst = w;
  });
}

}  // extern "C"
