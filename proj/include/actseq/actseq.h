/* SPDX-License-Identifier: Apache-2.0 */
/* C interface to the actseq library: synthetic data, sequence translation
 * models, two-stage captioning and attention-based localization.
 *
 * Every function returns an actseq_status. On failure the message of the
 * most recent error on the calling thread is available from
 * actseq_last_error(). Handles are opaque and owned by the caller; release
 * them with the matching *_free function. Passing NULL to *_free is a no-op.
 */
#ifndef ACTSEQ_ACTSEQ_H
#define ACTSEQ_ACTSEQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(ACTSEQ_BUILDING_LIBRARY)
#define ACTSEQ_API __attribute__((visibility("default")))
#else
#define ACTSEQ_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum actseq_status {
  ACTSEQ_OK = 0,
  ACTSEQ_ERR_INVALID_ARGUMENT = 1,
  ACTSEQ_ERR_INVALID_STATE = 2,
  ACTSEQ_ERR_UNSUPPORTED = 3,
  ACTSEQ_ERR_LOOKUP = 4,
  ACTSEQ_ERR_PARSE = 5,
  ACTSEQ_ERR_INCONSISTENCY = 6,
  ACTSEQ_ERR_GENERATION = 7,
  ACTSEQ_ERR_IO = 8,
  ACTSEQ_ERR_INTERNAL = 99
} actseq_status;

typedef enum actseq_variant {
  ACTSEQ_LSTM_MEAN = 0,
  ACTSEQ_LSTM_SS = 1,
  ACTSEQ_LSTM_ED = 2,
  ACTSEQ_GRU_AA = 3
} actseq_variant;

typedef enum actseq_target {
  ACTSEQ_TARGET_ACTIONS = 0,
  ACTSEQ_TARGET_CAPTION = 1
} actseq_target;

typedef enum actseq_transition {
  ACTSEQ_TRANSITION_UNIFORM = 0,
  ACTSEQ_TRANSITION_NO_REPEAT = 1
} actseq_transition;

typedef enum actseq_localization_rule {
  ACTSEQ_LOCALIZE_ATTENTION_MASS = 0,
  ACTSEQ_LOCALIZE_NEAREST_STEP = 1
} actseq_localization_rule;

typedef struct actseq_dataset actseq_dataset;
typedef struct actseq_model actseq_model;
typedef struct actseq_pipeline actseq_pipeline;

typedef struct actseq_synth_spec {
  uint64_t num_classes;
  uint64_t input_dim;
  uint64_t min_actions;
  uint64_t max_actions;
  uint64_t min_duration;
  uint64_t max_duration;
  double separation;
  double noise_sigma;
  actseq_transition transition;
  uint64_t seed;
} actseq_synth_spec;

typedef struct actseq_train_config {
  uint64_t hidden_dim;
  uint64_t embedding_dim;
  uint64_t batch_size;
  uint64_t epochs;
  double learning_rate;
  double teacher_forcing_prob;
  int per_step_forcing; /* 0: one draw per sequence */
  uint64_t patience;
  uint64_t seed;
  double clip_norm;
  uint64_t baseline_layers;
  uint64_t max_decode_len; /* 0: twice the longest training target + 1 */
  uint64_t workers;
} actseq_train_config;

typedef struct actseq_epoch {
  uint64_t epoch;
  double train_loss;
  double val_loss;
  double val_bleu1;
} actseq_epoch;

/* phase is "train", "stage1" or "joint". */
typedef void (*actseq_epoch_fn)(const char* phase, const actseq_epoch* epoch, void* user);

typedef struct actseq_report {
  uint64_t count;
  double bleu[4]; /* BLEU-1..4 */
  double accuracy;
  double rouge_l;
  double length_within_one; /* percent of samples with |len diff| <= 1 */
} actseq_report;

typedef struct actseq_localization_report {
  uint64_t videos;
  double map;
  double shuffled_map;
} actseq_localization_report;

typedef void (*actseq_gradcheck_fn)(const char* name, uint64_t parameters, double max_rel_error,
                                    void* user);

ACTSEQ_API const char* actseq_last_error(void);
ACTSEQ_API const char* actseq_status_name(actseq_status status);
ACTSEQ_API const char* actseq_variant_name(actseq_variant variant);
ACTSEQ_API actseq_status actseq_parse_variant(const char* name, actseq_variant* out);

ACTSEQ_API void actseq_synth_spec_default(actseq_synth_spec* spec);
ACTSEQ_API void actseq_train_config_full(actseq_train_config* config);
ACTSEQ_API void actseq_train_config_desk(actseq_train_config* config);

/* Datasets */
ACTSEQ_API actseq_status actseq_dataset_generate(const actseq_synth_spec* spec, uint64_t count,
                                                 uint64_t first_index, actseq_dataset** out);
ACTSEQ_API actseq_status actseq_dataset_load(const char* path, actseq_dataset** out);
ACTSEQ_API actseq_status actseq_dataset_load_external(const char* features_path,
                                                      const char* labels_path,
                                                      const char* vocab_path, /* may be NULL */
                                                      actseq_dataset** out);
ACTSEQ_API actseq_status actseq_dataset_save(const actseq_dataset* data, const char* path);
ACTSEQ_API actseq_status actseq_dataset_save_vocab(const actseq_dataset* data,
                                                   const char* actions_path, const char* words_path);
ACTSEQ_API actseq_status actseq_dataset_size(const actseq_dataset* data, uint64_t* out);
/* Twice the longest target of `data` plus one. */
ACTSEQ_API actseq_status actseq_dataset_decode_len(const actseq_dataset* data, actseq_target target,
                                                   uint64_t* out);
ACTSEQ_API void actseq_dataset_free(actseq_dataset* data);

/* Translation models */
ACTSEQ_API actseq_status actseq_model_train(actseq_variant variant, actseq_target target,
                                            const actseq_train_config* config,
                                            const actseq_dataset* train, const actseq_dataset* val,
                                            const char* loss_log_path, /* may be NULL */
                                            actseq_epoch_fn on_epoch, void* user,
                                            actseq_model** out);
ACTSEQ_API actseq_status actseq_model_load(const char* path, actseq_model** out);
ACTSEQ_API actseq_status actseq_model_save(const actseq_model* model, const char* path);
ACTSEQ_API actseq_status actseq_model_variant(const actseq_model* model, actseq_variant* out);
ACTSEQ_API actseq_status actseq_model_evaluate(const actseq_model* model, const actseq_dataset* data,
                                               actseq_target target, uint64_t max_decode_len,
                                               actseq_report* out);
/* One line per sample: id, tab, space-joined token names. */
ACTSEQ_API actseq_status actseq_model_write_predictions(const actseq_model* model,
                                                        const actseq_dataset* data,
                                                        actseq_target target,
                                                        uint64_t max_decode_len, const char* path);
ACTSEQ_API void actseq_model_free(actseq_model* model);

/* Two-stage captioning. stage1 may be NULL to train it from scratch. */
ACTSEQ_API actseq_status actseq_pipeline_train(const actseq_model* stage1,
                                               const actseq_train_config* stage1_config,
                                               const actseq_train_config* joint_config,
                                               int normalize_scores, const actseq_dataset* train,
                                               const actseq_dataset* val,
                                               const char* stage1_log_path, /* may be NULL */
                                               const char* joint_log_path,  /* may be NULL */
                                               actseq_epoch_fn on_epoch, void* user,
                                               actseq_pipeline** out);
ACTSEQ_API actseq_status actseq_pipeline_load(const char* path, actseq_pipeline** out);
ACTSEQ_API actseq_status actseq_pipeline_save(const actseq_pipeline* pipeline, const char* path);
ACTSEQ_API actseq_status actseq_pipeline_evaluate(const actseq_pipeline* pipeline,
                                                  const actseq_dataset* data, actseq_report* out);
ACTSEQ_API actseq_status actseq_pipeline_write_captions(const actseq_pipeline* pipeline,
                                                        const actseq_dataset* data, const char* path);
ACTSEQ_API void actseq_pipeline_free(actseq_pipeline* pipeline);

/* Localization over every sample of `data`. grid_path may be NULL. */
ACTSEQ_API actseq_status actseq_localize(const actseq_model* model, const actseq_dataset* data,
                                         uint64_t max_decode_len, actseq_localization_rule rule,
                                         uint64_t shuffle_seed, const char* grid_path,
                                         actseq_localization_report* out);

/* Runs the finite-difference suite; *worst receives the largest error. */
ACTSEQ_API actseq_status actseq_grad_check(uint64_t seed, actseq_gradcheck_fn on_case, void* user,
                                           double* worst);

#ifdef __cplusplus
}
#endif

#endif /* ACTSEQ_ACTSEQ_H */
