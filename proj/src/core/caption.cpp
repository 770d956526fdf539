// SPDX-License-Identifier: Apache-2.0
#include "core/caption.hpp"

#include <cstring>
#include <fstream>

#include "core/metrics.hpp"

namespace actseq {

void CaptionPipeline::validate() const {
  require(stage1.variant == Variant::kGruAa && stage2.variant == Variant::kGruAa,
          "caption pipeline stages must be gru-aa models");
  require(stage2.dims.input_dim == stage1.dims.token_count,
          "stage-2 input dimension must equal the stage-1 score width");
  require(action_max_len >= 1 && word_max_len >= 1, "decode caps must be positive");
}

CaptionPipeline create_pipeline(std::size_t input_dim, std::size_t action_tokens,
                                std::size_t word_tokens, const TrainingConfig& config,
                                std::size_t action_max_len, std::size_t word_max_len) {
  CaptionPipeline p;
  p.stage1 = create_model(Variant::kGruAa, input_dim, action_tokens, config);
  TrainingConfig second = config;
  second.seed = splitmix64(config.seed ^ 0x73746167653200ULL);
  p.stage2 = create_model(Variant::kGruAa, action_tokens, word_tokens, second);
  p.action_max_len = action_max_len;
  p.word_max_len = word_max_len;
  p.validate();
  return p;
}

namespace {

std::vector<Vec> stage2_inputs(const CaptionPipeline& p, const std::vector<Vec>& scores) {
  if (!p.normalize_scores) return scores;
  std::vector<Vec> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(softmax(s));
  return out;
}

}  // namespace

ScoreSequence stage1_scores(const CaptionPipeline& pipeline, const FeatureSequence& features) {
  const auto tr = forward(pipeline.stage1, features.frames,
                          DecodePolicy::greedy(pipeline.action_max_len), false);
  return tr.scores;
}

TokenSeq caption(const CaptionPipeline& pipeline, const FeatureSequence& features) {
  const auto scores = stage1_scores(pipeline, features);
  const auto tr = forward(pipeline.stage2, stage2_inputs(pipeline, scores),
                          DecodePolicy::greedy(pipeline.word_max_len), false);
  return to_prediction(pipeline.stage2, tr).tokens;
}

std::vector<TokenSeq> caption_all(const CaptionPipeline& pipeline, const Dataset& data) {
  std::vector<TokenSeq> out;
  out.reserve(data.samples.size());
  for (const auto& s : data.samples) out.push_back(caption(pipeline, s.features));
  return out;
}

LossResult joint_loss(const CaptionPipeline& pipeline, const FeatureSequence& features,
                      const TokenSeq& words, const std::vector<bool>& forcing, PipelineGrads* grads) {
  const bool keep = grads != nullptr;
  const auto tr1 = forward(pipeline.stage1, features.frames,
                           DecodePolicy::greedy(pipeline.action_max_len), keep);
  const auto inputs2 = stage2_inputs(pipeline, tr1.scores);
  const auto tr2 = forward(pipeline.stage2, inputs2, DecodePolicy::teacher(words, forcing), keep);

  LossResult res;
  std::vector<Vec> d2;
  for (std::size_t q = 0; q < tr2.steps(); ++q) {
    const Token want = q < words.size() ? words[q] : pipeline.stage2.dims.eos();
    res.loss += cross_entropy(tr2.scores[q], want);
    if (keep) d2.push_back(cross_entropy_grad(tr2.scores[q], want));
  }
  res.steps = tr2.steps();
  if (!keep) return res;

  std::vector<Vec> dinputs;
  backward(pipeline.stage2, tr2, d2, grads->stage2, &dinputs);
  if (pipeline.normalize_scores) {
    // Softmax Jacobian: ds = p * (dp - <p, dp>).
    for (std::size_t q = 0; q < dinputs.size(); ++q) {
      const Vec& p = inputs2[q];
      const double inner = dot(p, dinputs[q]);
      for (std::size_t k = 0; k < p.size(); ++k) dinputs[q][k] = p[k] * (dinputs[q][k] - inner);
    }
  }
  backward(pipeline.stage1, tr1, dinputs, grads->stage1, nullptr);
  return res;
}

namespace {

Vec flatten_pipeline(const CaptionPipeline& p) {
  Vec a = p.stage1.flatten();
  Vec b = p.stage2.flatten();
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void assign_pipeline(CaptionPipeline& p, const Vec& flat) {
  const std::size_t n1 = p.stage1.parameter_count();
  p.stage1.assign(ConstSpan(flat).first(n1));
  p.stage2.assign(ConstSpan(flat).subspan(n1));
}

Vec flatten_grads(const PipelineGrads& g) {
  Vec a = g.stage1.flatten();
  Vec b = g.stage2.flatten();
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

double joint_eval_loss(const CaptionPipeline& p, const Dataset& data) {
  double loss = 0.0;
  std::size_t steps = 0;
  for (const auto& s : data.samples) {
    const auto r = joint_loss(p, s.features, s.caption, std::vector<bool>(s.caption.size() + 1, true),
                              nullptr);
    loss += r.loss;
    steps += r.steps;
  }
  return steps ? loss / static_cast<double>(steps) : 0.0;
}

double caption_bleu1(const CaptionPipeline& p, const Dataset& data) {
  std::vector<TokenSeq> refs;
  for (const auto& s : data.samples) refs.push_back(s.caption);
  return bleu(caption_all(p, data), refs, 1).value;
}

void check_captions(const Dataset& data, const char* which) {
  require(!data.samples.empty(), std::string("train_pipeline: empty ") + which + " set");
  for (const auto& s : data.samples) {
    if (s.caption.empty()) {
      fail(ErrorCode::kInvalidArgument, std::string("train_pipeline: ") + which + " sample " +
                                            s.features.source_id + " has no caption");
    }
  }
}

}  // namespace

PipelineTrainResult train_pipeline(CaptionPipeline pipeline, const Dataset& train_data,
                                   const Dataset& val_data, const TrainingConfig& stage1_config,
                                   const TrainingConfig& joint_config,
                                   const std::function<void(const char*, const EpochLog&)>& on_epoch,
                                   bool skip_stage1) {
  pipeline.validate();
  joint_config.validate();
  check_captions(train_data, "training");
  check_captions(val_data, "validation");

  PipelineTrainResult result;
  if (!skip_stage1) {
    const auto tr = make_examples(train_data, TargetKind::kActions);
    const auto va = make_examples(val_data, TargetKind::kActions);
    TrainingConfig c1 = stage1_config;
    c1.max_decode_len = pipeline.action_max_len;
    auto r = train(pipeline.stage1, tr, va, c1, [&](const EpochLog& e) {
      if (on_epoch) on_epoch("stage1", e);
    });
    pipeline.stage1 = std::move(r.model);
    result.stage1_log = std::move(r.log);
  }

  std::vector<Example> examples = make_examples(train_data, TargetKind::kCaption);
  std::mt19937_64 rng(joint_config.seed);
  EpochLog first{0, joint_eval_loss(pipeline, train_data), joint_eval_loss(pipeline, val_data),
                 caption_bleu1(pipeline, val_data)};
  result.joint_log.push_back(first);
  if (on_epoch) on_epoch("joint", first);
  result.pipeline = pipeline;
  double best_val = first.val_loss;
  std::size_t since_best = 0;

  Vec theta = flatten_pipeline(pipeline);
  Adam adam(theta.size(), joint_config.learning_rate);
  const Token pad = pipeline.stage2.dims.pad();
  for (std::size_t epoch = 1; epoch <= joint_config.epochs; ++epoch) {
    const auto batches = make_batches(examples, joint_config.batch_size, pad, rng);
    double loss_sum = 0.0;
    std::size_t step_sum = 0;
    for (const auto& batch : batches) {
      const std::size_t n = batch.indices.size();
      PipelineGrads total{pipeline.stage1.zeros_like(), pipeline.stage2.zeros_like()};
      for (std::size_t k = 0; k < n; ++k) {
        const TokenSeq words = unpad(batch.padded_targets[k], pad);
        const auto forcing = draw_forcing(words.size() + 1, joint_config.teacher_forcing_prob,
                                          joint_config.forcing, rng);
        const auto r = joint_loss(pipeline, train_data.samples[batch.indices[k]].features, words,
                                  forcing, &total);
        loss_sum += r.loss;
        step_sum += r.steps;
      }
      Vec g = flatten_grads(total);
      const double inv = 1.0 / static_cast<double>(n);
      for (double& v : g) v *= inv;
      clip_global_norm(g, joint_config.clip_norm);
      adam.step(theta, g);
      assign_pipeline(pipeline, theta);
    }
    EpochLog entry{epoch, step_sum ? loss_sum / static_cast<double>(step_sum) : 0.0,
                   joint_eval_loss(pipeline, val_data), caption_bleu1(pipeline, val_data)};
    result.joint_log.push_back(entry);
    if (on_epoch) on_epoch("joint", entry);
    if (entry.val_loss < best_val) {
      best_val = entry.val_loss;
      result.pipeline = pipeline;
      since_best = 0;
    } else if (++since_best >= joint_config.patience) {
      break;
    }
  }
  return result;
}

// Pipeline file: "ACTSEQP1" | u8 normalize | u64 action_max_len |
// u64 word_max_len | stage-1 checkpoint | stage-2 checkpoint.
namespace {
constexpr char kPipelineMagic[8] = {'A', 'C', 'T', 'S', 'E', 'Q', 'P', '1'};
}

void save_pipeline(const CaptionPipeline& pipeline, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write pipeline " + path.string());
  out.write(kPipelineMagic, sizeof(kPipelineMagic));
  const std::uint8_t norm = pipeline.normalize_scores ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&norm), 1);
  const std::uint64_t lens[2] = {pipeline.action_max_len, pipeline.word_max_len};
  out.write(reinterpret_cast<const char*>(lens), sizeof(lens));
  save_model(pipeline.stage1, out);
  save_model(pipeline.stage2, out);
}

CaptionPipeline load_pipeline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open pipeline " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPipelineMagic, sizeof(magic)) != 0) {
    fail(ErrorCode::kParse, path.string() + " is not a caption pipeline file");
  }
  CaptionPipeline p;
  std::uint8_t norm = 0;
  std::uint64_t lens[2] = {0, 0};
  in.read(reinterpret_cast<char*>(&norm), 1);
  in.read(reinterpret_cast<char*>(lens), sizeof(lens));
  if (!in) fail(ErrorCode::kParse, "pipeline header truncated");
  p.normalize_scores = norm != 0;
  p.action_max_len = lens[0];
  p.word_max_len = lens[1];
  p.stage1 = load_model(in);
  p.stage2 = load_model(in);
  p.validate();
  return p;
}

}  // namespace actseq
