// SPDX-License-Identifier: Apache-2.0
// actseq command-line front end. Every command is a thin wrapper around the
// C API; options may come from an INI/TOML file given with --config, and
// command-line flags override file values.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "actseq/actseq.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(actseq_status s, const std::string& what) {
  if (s != ACTSEQ_OK) {
    throw CommandError(what + ": " + actseq_last_error() + " (" + actseq_status_name(s) + ")");
  }
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};
using Dataset = Handle<actseq_dataset, actseq_dataset_free>;
using Model = Handle<actseq_model, actseq_model_free>;
using Pipeline = Handle<actseq_pipeline, actseq_pipeline_free>;

struct Options {
  std::uint64_t seed = 7;
  std::string variant = "gru-aa";
  bool desk_scale = false;
  std::string out;
  std::string data;
  std::string model;
  std::string pipeline;
  std::string stage1;
  std::string split = "test";
  std::string target = "actions";
  std::string rule = "attention-mass";
  bool normalize_scores = false;

  // Synthetic data.
  std::optional<std::uint64_t> num_classes, input_dim, p_min, p_max, d_min, d_max;
  std::optional<double> separation, noise_sigma;
  std::string transition = "no-repeat";
  std::uint64_t train_size = 2000, val_size = 500, test_size = 500;

  // Training.
  std::optional<std::uint64_t> hidden_dim, embedding_dim, batch_size, epochs, joint_epochs, patience,
      baseline_layers, max_decode_len, workers;
  std::optional<double> learning_rate, teacher_forcing, clip_norm;
  bool per_step_forcing = false;
};

void add_options(CLI::App& app, Options& o) {
  app.add_option("--seed", o.seed, "Seed for data generation, initialization and shuffling")
      ->capture_default_str();
  app.add_option("--variant", o.variant, "Model variant")
      ->check(CLI::IsMember({"lstm-mean", "lstm-ss", "lstm-ed", "gru-aa"}))
      ->capture_default_str();
  app.add_flag("--desk-scale", o.desk_scale, "Desk-scale dimensions (hidden 64, embedding 32, batch 8)");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--data", o.data, "Dataset directory written by gen-data");
  app.add_option("--model", o.model, "Model checkpoint");
  app.add_option("--pipeline", o.pipeline, "Caption pipeline checkpoint to evaluate");
  app.add_option("--stage1", o.stage1, "Trained gru-aa action model used as captioning stage 1");
  app.add_option("--split", o.split, "Evaluation split")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  app.add_option("--target", o.target, "Target sequence kind")
      ->check(CLI::IsMember({"actions", "caption"}))
      ->capture_default_str();
  app.add_option("--rule", o.rule, "Localization scoring rule")
      ->check(CLI::IsMember({"attention-mass", "nearest-step"}))
      ->capture_default_str();
  app.add_flag("--normalize-scores", o.normalize_scores, "Feed softmax scores to captioning stage 2");

  app.add_option("--num-classes", o.num_classes);
  app.add_option("--input-dim", o.input_dim);
  app.add_option("--p-min", o.p_min, "Fewest actions per sample");
  app.add_option("--p-max", o.p_max, "Most actions per sample");
  app.add_option("--d-min", o.d_min, "Shortest action duration in frames");
  app.add_option("--d-max", o.d_max, "Longest action duration in frames");
  app.add_option("--separation", o.separation);
  app.add_option("--noise-sigma", o.noise_sigma);
  app.add_option("--transition", o.transition)
      ->check(CLI::IsMember({"uniform", "no-repeat"}))
      ->capture_default_str();
  app.add_option("--train-size", o.train_size)->capture_default_str();
  app.add_option("--val-size", o.val_size)->capture_default_str();
  app.add_option("--test-size", o.test_size)->capture_default_str();

  app.add_option("--hidden-dim", o.hidden_dim);
  app.add_option("--embedding-dim", o.embedding_dim);
  app.add_option("--batch-size", o.batch_size);
  app.add_option("--epochs", o.epochs);
  app.add_option("--joint-epochs", o.joint_epochs, "Joint captioning epochs (default: --epochs)");
  app.add_option("--learning-rate", o.learning_rate);
  app.add_option("--teacher-forcing", o.teacher_forcing, "Teacher-forcing probability");
  app.add_flag("--per-step-forcing", o.per_step_forcing, "Draw teacher forcing per step");
  app.add_option("--patience", o.patience);
  app.add_option("--clip-norm", o.clip_norm);
  app.add_option("--baseline-layers", o.baseline_layers);
  app.add_option("--max-decode-len", o.max_decode_len);
  app.add_option("--workers", o.workers);
}

actseq_synth_spec synth_spec(const Options& o) {
  actseq_synth_spec s;
  actseq_synth_spec_default(&s);
  s.seed = o.seed;
  if (o.num_classes) s.num_classes = *o.num_classes;
  if (o.input_dim) s.input_dim = *o.input_dim;
  if (o.p_min) s.min_actions = *o.p_min;
  if (o.p_max) s.max_actions = *o.p_max;
  if (o.d_min) s.min_duration = *o.d_min;
  if (o.d_max) s.max_duration = *o.d_max;
  if (o.separation) {
    s.separation = *o.separation;
    if (!o.noise_sigma) s.noise_sigma = s.separation / 8.0;
  }
  if (o.noise_sigma) s.noise_sigma = *o.noise_sigma;
  s.transition = o.transition == "uniform" ? ACTSEQ_TRANSITION_UNIFORM : ACTSEQ_TRANSITION_NO_REPEAT;
  return s;
}

actseq_train_config train_config(const Options& o) {
  actseq_train_config c;
  if (o.desk_scale) {
    actseq_train_config_desk(&c);
  } else {
    actseq_train_config_full(&c);
  }
  c.seed = o.seed;
  if (o.hidden_dim) c.hidden_dim = *o.hidden_dim;
  if (o.embedding_dim) c.embedding_dim = *o.embedding_dim;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.learning_rate) c.learning_rate = *o.learning_rate;
  if (o.teacher_forcing) c.teacher_forcing_prob = *o.teacher_forcing;
  c.per_step_forcing = o.per_step_forcing;
  if (o.patience) c.patience = *o.patience;
  if (o.clip_norm) c.clip_norm = *o.clip_norm;
  if (o.baseline_layers) c.baseline_layers = *o.baseline_layers;
  if (o.max_decode_len) c.max_decode_len = *o.max_decode_len;
  if (o.workers) c.workers = *o.workers;
  return c;
}

actseq_target target_of(const Options& o) {
  return o.target == "caption" ? ACTSEQ_TARGET_CAPTION : ACTSEQ_TARGET_ACTIONS;
}

std::string need(const std::string& value, const char* flag) {
  if (value.empty()) throw CommandError(std::string(flag) + " is required for this command");
  return value;
}

fs::path out_dir(const Options& o) {
  const fs::path dir = need(o.out, "--out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CommandError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void load_split(const Options& o, const std::string& split, Dataset& d) {
  const fs::path p = fs::path(need(o.data, "--data")) / (split + ".json");
  check(actseq_dataset_load(p.string().c_str(), d.out()), "loading " + p.string());
}

// Decode cap: explicit flag, else derived from the training split like the
// trainer's own default.
std::uint64_t decode_len(const Options& o, actseq_target target) {
  if (o.max_decode_len) return *o.max_decode_len;
  Dataset train;
  load_split(o, "train", train);
  std::uint64_t n = 0;
  check(actseq_dataset_decode_len(train.get(), target, &n), "decode length");
  return n;
}

void print_epoch(const char* phase, const actseq_epoch* e, void*) {
  std::fprintf(stderr, "%s epoch %llu train_loss %.6f val_loss %.6f val_bleu1 %.2f\n", phase,
               static_cast<unsigned long long>(e->epoch), e->train_loss, e->val_loss, e->val_bleu1);
}

// One JSON object per line: {"metric", "value", "count"}.
class Records {
 public:
  void add(const std::string& metric, double value, std::uint64_t count) {
    nlohmann::ordered_json j;
    j["metric"] = metric;
    j["value"] = value;
    j["count"] = count;
    lines_.push_back(j.dump());
  }
  void emit(const Options& o) const {
    for (const auto& l : lines_) std::cout << l << '\n';
    if (o.out.empty()) return;
    std::ofstream f(out_dir(o) / "metrics.jsonl", std::ios::binary);
    if (!f) throw CommandError("cannot write metrics.jsonl");
    for (const auto& l : lines_) f << l << '\n';
  }

 private:
  std::vector<std::string> lines_;
};

int cmd_gen_data(const Options& o) {
  const auto spec = synth_spec(o);
  const fs::path dir = out_dir(o);
  const std::pair<const char*, std::uint64_t> splits[] = {
      {"train", o.train_size}, {"val", o.val_size}, {"test", o.test_size}};
  std::uint64_t first = 0;
  for (const auto& [name, count] : splits) {
    Dataset d;
    check(actseq_dataset_generate(&spec, count, first, d.out()), std::string("generating ") + name);
    const fs::path p = dir / (std::string(name) + ".json");
    check(actseq_dataset_save(d.get(), p.string().c_str()), "writing " + p.string());
    if (first == 0) {
      check(actseq_dataset_save_vocab(d.get(), (dir / "actions.vocab").string().c_str(),
                                      (dir / "words.vocab").string().c_str()),
            "writing vocabularies");
    }
    first += count;
  }
  std::cerr << "wrote " << o.train_size << "/" << o.val_size << "/" << o.test_size << " samples to "
            << dir.string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const auto cfg = train_config(o);
  Dataset train, val;
  load_split(o, "train", train);
  load_split(o, "val", val);
  actseq_variant v;
  check(actseq_parse_variant(o.variant.c_str(), &v), "variant");
  const fs::path dir = out_dir(o);
  Model m;
  check(actseq_model_train(v, target_of(o), &cfg, train.get(), val.get(),
                           (dir / "loss.csv").string().c_str(), print_epoch, nullptr, m.out()),
        "training");
  check(actseq_model_save(m.get(), (dir / "model.ckpt").string().c_str()), "saving model");
  return 0;
}

int cmd_eval(const Options& o) {
  const auto target = target_of(o);
  Dataset data;
  load_split(o, o.split, data);
  Model m;
  check(actseq_model_load(need(o.model, "--model").c_str(), m.out()), "loading model");
  const auto len = decode_len(o, target);
  actseq_report r;
  check(actseq_model_evaluate(m.get(), data.get(), target, len, &r), "evaluation");
  Records rec;
  if (target == ACTSEQ_TARGET_ACTIONS) {
    rec.add("BLEU-1", r.bleu[0], r.count);
    rec.add("BLEU-2", r.bleu[1], r.count);
    rec.add("seq-item-accuracy", r.accuracy, r.count);
  } else {
    for (int n = 0; n < 4; ++n) rec.add("BLEU-" + std::to_string(n + 1), r.bleu[n], r.count);
    rec.add("ROUGE-L", r.rouge_l, r.count);
  }
  rec.emit(o);
  if (!o.out.empty()) {
    check(actseq_model_write_predictions(m.get(), data.get(), target, len,
                                         (out_dir(o) / "predictions.txt").string().c_str()),
          "writing predictions");
  }
  return 0;
}

int cmd_caption(const Options& o) {
  Dataset data;
  load_split(o, o.split, data);
  Pipeline p;
  if (!o.pipeline.empty()) {
    check(actseq_pipeline_load(o.pipeline.c_str(), p.out()), "loading pipeline");
  } else {
    const fs::path dir = out_dir(o);
    Dataset train, val;
    load_split(o, "train", train);
    load_split(o, "val", val);
    const auto c1 = train_config(o);
    auto cj = c1;
    if (o.joint_epochs) cj.epochs = *o.joint_epochs;
    cj.max_decode_len = 0;
    Model stage1;
    if (!o.stage1.empty()) check(actseq_model_load(o.stage1.c_str(), stage1.out()), "loading stage 1");
    check(actseq_pipeline_train(stage1.get(), &c1, &cj, o.normalize_scores, train.get(), val.get(),
                                (dir / "stage1_loss.csv").string().c_str(),
                                (dir / "joint_loss.csv").string().c_str(), print_epoch, nullptr,
                                p.out()),
          "training pipeline");
    check(actseq_pipeline_save(p.get(), (dir / "pipeline.ckpt").string().c_str()), "saving pipeline");
  }
  actseq_report r;
  check(actseq_pipeline_evaluate(p.get(), data.get(), &r), "evaluation");
  Records rec;
  for (int n = 0; n < 4; ++n) rec.add("BLEU-" + std::to_string(n + 1), r.bleu[n], r.count);
  rec.add("ROUGE-L", r.rouge_l, r.count);
  rec.emit(o);
  if (!o.out.empty()) {
    check(actseq_pipeline_write_captions(p.get(), data.get(), (out_dir(o) / "captions.txt").string().c_str()),
          "writing captions");
  }
  return 0;
}

int cmd_localize(const Options& o) {
  Dataset data;
  load_split(o, o.split, data);
  Model m;
  check(actseq_model_load(need(o.model, "--model").c_str(), m.out()), "loading model");
  const auto len = decode_len(o, ACTSEQ_TARGET_ACTIONS);
  const auto rule =
      o.rule == "nearest-step" ? ACTSEQ_LOCALIZE_NEAREST_STEP : ACTSEQ_LOCALIZE_ATTENTION_MASS;
  std::string grids;
  if (!o.out.empty()) grids = (out_dir(o) / "grids.txt").string();
  actseq_localization_report r;
  check(actseq_localize(m.get(), data.get(), len, rule, o.seed, grids.empty() ? nullptr : grids.c_str(), &r),
        "localization");
  Records rec;
  rec.add("frame-mAP", r.map, r.videos);
  rec.add("shuffled-frame-mAP", r.shuffled_map, r.videos);
  rec.emit(o);
  return 0;
}

struct GradState {
  bool failed = false;
};

void print_case(const char* name, std::uint64_t params, double err, void* user) {
  const bool ok = err < 1e-4;
  if (!ok) static_cast<GradState*>(user)->failed = true;
  std::printf("%-26s params %5llu  max_rel_error %.3e  %s\n", name,
              static_cast<unsigned long long>(params), err, ok ? "ok" : "FAIL");
}

int cmd_grad_check(const Options& o) {
  GradState st;
  double worst = 0.0;
  check(actseq_grad_check(o.seed, print_case, &st, &worst), "gradient check");
  std::printf("worst %.3e\n", worst);
  if (st.failed) {
    std::cerr << "error: gradient check exceeded 1e-4\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature-sequence to action-sequence translation"};
  app.set_config("--config", "", "INI or TOML file of option=value pairs");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);
  Options o;
  add_options(app, o);

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Command commands[] = {
      {"gen-data", "Write seeded synthetic train/val/test splits", cmd_gen_data},
      {"train", "Train a model and write model.ckpt and loss.csv", cmd_train},
      {"eval", "Score a checkpoint on a split", cmd_eval},
      {"caption", "Train or evaluate the two-stage caption pipeline", cmd_caption},
      {"localize", "Attention-based frame localization and mAP", cmd_localize},
      {"grad-check", "Finite-difference check of all backward passes", cmd_grad_check},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) subs.push_back(app.add_subcommand(c.name, c.help));

  CLI11_PARSE(app, argc, argv);
  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) return commands[i].run(o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
