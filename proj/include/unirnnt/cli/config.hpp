#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "unirnnt/corpus/corpus.hpp"
#include "unirnnt/model/config.hpp"
#include "unirnnt/training/trainer.hpp"

namespace unirnnt::cli {

struct DataConfig {
  CorpusConfig corpus{};
  std::size_t train_size = 40000;
  std::size_t eval_size = 200;
  std::uint64_t eval_seed = 9999;
};

struct EvalConfig {
  double frame_ms = 80.0;
  std::size_t left = 70;
  std::vector<ContextSpec> specs;     // eval latency list, as [C, R] pairs
  std::vector<std::size_t> budgets;   // sweep budgets in frames (C + R)
  std::size_t extra_left_margin = 0;
  ConvRightMode conv_right_mode = ConvRightMode::real;
};

/// Strategy names accepted in configs: offline, streaming, sm, dm, dm_mcr.
/// "dm" is dual-mode with the consistency term switched off.
struct ExperimentConfig {
  std::string out_dir = "runs/default";
  std::string strategy = "dm_mcr";
  DataConfig data{};
  ModelConfig model{};
  TrainConfig train{};
  std::string precision = "f32";
  std::size_t checkpoint_every = 500;
  EvalConfig eval{};

  /// Trainer config with the strategy name folded in.
  TrainConfig resolved_train() const {
    TrainConfig t = train;
    t.strategy = parse_strategy(strategy);
    if (strategy == "dm") t.mcr.lambda = 0.0;
    return t;
  }

  void validate() const {
    if (strategy != "offline" && strategy != "streaming" && strategy != "sm" && strategy != "dm" &&
        strategy != "dm_mcr")
      fail("ConfigError", "strategy must be one of offline, streaming, sm, dm, dm_mcr");
    if (precision != "f32") fail("ConfigError", "command-line training runs in f32 (precision: \"f32\")");
    data.corpus.validate();
    if (data.train_size < 1 || data.eval_size < 1) fail("ConfigError", "corpus sizes must be >= 1");
    model.validate();
    if (model.feat_dim != data.corpus.feat_dim) fail("ConfigError", "model.feat_dim != data.feat_dim");
    if (model.vocab_size < data.corpus.n_symbols + 1) fail("ConfigError", "model.vocab_size must be >= n_symbols + 1");
    resolved_train().validate();
    if (!(eval.frame_ms > 0)) fail("ConfigError", "eval.frame_ms must be > 0");
    for (const auto& s : eval.specs) s.validate();
    for (auto b : eval.budgets)
      if (b < 1) fail("ConfigError", "latency budgets must be >= 1 frame");
  }
};

namespace config_detail {

using nlohmann::json;

template <typename V>
void get_opt(const json& j, const char* key, V& v) {
  if (j.contains(key)) v = j.at(key).get<V>();
}

inline void known_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) fail("ConfigError", where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) fail("ConfigError", "unknown key '" + it.key() + "' in " + where);
  }
}

inline std::vector<ContextSpec> specs_from(const json& j, std::size_t left) {
  std::vector<ContextSpec> out;
  for (const auto& e : j) {
    const auto v = e.get<std::vector<std::size_t>>();
    if (v.size() != 2) fail("ConfigError", "latency entries are [chunk, right] pairs");
    out.push_back(ContextSpec{left, v[0], v[1]});
  }
  return out;
}

inline void read_train(const json& j, ExperimentConfig& c) {
  known_keys(j,
             {"alpha", "p_off", "mcr", "context_sets", "conv_right_mode", "steps", "warmup_steps", "max_lr", "min_lr",
              "batch_size", "seed", "precision", "grad_clip", "threads", "weight_decay", "checkpoint_every"},
             "train");
  TrainConfig& t = c.train;
  get_opt(j, "alpha", t.mode_weights.alpha);
  get_opt(j, "p_off", t.mode_weights.p_off);
  if (j.contains("mcr")) {
    const auto& m = j.at("mcr");
    known_keys(m, {"lambda", "direction", "variant", "tile", "full_grad"}, "train.mcr");
    get_opt(m, "lambda", t.mcr.lambda);
    if (m.contains("direction")) t.mcr.direction = parse_direction(m.at("direction").get<std::string>());
    if (m.contains("variant")) t.mcr.variant = parse_variant(m.at("variant").get<std::string>());
    get_opt(m, "tile", t.mcr.tile);
    get_opt(m, "full_grad", t.mcr.full_grad);
  }
  if (j.contains("context_sets")) {
    const auto sets = j.at("context_sets").get<std::vector<std::vector<std::size_t>>>();
    if (sets.size() != 3) fail("ConfigError", "context_sets is [[L...], [C...], [R...]]");
    t.context_sets = ContextSets{sets[0], sets[1], sets[2]};
  }
  if (j.contains("conv_right_mode")) t.conv_right_mode = parse_conv_right_mode(j.at("conv_right_mode").get<std::string>());
  get_opt(j, "steps", t.schedule.steps);
  get_opt(j, "warmup_steps", t.schedule.warmup_steps);
  get_opt(j, "max_lr", t.schedule.max_lr);
  get_opt(j, "min_lr", t.schedule.min_lr);
  get_opt(j, "batch_size", t.batch_size);
  get_opt(j, "seed", t.seed);
  get_opt(j, "grad_clip", t.grad_clip);
  get_opt(j, "threads", t.threads);
  get_opt(j, "weight_decay", t.optimizer.weight_decay);
  get_opt(j, "precision", c.precision);
  get_opt(j, "checkpoint_every", c.checkpoint_every);
}

}  // namespace config_detail

/// Parses an experiment config. Every key is optional; unknown keys are
/// rejected so typos surface as config errors.
inline ExperimentConfig parse_experiment(const nlohmann::json& j) {
  using namespace config_detail;
  ExperimentConfig c;
  try {
    known_keys(j, {"out_dir", "strategy", "data", "model", "train", "eval"}, "config");
    get_opt(j, "out_dir", c.out_dir);
    get_opt(j, "strategy", c.strategy);
    if (j.contains("data")) {
      json d = j.at("data");
      get_opt(d, "train_size", c.data.train_size);
      get_opt(d, "eval_size", c.data.eval_size);
      get_opt(d, "eval_seed", c.data.eval_seed);
      d.erase("train_size");
      d.erase("eval_size");
      d.erase("eval_seed");
      known_keys(d,
                 {"n_symbols", "feat_dim", "min_duration", "max_duration", "min_length", "max_length",
                  "coarticulation", "noise_sigma", "ambiguous_pairs", "tail_frames", "embedding_scale",
                  "embedding_seed", "seed"},
                 "data");
      c.data.corpus = d.get<CorpusConfig>();
    }
    // Feature width follows the corpus unless set explicitly.
    c.model.feat_dim = c.data.corpus.feat_dim;
    if (j.contains("model")) {
      json m = nlohmann::json(c.model);
      m.update(j.at("model"));
      known_keys(j.at("model"),
                 {"feat_dim", "model_dim", "heads", "blocks", "conv_kernel", "subsample_factor", "vocab_size",
                  "predictor_dim", "joint_dim", "seed"},
                 "model");
      c.model = m.get<ModelConfig>();
    }
    if (j.contains("train")) read_train(j.at("train"), c);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      known_keys(e, {"frame_ms", "left", "latencies", "budgets", "extra_left_margin", "conv_right_mode"}, "eval");
      get_opt(e, "frame_ms", c.eval.frame_ms);
      get_opt(e, "left", c.eval.left);
      if (e.contains("latencies")) c.eval.specs = specs_from(e.at("latencies"), c.eval.left);
      get_opt(e, "budgets", c.eval.budgets);
      get_opt(e, "extra_left_margin", c.eval.extra_left_margin);
      if (e.contains("conv_right_mode")) c.eval.conv_right_mode = parse_conv_right_mode(e.at("conv_right_mode").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail("ConfigError", e.what());
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("ConfigError", "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail("ConfigError", path.string() + ": " + e.what());
  }
  return parse_experiment(j);
}

/// Echo of the effective settings, written next to run outputs.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  const TrainConfig& t = c.train;
  nlohmann::json specs = nlohmann::json::array();
  for (const auto& s : c.eval.specs) specs.push_back({s.chunk, s.right});
  nlohmann::json d = c.data.corpus;
  d["train_size"] = c.data.train_size;
  d["eval_size"] = c.data.eval_size;
  d["eval_seed"] = c.data.eval_seed;
  return {
      {"out_dir", c.out_dir},
      {"strategy", c.strategy},
      {"data", d},
      {"model", c.model},
      {"train",
       {{"alpha", t.mode_weights.alpha},
        {"p_off", t.mode_weights.p_off},
        {"mcr",
         {{"lambda", t.mcr.lambda},
          {"direction", to_string(t.mcr.direction)},
          {"variant", to_string(t.mcr.variant)},
          {"tile", t.mcr.tile},
          {"full_grad", t.mcr.full_grad}}},
        {"context_sets", {t.context_sets.left, t.context_sets.chunk, t.context_sets.right}},
        {"conv_right_mode", to_string(t.conv_right_mode)},
        {"steps", t.schedule.steps},
        {"warmup_steps", t.schedule.warmup_steps},
        {"max_lr", t.schedule.max_lr},
        {"min_lr", t.schedule.min_lr},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"precision", c.precision},
        {"grad_clip", t.grad_clip},
        {"threads", t.threads},
        {"weight_decay", t.optimizer.weight_decay},
        {"checkpoint_every", c.checkpoint_every}}},
      {"eval",
       {{"frame_ms", c.eval.frame_ms},
        {"left", c.eval.left},
        {"latencies", specs},
        {"budgets", c.eval.budgets},
        {"extra_left_margin", c.eval.extra_left_margin},
        {"conv_right_mode", to_string(c.eval.conv_right_mode)}}},
  };
}

}  // namespace unirnnt::cli
