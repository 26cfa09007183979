#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unirnnt/cli/config.hpp"
#include "unirnnt/consistency/memory_probe.hpp"
#include "unirnnt/decoding/evaluate.hpp"
#include "unirnnt/model/checkpoint.hpp"
#include "unirnnt/training/trainer.hpp"

namespace unirnnt::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalError = 3, kIoError = 4 };

/// Maps library error codes onto process exit codes.
inline int exit_code_for(const Error& e) {
  const std::string& c = e.code();
  if (c == "NonFiniteLoss" || c == "NonFiniteInput") return kNumericalError;
  if (c == "IoError" || c == "MissingManifest" || c == "MissingFeatureFile" || c == "ManifestMismatch" ||
      c == "CorruptCheckpoint" || c == "OutputLocked")
    return kIoError;
  return kConfigError;  // config, shape and validation errors, including Unwritable
}

/// Exclusive ownership of an output directory for one process: creates
/// DIR/.lock and removes it on destruction.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail("Unwritable", dir.string() + ": " + ec.message());
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      if (fs::exists(path_)) fail("OutputLocked", "another process owns " + dir.string() + " (" + path_.string() + ")");
      fail("Unwritable", dir.string());
    }
    std::fclose(f);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

/// Runs `body`, translating errors into exit codes and a one-line
/// diagnostic on `err`.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    std::string msg = e.what();
    if (e.code() == "Unwritable") msg = "unwritable: " + msg;
    err << "error: " << msg << '\n';
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

inline std::string fmt(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline fs::path train_manifest(const fs::path& data_dir) { return data_dir / "train" / kManifestName; }
inline fs::path eval_manifest(const fs::path& data_dir) { return data_dir / "eval" / kManifestName; }
inline fs::path checkpoint_path(const fs::path& out) { return out / "checkpoint.bin"; }

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  fs::path config;
  fs::path out;                       // defaults to the config's out_dir
  std::optional<std::uint64_t> seed;  // overrides data.seed
};

/// Writes OUT/data/train and OUT/data/eval corpora.
inline int cmd_gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_experiment(a.config);
    if (a.seed) cfg.data.corpus.seed = *a.seed;
    const fs::path dir = a.out.empty() ? fs::path(cfg.out_dir) : a.out;
    OutputLock lock(dir);
    CorpusConfig train = cfg.data.corpus;
    CorpusConfig eval = cfg.data.corpus;
    eval.seed = cfg.data.eval_seed;
    if (eval.seed == train.seed) fail("ConfigError", "data.eval_seed must differ from data.seed");
    const auto tm = generate_corpus(train, cfg.data.train_size, dir / "data" / "train");
    const auto em = generate_corpus(eval, cfg.data.eval_size, dir / "data" / "eval");
    out << "train manifest: " << tm.string() << " (" << cfg.data.train_size << " utterances)\n";
    out << "eval manifest: " << em.string() << " (" << cfg.data.eval_size << " utterances)\n";
    return kOk;
  });
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  fs::path config;
  fs::path out;
  fs::path data;  // directory holding train/manifest.jsonl; defaults to OUT/data
  bool resume = false;
  std::optional<bool> mcr_full_grad;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

inline nlohmann::json metrics_record(const StepReport& r) {
  nlohmann::json j{{"step", r.step}, {"lr", r.lr}, {"mode", r.mode}, {"loss", r.loss}};
  if (r.mode != "offline") j["spec"] = {r.spec.left, r.spec.chunk, r.spec.right};
  if (r.mode != "streaming") j["loss_off"] = r.loss_off;
  if (r.mode != "offline") j["loss_str"] = r.loss_str;
  if (r.mode == "dual") j["loss_mcr"] = r.loss_mcr;
  j["grad_norm"] = r.grad_norm;
  j["wall_ms"] = r.wall_ms;
  return j;
}

template <typename T>
TrainingState capture_state(Trainer<T>& tr) {
  TrainingState s;
  s.step = tr.step_count();
  s.optimizer_steps = tr.optimizer().steps();
  s.adam_m = tr.optimizer().first_moment();
  s.adam_v = tr.optimizer().second_moment();
  return s;
}

/// Trains the configured strategy, appending one JSON record per step to
/// OUT/metrics.jsonl and saving OUT/checkpoint.bin periodically and at the
/// end. With `resume`, continues from the checkpoint's step count.
inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_experiment(a.config);
    if (a.mcr_full_grad) cfg.train.mcr.full_grad = *a.mcr_full_grad;
    if (a.steps) cfg.train.schedule.steps = *a.steps;
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.threads) cfg.train.threads = *a.threads;
    cfg.train.threads = resolve_threads(cfg.train.threads);
    cfg.validate();
    const fs::path dir = a.out.empty() ? fs::path(cfg.out_dir) : a.out;
    OutputLock lock(dir);
    const fs::path data = a.data.empty() ? dir / "data" : a.data;
    const auto corpus = load_manifest(train_manifest(data), cfg.data.corpus.feat_dim);
    if (corpus.empty()) fail("ConfigError", "training manifest is empty");

    const TrainConfig tc = cfg.resolved_train();
    std::optional<Transducer<float>> model;
    TrainingState state;
    if (a.resume) {
      model.emplace(load_checkpoint(checkpoint_path(dir), &cfg.model, &state));
    } else {
      model.emplace(cfg.model);
    }
    Trainer<float> trainer(*model, tc);
    if (a.resume) {
      trainer.set_step_count(state.step);
      if (!state.adam_m.empty()) trainer.optimizer().restore(state.adam_m, state.adam_v, state.optimizer_steps);
    }
    {
      std::ofstream echo(dir / "config.resolved.json", std::ios::trunc);
      if (!echo) fail("Unwritable", (dir / "config.resolved.json").string());
      echo << to_json(cfg).dump(2) << '\n';
    }
    std::ofstream log(dir / "metrics.jsonl", a.resume ? std::ios::app : std::ios::trunc);
    if (!log) fail("Unwritable", (dir / "metrics.jsonl").string());

    const std::size_t total = tc.schedule.steps;
    out << "training " << cfg.strategy << " from step " << trainer.step_count() << " to " << total << '\n';
    while (trainer.step_count() < total) {
      StepReport r;
      try {
        r = trainer.step(corpus);
      } catch (const Error& e) {
        if (e.code() == "NonFiniteLoss") {
          err << "error: non-finite loss at step " << trainer.step_count() + 1 << '\n';
          return int(kNumericalError);
        }
        throw;
      }
      log << metrics_record(r).dump() << '\n';
      if (cfg.checkpoint_every > 0 && r.step % cfg.checkpoint_every == 0 && r.step < total) {
        const TrainingState s = capture_state(trainer);
        save_checkpoint(checkpoint_path(dir), *model, &s);
      }
    }
    log.flush();
    if (!log) fail("IoError", "metrics log write failed");
    const TrainingState s = capture_state(trainer);
    save_checkpoint(checkpoint_path(dir), *model, &s);
    out << "checkpoint: " << checkpoint_path(dir).string() << " (step " << s.step << ")\n";
    return int(kOk);
  });
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  fs::path config;
  fs::path checkpoint;
  fs::path manifest;
  fs::path out;
  std::vector<ContextSpec> specs;  // overrides eval.latencies when non-empty
  std::optional<std::size_t> threads;
  std::optional<std::size_t> extra_left_margin;
};

inline StreamingOptions streaming_options(const ExperimentConfig& cfg) {
  StreamingOptions o;
  o.conv_right_mode = cfg.eval.conv_right_mode;
  o.extra_left_margin = cfg.eval.extra_left_margin;
  return o;
}

inline std::string mode_label(const EvalCondition& c) {
  if (c.offline()) return "offline";
  return "streaming";
}

/// Writes OUT/eval.csv (mode,chunk_s,right_s,latency_s,ter; offline first,
/// then latency descending) and OUT/eval_utterances.csv
/// (id,mode,chunk_s,right_s,latency_s,ter,tokens).
inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_experiment(a.config);
    if (a.extra_left_margin) cfg.eval.extra_left_margin = *a.extra_left_margin;
    const fs::path dir = a.out.empty() ? fs::path(cfg.out_dir) : a.out;
    OutputLock lock(dir);
    const fs::path ckpt = a.checkpoint.empty() ? checkpoint_path(dir) : a.checkpoint;
    const fs::path manifest = a.manifest.empty() ? eval_manifest(dir / "data") : a.manifest;
    const Transducer<float> model = load_checkpoint(ckpt, &cfg.model);
    const auto utts = load_manifest(manifest, cfg.model.feat_dim);
    const auto specs = a.specs.empty() ? cfg.eval.specs : a.specs;
    const std::size_t threads = resolve_threads(a.threads.value_or(cfg.train.threads));
    const auto rows = evaluate(model, utts, specs, cfg.eval.frame_ms, threads, streaming_options(cfg));

    const double f = cfg.eval.frame_ms / 1000.0;
    std::ofstream csv(dir / "eval.csv", std::ios::trunc);
    std::ofstream per(dir / "eval_utterances.csv", std::ios::trunc);
    if (!csv || !per) fail("Unwritable", dir.string());
    csv << "mode,chunk_s,right_s,latency_s,ter\n";
    per << "id,mode,chunk_s,right_s,latency_s,ter,tokens\n";
    for (const auto& r : rows) {
      const std::string chunk = r.condition.offline() ? "" : fmt(double(r.condition.spec->chunk) * f, 3);
      const std::string right = r.condition.offline() ? "" : fmt(double(r.condition.spec->right) * f, 3);
      const std::string line = mode_label(r.condition) + "," + chunk + "," + right + "," + fmt(r.latency_s, 3);
      csv << line << ',' << fmt(r.ter) << '\n';
      out << line << ',' << fmt(r.ter) << '\n';
      for (const auto& u : r.utterances)
        per << u.id << ',' << mode_label(r.condition) << ',' << chunk << ',' << right << ',' << fmt(r.latency_s, 3)
            << ',' << fmt(u.ter) << ',' << u.hyp_len << '\n';
    }
    if (!csv || !per) fail("IoError", "eval CSV write failed");
    return int(kOk);
  });
}

// ----------------------------------------------------------- sweep-latency

struct SweepArgs {
  fs::path config;
  fs::path checkpoint;
  fs::path manifest;
  fs::path out;
  std::vector<std::size_t> budgets;  // frames; overrides eval.budgets
  std::optional<std::size_t> threads;
};

struct SweepRow {
  std::size_t budget = 0;
  std::size_t chunk = 0;
  std::size_t right = 0;
  double ter = 0;
};

/// Every split C + R = budget with C >= 1, in budget order then C ascending.
template <typename T>
std::vector<SweepRow> sweep_latency(const Transducer<T>& model, const std::vector<Utterance>& utts,
                                    const std::vector<std::size_t>& budgets, std::size_t left, double frame_ms,
                                    std::size_t threads, const StreamingOptions& opts = {}) {
  std::vector<SweepRow> rows;
  for (auto b : budgets) {
    if (b < 1) fail("ConfigError", "latency budgets must be >= 1 frame");
    for (std::size_t c = 1; c <= b; ++c) {
      const ContextSpec spec{left, c, b - c};
      const auto s = evaluate_condition(model, utts, EvalCondition{spec}, frame_ms, threads, opts);
      rows.push_back({b, c, b - c, s.ter});
    }
  }
  return rows;
}

/// Writes OUT/sweep.csv (budget_s,chunk_s,right_s,ter).
inline int cmd_sweep_latency(const SweepArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_experiment(a.config);
    const fs::path dir = a.out.empty() ? fs::path(cfg.out_dir) : a.out;
    OutputLock lock(dir);
    const fs::path ckpt = a.checkpoint.empty() ? checkpoint_path(dir) : a.checkpoint;
    const fs::path manifest = a.manifest.empty() ? eval_manifest(dir / "data") : a.manifest;
    const Transducer<float> model = load_checkpoint(ckpt, &cfg.model);
    const auto utts = load_manifest(manifest, cfg.model.feat_dim);
    const auto budgets = a.budgets.empty() ? cfg.eval.budgets : a.budgets;
    if (budgets.empty()) fail("ConfigError", "no latency budgets given");
    const std::size_t threads = resolve_threads(a.threads.value_or(cfg.train.threads));
    const auto rows =
        sweep_latency(model, utts, budgets, cfg.eval.left, cfg.eval.frame_ms, threads, streaming_options(cfg));
    const double f = cfg.eval.frame_ms / 1000.0;
    std::ofstream csv(dir / "sweep.csv", std::ios::trunc);
    if (!csv) fail("Unwritable", (dir / "sweep.csv").string());
    csv << "budget_s,chunk_s,right_s,ter\n";
    for (const auto& r : rows) {
      const std::string line = fmt(double(r.budget) * f, 3) + "," + fmt(double(r.chunk) * f, 3) + "," +
                               fmt(double(r.right) * f, 3) + "," + fmt(r.ter);
      csv << line << '\n';
      out << line << '\n';
    }
    if (!csv) fail("IoError", "sweep CSV write failed");
    return int(kOk);
  });
}

// --------------------------------------------------------------- bench-mcr

struct BenchArgs {
  ProbeShape shape{};
  MCRConfig mcr{};
  std::uint64_t seed = 0;
  fs::path out;  // optional: also writes OUT/bench_mcr.json
};

/// Prints {aux_bytes_fused, aux_bytes_naive, ratio, wall_ms_fused,
/// wall_ms_naive, loss_fused, loss_naive} as one JSON object. Requires the
/// allocation counter to be installed in the binary.
inline int cmd_bench_mcr(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    a.mcr.validate();
    const auto r = mcr_memory_probe<double>(a.shape, a.mcr, a.seed);
    nlohmann::json j{{"batch", a.shape.batch},
                     {"frames", a.shape.frames},
                     {"labels", a.shape.labels},
                     {"vocab", a.shape.vocab},
                     {"tile", a.mcr.tile},
                     {"aux_bytes_fused", r.aux_bytes_fused},
                     {"aux_bytes_naive", r.aux_bytes_naive},
                     {"ratio", r.ratio()},
                     {"wall_ms_fused", r.wall_ms_fused},
                     {"wall_ms_naive", r.wall_ms_naive},
                     {"loss_fused", r.loss_fused},
                     {"loss_naive", r.loss_naive},
                     {"max_grad_diff", r.max_grad_diff}};
    out << j.dump() << '\n';
    if (!a.out.empty()) {
      OutputLock lock(a.out);
      std::ofstream f(a.out / "bench_mcr.json", std::ios::trunc);
      if (!f) fail("Unwritable", (a.out / "bench_mcr.json").string());
      f << j.dump(2) << '\n';
    }
    return int(kOk);
  });
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  fs::path out;
};

inline std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline void markdown_table(std::ostream& md, const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return;
  auto emit = [&md](const std::vector<std::string>& r) {
    md << '|';
    for (const auto& c : r) md << ' ' << c << " |";
    md << '\n';
  };
  emit(rows[0]);
  md << '|';
  for (std::size_t i = 0; i < rows[0].size(); ++i) md << " --- |";
  md << '\n';
  for (std::size_t i = 1; i < rows.size(); ++i) emit(rows[i]);
}

/// Collects whatever of metrics.jsonl, eval.csv, sweep.csv and
/// bench_mcr.json exists under OUT into OUT/report.md.
inline int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::is_directory(a.out)) fail("IoError", "no such run directory " + a.out.string());
    OutputLock lock(a.out);
    std::ostringstream md;
    md << "# Run report: " << a.out.filename().string() << "\n\n";
    bool any = false;
    if (fs::exists(a.out / "metrics.jsonl")) {
      std::ifstream in(a.out / "metrics.jsonl");
      std::string line;
      std::size_t n = 0;
      nlohmann::json first, last;
      double wall = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (n == 0) first = j;
        last = j;
        wall += j.value("wall_ms", 0.0);
        ++n;
      }
      if (n > 0) {
        any = true;
        md << "## Training\n\n"
           << "- steps logged: " << n << "\n- loss at step " << first["step"] << ": " << fmt(first["loss"], 4)
           << "\n- loss at step " << last["step"] << ": " << fmt(last["loss"], 4)
           << "\n- total step time: " << fmt(wall / 1000.0, 1) << " s\n\n";
      }
    }
    if (fs::exists(a.out / "eval.csv")) {
      any = true;
      md << "## Evaluation\n\n";
      markdown_table(md, read_csv(a.out / "eval.csv"));
      md << '\n';
    }
    if (fs::exists(a.out / "sweep.csv")) {
      any = true;
      md << "## Latency sweep\n\n";
      markdown_table(md, read_csv(a.out / "sweep.csv"));
      md << '\n';
    }
    if (fs::exists(a.out / "bench_mcr.json")) {
      any = true;
      std::ifstream in(a.out / "bench_mcr.json");
      const auto j = nlohmann::json::parse(in);
      md << "## Consistency-loss memory\n\n"
         << "- fused auxiliary bytes: " << j["aux_bytes_fused"] << "\n- naive auxiliary bytes: " << j["aux_bytes_naive"]
         << "\n- ratio: " << fmt(j["ratio"], 5) << "\n\n";
    }
    if (!any) fail("IoError", "nothing to report in " + a.out.string());
    std::ofstream f(a.out / "report.md", std::ios::trunc);
    if (!f) fail("Unwritable", (a.out / "report.md").string());
    f << md.str();
    out << md.str();
    return int(kOk);
  });
}

}  // namespace unirnnt::cli
