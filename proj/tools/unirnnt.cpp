// Command-line front end. Run `unirnnt <verb> --help` for per-verb options.

#include <CLI11.hpp>
#include <iostream>

#include "unirnnt/cli/commands.hpp"
#include "unirnnt/consistency/alloc_counter.hpp"

UNIRNNT_INSTALL_ALLOCATION_COUNTER();

namespace {

using namespace unirnnt;
using namespace unirnnt::cli;

std::vector<ContextSpec> parse_specs(const std::vector<std::string>& items, std::size_t left) {
  std::vector<ContextSpec> out;
  for (const auto& s : items) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) fail("ConfigError", "latency '" + s + "' must be CHUNK:RIGHT");
    try {
      out.push_back(ContextSpec{left, std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))});
    } catch (const std::logic_error&) {
      fail("ConfigError", "latency '" + s + "' must be CHUNK:RIGHT");
    }
  }
  return out;
}

const char* kSchemas = R"(Outputs (all under --out DIR):
  gen-data       DIR/data/{train,eval}/manifest.jsonl, one JSON record per line:
                 {"id","path","frames","tokens"}; features are raw little-endian
                 float32, row-major [frames, feat_dim], in DIR/data/*/feats/.
  train          DIR/metrics.jsonl, one JSON record per step:
                 {step, lr, mode, loss, spec?, loss_off?, loss_str?, loss_mcr?,
                 grad_norm, wall_ms}; DIR/checkpoint.bin; DIR/config.resolved.json.
  eval           DIR/eval.csv: mode,chunk_s,right_s,latency_s,ter
                 (offline row first, then latency descending);
                 DIR/eval_utterances.csv: id,mode,chunk_s,right_s,latency_s,ter,tokens.
  sweep-latency  DIR/sweep.csv: budget_s,chunk_s,right_s,ter.
  bench-mcr      stdout (and DIR/bench_mcr.json with --out): aux_bytes_fused,
                 aux_bytes_naive, ratio, wall_ms_fused, wall_ms_naive, loss_*.
  report         DIR/report.md.
Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O error.
UNIFY_RNNT_THREADS caps worker threads.)";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified offline/streaming transducer training with mode-consistency regularization"};
  app.footer(kSchemas);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate the synthetic train and eval corpora");
  g->add_option("--config", gen.config, "Experiment config (JSON)")->required();
  g->add_option("--out", gen.out, "Output directory (default: config out_dir)");
  g->add_option("--seed", gen.seed, "Override data.seed");

  TrainArgs tr;
  bool full_grad = false;
  auto* t = app.add_subcommand("train", "Train one strategy");
  t->add_option("--config", tr.config, "Experiment config (JSON)")->required();
  t->add_option("--out", tr.out, "Run directory (default: config out_dir)");
  t->add_option("--data", tr.data, "Corpus directory with train/manifest.jsonl (default: OUT/data)");
  t->add_flag("--resume", tr.resume, "Continue from OUT/checkpoint.bin");
  t->add_flag("--mcr-full-grad", full_grad, "Differentiate through both sides of the consistency term");
  t->add_option("--steps", tr.steps, "Override train.steps");
  t->add_option("--seed", tr.seed, "Override train.seed");
  t->add_option("--threads", tr.threads, "Worker threads (capped by UNIFY_RNNT_THREADS)");

  EvalArgs ev;
  std::vector<std::string> latencies;
  auto* e = app.add_subcommand("eval", "Decode offline and at each latency spec; write TER CSVs");
  e->add_option("--config", ev.config, "Experiment config (JSON)")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint (default: OUT/checkpoint.bin)");
  e->add_option("--manifest", ev.manifest, "Eval manifest (default: OUT/data/eval/manifest.jsonl)");
  e->add_option("--out", ev.out, "Output directory (default: config out_dir)");
  e->add_option("--latency", latencies, "CHUNK:RIGHT in encoder frames (repeatable; default: eval.latencies)");
  e->add_option("--threads", ev.threads, "Worker threads (capped by UNIFY_RNNT_THREADS)");
  e->add_option("--extra-left-margin", ev.extra_left_margin, "Extra encoder frames re-encoded left of each window");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep-latency", "TER for every chunk/right split of each latency budget");
  s->add_option("--config", sw.config, "Experiment config (JSON)")->required();
  s->add_option("--checkpoint", sw.checkpoint, "Checkpoint (default: OUT/checkpoint.bin)");
  s->add_option("--manifest", sw.manifest, "Eval manifest (default: OUT/data/eval/manifest.jsonl)");
  s->add_option("--out", sw.out, "Output directory (default: config out_dir)");
  s->add_option("--budget", sw.budgets, "Budget C+R in encoder frames (repeatable; default: eval.budgets)");
  s->add_option("--threads", sw.threads, "Worker threads (capped by UNIFY_RNNT_THREADS)");

  BenchArgs bn;
  std::string direction = "symmetric";
  auto* b = app.add_subcommand("bench-mcr", "Peak auxiliary memory and time: fused vs materialized consistency loss");
  b->add_option("--batch", bn.shape.batch, "B")->capture_default_str();
  b->add_option("--frames", bn.shape.frames, "T")->capture_default_str();
  b->add_option("--labels", bn.shape.labels, "U")->capture_default_str();
  b->add_option("--vocab", bn.shape.vocab, "V")->capture_default_str();
  b->add_option("--tile", bn.mcr.tile, "Vocabulary tile for the online softmax")->capture_default_str();
  b->add_option("--direction", direction, "offline_teacher | streaming_teacher | symmetric")->capture_default_str();
  b->add_option("--seed", bn.seed, "Logit seed")->capture_default_str();
  b->add_option("--out", bn.out, "Also write OUT/bench_mcr.json");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Summarize a run directory into report.md");
  r->add_option("--out", rp.out, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : kConfigError;
  }

  if (g->parsed()) return cmd_gen_data(gen, std::cout, std::cerr);
  if (t->parsed()) {
    if (full_grad) tr.mcr_full_grad = true;
    return cmd_train(tr, std::cout, std::cerr);
  }
  if (e->parsed()) {
    return guarded(std::cerr, [&] {
      if (!latencies.empty()) ev.specs = parse_specs(latencies, load_experiment(ev.config).eval.left);
      return cmd_eval(ev, std::cout, std::cerr);
    });
  }
  if (s->parsed()) return cmd_sweep_latency(sw, std::cout, std::cerr);
  if (b->parsed()) {
    return guarded(std::cerr, [&] {
      bn.mcr.direction = parse_direction(direction);
      return cmd_bench_mcr(bn, std::cout, std::cerr);
    });
  }
  if (r->parsed()) return cmd_report(rp, std::cout, std::cerr);
  return kConfigError;
}
