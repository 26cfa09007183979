// Trains a small dual-mode model with the consistency term for a few hundred
// steps, then decodes one held-out set offline and at two latencies.

#include <cstdio>

#include "unirnnt/unirnnt.hpp"

int main() {
  using namespace unirnnt;

  CorpusConfig corpus;
  corpus.seed = 1;
  const auto train = generate_utterances(corpus, 2000);
  corpus.seed = 2;
  const auto held_out = generate_utterances(corpus, 50);

  ModelConfig mc;
  mc.feat_dim = corpus.feat_dim;
  mc.vocab_size = corpus.n_symbols + 1;
  Transducer<float> model(mc);

  TrainConfig tc;
  tc.strategy = Strategy::dual_mode;
  tc.context_sets = ContextSets{{70}, {1, 2, 4}, {0, 1, 2, 4}};
  tc.schedule = LrSchedule{300, 30, 5e-3, 1e-5};
  tc.batch_size = 8;
  Trainer<float> trainer(model, tc);
  for (std::size_t i = 0; i < tc.schedule.steps; ++i) {
    const StepReport r = trainer.step(train);
    if (r.step % 50 == 0)
      std::printf("step %4zu  loss %.3f  (offline %.3f, streaming %.3f, consistency %.4f)\n", r.step, r.loss,
                  r.loss_off, r.loss_str, r.loss_mcr);
  }

  for (const auto& row : evaluate(model, held_out, {{70, 1, 0}, {70, 2, 2}}, 80.0)) {
    if (row.condition.offline())
      std::printf("offline            TER %.3f\n", row.ter);
    else
      std::printf("C=%zu R=%zu (%.2f s)  TER %.3f\n", row.condition.spec->chunk, row.condition.spec->right,
                  row.latency_s, row.ter);
  }
}
