#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "unirnnt/corpus/corpus.hpp"
#include "unirnnt/decoding/greedy.hpp"
#include "unirnnt/decoding/ter.hpp"
#include "unirnnt/numerics/parallel.hpp"

namespace unirnnt {

/// One decoding condition: offline when `spec` is empty.
struct EvalCondition {
  std::optional<ContextSpec> spec;

  bool offline() const noexcept { return !spec.has_value(); }
};

struct UtteranceScore {
  std::string id;
  std::size_t errors = 0;
  std::size_t ref_len = 0;
  std::size_t hyp_len = 0;
  double ter = 0.0;
};

struct ConditionScore {
  EvalCondition condition;
  double latency_s = 0.0;
  double ter = 0.0;  // corpus-level: total edits / total reference tokens
  std::vector<UtteranceScore> utterances;
};

template <typename T>
DecodeResult decode(const Transducer<T>& model, const Tensor<T>& features, const EvalCondition& c, double frame_ms,
                    const StreamingOptions& opts = {}) {
  if (c.offline()) return greedy_decode_offline(model, features, opts.greedy);
  return greedy_decode_streaming(model, features, *c.spec, frame_ms, opts);
}

template <typename T>
ConditionScore evaluate_condition(const Transducer<T>& model, const std::vector<Utterance>& utts,
                                  const EvalCondition& c, double frame_ms, std::size_t threads = 1,
                                  const StreamingOptions& opts = {}) {
  ConditionScore out;
  out.condition = c;
  out.latency_s = c.offline() ? 0.0 : latency_of(*c.spec, frame_ms);
  out.utterances.resize(utts.size());
  parallel_for(utts.size(), threads, [&](std::size_t i) {
    const auto feats = utts[i].features.template cast<T>();
    const DecodeResult r = decode(model, feats, c, frame_ms, opts);
    UtteranceScore& s = out.utterances[i];
    s.id = utts[i].id;
    s.errors = edit_distance(r.tokens, utts[i].tokens);
    s.ref_len = utts[i].tokens.size();
    s.hyp_len = r.tokens.size();
    s.ter = token_error_rate(r.tokens, utts[i].tokens);
  });
  std::size_t errors = 0, ref = 0;
  for (const auto& s : out.utterances) {
    errors += s.errors;
    ref += s.ref_len;
  }
  out.ter = double(errors) / double(std::max<std::size_t>(1, ref));
  return out;
}

/// Offline first, then streaming conditions by latency descending (ties
/// keep their given order).
template <typename T>
std::vector<ConditionScore> evaluate(const Transducer<T>& model, const std::vector<Utterance>& utts,
                                     std::vector<ContextSpec> specs, double frame_ms, std::size_t threads = 1,
                                     const StreamingOptions& opts = {}) {
  std::stable_sort(specs.begin(), specs.end(), [](const ContextSpec& a, const ContextSpec& b) {
    return a.chunk + a.right > b.chunk + b.right;
  });
  std::vector<ConditionScore> out;
  out.push_back(evaluate_condition(model, utts, EvalCondition{}, frame_ms, threads, opts));
  for (const auto& s : specs) out.push_back(evaluate_condition(model, utts, EvalCondition{s}, frame_ms, threads, opts));
  return out;
}

}  // namespace unirnnt
