#pragma once

#include <span>
#include <vector>

#include "unirnnt/consistency/mcr.hpp"
#include "unirnnt/lattice/rnnt_loss.hpp"
#include "unirnnt/numerics/tape.hpp"

namespace unirnnt {

/// Transducer loss of one utterance as a tape node. `logits` is the joint
/// output [T * (U+1), V]. The analytic gradient is produced in the forward
/// pass and kept for backward.
template <typename T>
Var rnnt_loss_node(Tape<T>& tape, Var logits, std::size_t frames, std::vector<int> targets,
                   int blank_id = kBlankId) {
  const Tensor<T>& z = tape.value(logits);
  const std::size_t u1 = targets.size() + 1, vocab = z.cols();
  if (z.rows() != frames * u1) fail("ShapeMismatch", "joint rows != T * (U+1)");
  const LatticeView<T> lat{z.data(), frames, targets.size(), vocab, u1 * vocab, vocab};
  std::vector<T> grad;
  if (tape.recording() && tape.wants_grad(logits)) grad.assign(z.size(), T(0));
  const T loss = rnnt_utterance_loss<T>(lat, targets, blank_id, grad.empty() ? nullptr : grad.data());
  return tape.record(Tensor<T>(Shape{1}, loss), {logits}, [&tape, logits, grad = std::move(grad)](const Tensor<T>& g) {
    Tensor<T>& gz = tape.grad(logits);
    for (std::size_t i = 0; i < grad.size(); ++i) gz[i] += g[0] * grad[i];
  });
}

/// Mode-consistency loss of one utterance (sum over its T·(U+1) cells
/// divided by the cell count) as a tape node. Nothing beyond the scalar is
/// kept; backward recomputes the per-cell softmaxes from the logits.
template <typename T>
Var mcr_node(Tape<T>& tape, Var z_off, Var z_str, std::size_t frames, std::vector<int> targets,
             const MCRConfig& cfg, int blank_id = kBlankId) {
  const Tensor<T>& zo = tape.value(z_off);
  const Tensor<T>& zs = tape.value(z_str);
  if (zo.shape() != zs.shape()) fail("ModeShapeMismatch", "offline/streaming joint shapes");
  const std::size_t labels = targets.size(), u1 = labels + 1, vocab = zo.cols();
  if (zo.rows() != frames * u1) fail("ShapeMismatch", "joint rows != T * (U+1)");
  const LatticeView<T> off{zo.data(), frames, labels, vocab, u1 * vocab, vocab};
  const LatticeView<T> str{zs.data(), frames, labels, vocab, u1 * vocab, vocab};
  const T cells = T(frames * u1);
  const T loss = mcr_utterance_sum<T>(off, str, targets, blank_id, cfg) / cells;
  return tape.record(Tensor<T>(Shape{1}, loss), {z_off, z_str},
                     [&tape, z_off, z_str, frames, labels, vocab, u1, cells, cfg, blank_id,
                      targets = std::move(targets)](const Tensor<T>& g) {
                       if (g[0] == T(0)) return;
                       const Tensor<T>& zo = tape.value(z_off);
                       const Tensor<T>& zs = tape.value(z_str);
                       const LatticeView<T> off{zo.data(), frames, labels, vocab, u1 * vocab, vocab};
                       const LatticeView<T> str{zs.data(), frames, labels, vocab, u1 * vocab, vocab};
                       T* go = tape.wants_grad(z_off) ? tape.grad(z_off).data() : nullptr;
                       T* gs = tape.wants_grad(z_str) ? tape.grad(z_str).data() : nullptr;
                       mcr_utterance_backward<T>(off, str, targets, blank_id, cfg, g[0] / cells, go, gs);
                     });
}

}  // namespace unirnnt
