#pragma once

#include "unirnnt/error.hpp"
#include "unirnnt/numerics/tensor.hpp"
#include "unirnnt/numerics/log_softmax.hpp"
#include "unirnnt/numerics/tape.hpp"
#include "unirnnt/numerics/ops.hpp"
#include "unirnnt/numerics/parallel.hpp"
#include "unirnnt/lattice/joint_logits.hpp"
#include "unirnnt/lattice/rnnt_loss.hpp"
#include "unirnnt/lattice/bruteforce.hpp"
#include "unirnnt/consistency/mcr.hpp"
#include "unirnnt/consistency/mcr_naive.hpp"
#include "unirnnt/streaming/context.hpp"
#include "unirnnt/model/config.hpp"
#include "unirnnt/model/transducer.hpp"
#include "unirnnt/model/checkpoint.hpp"
#include "unirnnt/decoding/ter.hpp"
#include "unirnnt/decoding/greedy.hpp"
#include "unirnnt/decoding/evaluate.hpp"
#include "unirnnt/corpus/corpus.hpp"
#include "unirnnt/training/optimizer.hpp"
#include "unirnnt/training/schedule.hpp"
#include "unirnnt/training/loss_nodes.hpp"
#include "unirnnt/training/trainer.hpp"
