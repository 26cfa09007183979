#pragma once

#include <cstdint>
#include <json.hpp>
#include <string>

#include "unirnnt/error.hpp"
#include "unirnnt/streaming/context.hpp"

namespace unirnnt {

struct ModelConfig {
  std::size_t feat_dim = 16;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t blocks = 2;
  std::size_t conv_kernel = 9;
  std::size_t subsample_factor = 2;
  std::size_t vocab_size = 18;  // includes blank at id 0
  std::size_t predictor_dim = 64;
  std::size_t joint_dim = 64;
  std::uint64_t seed = 0;

  void validate() const {
    if (conv_kernel % 2 == 0) fail("EvenKernel", "conv_kernel must be odd");
    if (vocab_size < 2) fail("ConfigError", "vocab_size must be >= 2");
    if (blocks < 1) fail("ConfigError", "blocks must be >= 1");
    if (heads == 0 || model_dim % heads != 0) fail("ConfigError", "model_dim must divide by heads");
    if (subsample_factor < 1 || feat_dim < 1 || predictor_dim < 1 || joint_dim < 1)
      fail("ConfigError", "dimensions must be positive");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, feat_dim, model_dim, heads, blocks, conv_kernel,
                                                subsample_factor, vocab_size, predictor_dim, joint_dim,
                                                seed)

/// Offline (full context) or streaming (chunk-limited) encoder mode. Both
/// read the same parameters.
struct Mode {
  bool streaming = false;
  ContextSpec spec{};
  ConvRightMode conv_right_mode = ConvRightMode::real;
  // Global frame index of the first encoder frame (decode windows).
  std::size_t origin = 0;

  static Mode offline() { return {}; }
  static Mode streaming_with(ContextSpec spec, ConvRightMode right = ConvRightMode::real,
                             std::size_t origin = 0) {
    return {true, spec, right, origin};
  }
};

}  // namespace unirnnt
