#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "unirnnt/model/transducer.hpp"

namespace unirnnt {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

inline constexpr const char* kCheckpointMagic = "UNIRNNT-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

/// Training state persisted next to the parameters.
struct TrainingState {
  std::uint64_t step = 0;
  std::uint64_t optimizer_steps = 0;
  GradientSet<float> adam_m;  // empty when no optimizer state is stored
  GradientSet<float> adam_v;
};

/// Layout:
///   line 1  "UNIRNNT-CHECKPOINT"
///   line 2  JSON header {format_version, config, step, optimizer_steps,
///           optimizer_state, tensors:[{name, shape}]}
///   then    raw little-endian float32 blobs: parameters in declaration
///           order, followed by Adam first and second moments if stored.
inline void save_checkpoint(const std::filesystem::path& path, const Transducer<float>& model,
                            const TrainingState* state = nullptr) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = model.config();
  header["step"] = state ? state->step : 0;
  header["optimizer_steps"] = state ? state->optimizer_steps : 0;
  const bool with_opt = state && !state->adam_m.empty();
  header["optimizer_state"] = with_opt;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto& p : model.params()) tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("IoError", "cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  auto write_blob = [&out](const Tensor<float>& t) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  };
  for (const auto& p : model.params()) write_blob(p.value);
  if (with_opt) {
    for (const auto& t : state->adam_m) write_blob(t);
    for (const auto& t : state->adam_v) write_blob(t);
  }
  if (!out) fail("IoError", "short write to " + path.string());
}

/// Loads a checkpoint. With `expected`, the stored config must match it
/// exactly ("VersionMismatch" otherwise).
inline Transducer<float> load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr,
                                         TrainingState* state = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("IoError", "cannot open checkpoint " + path.string());
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kCheckpointMagic) fail("CorruptCheckpoint", "bad magic");
  if (!std::getline(in, header_line)) fail("CorruptCheckpoint", "missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail("CorruptCheckpoint", std::string("header: ") + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointVersion)
    fail("VersionMismatch", "format version " + header.value("format_version", nlohmann::json(-1)).dump());
  ModelConfig cfg;
  try {
    cfg = header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail("CorruptCheckpoint", std::string("config: ") + e.what());
  }
  if (expected && !(*expected == cfg))
    fail("VersionMismatch", "checkpoint config " + nlohmann::json(cfg).dump() + " differs from expected " +
                                nlohmann::json(*expected).dump());

  Transducer<float> model(cfg);
  const auto& tensors = header.at("tensors");
  if (tensors.size() != model.params().size()) fail("CorruptCheckpoint", "tensor count");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].at("name") != model.params()[i].name ||
        tensors[i].at("shape").get<Shape>() != model.params()[i].value.shape())
      fail("CorruptCheckpoint", "tensor table entry " + std::to_string(i));
  }
  const bool with_opt = header.value("optimizer_state", false);

  auto read_blob = [&in](Tensor<float>& t) {
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(float)))
      fail("CorruptCheckpoint", "truncated tensor data");
  };
  for (auto& p : model.params()) read_blob(p.value);
  TrainingState local;
  if (with_opt) {
    local.adam_m = zeros_like(model.params());
    local.adam_v = zeros_like(model.params());
    for (auto& t : local.adam_m) read_blob(t);
    for (auto& t : local.adam_v) read_blob(t);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail("CorruptCheckpoint", "trailing bytes");
  if (state) {
    local.step = header.value("step", std::uint64_t{0});
    local.optimizer_steps = header.value("optimizer_steps", std::uint64_t{0});
    *state = std::move(local);
  }
  return model;
}

}  // namespace unirnnt
