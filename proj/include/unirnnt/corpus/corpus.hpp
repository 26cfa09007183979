#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "unirnnt/error.hpp"
#include "unirnnt/numerics/tensor.hpp"

namespace unirnnt {

/// Synthetic transduction corpus. Each symbol occupies a run of frames whose
/// feature is (1 - γ)·base(symbol) + γ·signature(previous symbol) + noise,
/// and a short tail after the last symbol carries γ·signature(last). The
/// first `ambiguous_pairs` pairs of symbols share one base embedding, so a
/// member of such a pair can only be told apart by the frames that follow
/// it: recognising it needs right context.
struct CorpusConfig {
  std::size_t n_symbols = 16;
  std::size_t feat_dim = 16;
  std::size_t min_duration = 1;
  std::size_t max_duration = 4;
  std::size_t min_length = 4;
  std::size_t max_length = 12;
  double coarticulation = 0.4;
  double noise_sigma = 0.3;
  std::size_t ambiguous_pairs = 4;
  std::size_t tail_frames = 2;
  double embedding_scale = 1.0;  // per-entry std of the symbol embeddings
  std::uint64_t embedding_seed = 1234;
  std::uint64_t seed = 0;

  void validate() const {
    if (min_duration < 1 || max_duration < min_duration) fail("ConfigError", "durations");
    if (min_length < 1 || max_length < min_length) fail("ConfigError", "utterance length bounds");
    if (!(coarticulation >= 0.0 && coarticulation < 1.0)) fail("ConfigError", "coarticulation must be in [0,1)");
    if (ambiguous_pairs * 2 > n_symbols) fail("ConfigError", "too many ambiguous pairs");
    if (n_symbols < 1 || feat_dim < 1) fail("ConfigError", "n_symbols and feat_dim must be positive");
    if (noise_sigma < 0) fail("ConfigError", "noise_sigma must be >= 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CorpusConfig, n_symbols, feat_dim, min_duration, max_duration,
                                                min_length, max_length, coarticulation, noise_sigma,
                                                ambiguous_pairs, tail_frames, embedding_scale, embedding_seed,
                                                seed)

struct Utterance {
  std::string id;
  Tensor<float> features;  // [frames, feat_dim]
  std::vector<int> tokens;
  std::vector<std::size_t> durations;  // per token; empty when loaded from disk
};

/// Symbol embedding tables shared by every corpus drawn with the same
/// embedding_seed. Row 0 is unused (blank).
class SymbolInventory {
 public:
  explicit SymbolInventory(const CorpusConfig& cfg)
      : feat_dim_(cfg.feat_dim),
        base_(Shape{cfg.n_symbols + 1, cfg.feat_dim}),
        signature_(Shape{cfg.n_symbols + 1, cfg.feat_dim}) {
    std::mt19937_64 rng(cfg.embedding_seed);
    std::normal_distribution<double> n(0.0, cfg.embedding_scale);
    for (std::size_t s = 1; s <= cfg.n_symbols; ++s)
      for (std::size_t c = 0; c < feat_dim_; ++c) base_(s, c) = static_cast<float>(n(rng));
    for (std::size_t s = 1; s <= cfg.n_symbols; ++s)
      for (std::size_t c = 0; c < feat_dim_; ++c) signature_(s, c) = static_cast<float>(n(rng));
    for (std::size_t p = 0; p < cfg.ambiguous_pairs; ++p)
      for (std::size_t c = 0; c < feat_dim_; ++c) base_(2 * p + 2, c) = base_(2 * p + 1, c);
  }

  std::span<const float> base(int symbol) const { return base_.row(static_cast<std::size_t>(symbol)); }
  std::span<const float> signature(int symbol) const { return signature_.row(static_cast<std::size_t>(symbol)); }

  /// Member of an ambiguous pair (shares its base embedding).
  static bool is_ambiguous(int symbol, const CorpusConfig& cfg) {
    return symbol >= 1 && static_cast<std::size_t>(symbol) <= 2 * cfg.ambiguous_pairs;
  }

 private:
  std::size_t feat_dim_;
  Tensor<float> base_;
  Tensor<float> signature_;
};

template <typename Rng>
Utterance generate_utterance(Rng& rng, const CorpusConfig& cfg, const SymbolInventory& inv, std::string id) {
  std::uniform_int_distribution<std::size_t> len_d(cfg.min_length, cfg.max_length);
  std::uniform_int_distribution<int> sym_d(1, static_cast<int>(cfg.n_symbols));
  std::uniform_int_distribution<std::size_t> dur_d(cfg.min_duration, cfg.max_duration);
  std::normal_distribution<double> noise(0.0, 1.0);

  Utterance u;
  u.id = std::move(id);
  const std::size_t len = len_d(rng);
  for (std::size_t i = 0; i < len; ++i) u.tokens.push_back(sym_d(rng));
  for (std::size_t i = 0; i < len; ++i) u.durations.push_back(dur_d(rng));
  std::size_t frames = cfg.tail_frames;
  for (auto d : u.durations) frames += d;

  const auto g = static_cast<float>(cfg.coarticulation);
  const auto sigma = static_cast<float>(cfg.noise_sigma);
  u.features = Tensor<float>(Shape{frames, cfg.feat_dim});
  std::size_t t = 0;
  for (std::size_t i = 0; i <= len; ++i) {
    const bool tail = i == len;
    const std::size_t dur = tail ? cfg.tail_frames : u.durations[i];
    for (std::size_t k = 0; k < dur; ++k, ++t) {
      for (std::size_t c = 0; c < cfg.feat_dim; ++c) {
        float v = tail ? 0.0f : (1.0f - g) * inv.base(u.tokens[i])[c];
        if (i > 0) v += g * inv.signature(u.tokens[i - 1])[c];
        u.features(t, c) = v + sigma * static_cast<float>(noise(rng));
      }
    }
  }
  return u;
}

inline std::string utterance_id(std::uint64_t seed, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "s%llu-%06zu", static_cast<unsigned long long>(seed), index);
  return buf;
}

/// Draws `n` utterances from one rng stream seeded by cfg.seed.
inline std::vector<Utterance> generate_utterances(const CorpusConfig& cfg, std::size_t n) {
  cfg.validate();
  const SymbolInventory inv(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<Utterance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_utterance(rng, cfg, inv, utterance_id(cfg.seed, i)));
  return out;
}

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Writes `dir/manifest.jsonl` plus `dir/feats/<id>.f32` (raw float32,
/// row-major [frames, feat_dim]). Manifest paths are relative to `dir`.
inline std::filesystem::path write_corpus(const std::vector<Utterance>& utts, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "feats", ec);
  if (ec) fail("Unwritable", dir.string() + ": " + ec.message());
  const fs::path manifest = dir / kManifestName;
  std::ofstream m(manifest, std::ios::trunc);
  if (!m) fail("Unwritable", manifest.string());
  for (const auto& u : utts) {
    const std::string rel = "feats/" + u.id + ".f32";
    std::ofstream f(dir / rel, std::ios::binary | std::ios::trunc);
    if (!f) fail("Unwritable", (dir / rel).string());
    f.write(reinterpret_cast<const char*>(u.features.data()),
            static_cast<std::streamsize>(u.features.size() * sizeof(float)));
    if (!f) fail("Unwritable", (dir / rel).string());
    nlohmann::json rec{{"id", u.id}, {"path", rel}, {"frames", u.features.rows()}, {"tokens", u.tokens}};
    m << rec.dump() << '\n';
  }
  if (!m) fail("Unwritable", manifest.string());
  return manifest;
}

inline std::filesystem::path generate_corpus(const CorpusConfig& cfg, std::size_t n, const std::filesystem::path& dir) {
  if (n < 1) fail("ConfigError", "corpus size must be >= 1");
  return write_corpus(generate_utterances(cfg, n), dir);
}

/// Reads a manifest in file order, validating each feature file's size
/// against the declared frame count.
inline std::vector<Utterance> load_manifest(const std::filesystem::path& manifest, std::size_t feat_dim) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest);
  if (!in) fail("MissingManifest", manifest.string());
  const fs::path root = manifest.parent_path();
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail("ManifestMismatch", "line " + std::to_string(line_no) + ": " + e.what());
    }
    Utterance u;
    u.id = rec.at("id").get<std::string>();
    u.tokens = rec.at("tokens").get<std::vector<int>>();
    const auto frames = rec.at("frames").get<std::size_t>();
    fs::path p = rec.at("path").get<std::string>();
    if (p.is_relative()) p = root / p;
    std::error_code ec;
    const auto bytes = fs::file_size(p, ec);
    if (ec) fail("MissingFeatureFile", u.id + ": " + p.string());
    if (bytes != frames * feat_dim * sizeof(float))
      fail("ManifestMismatch", u.id + ": declares " + std::to_string(frames) + " frames, file holds " +
                                   std::to_string(bytes / sizeof(float)) + " floats");
    u.features = Tensor<float>(Shape{frames, feat_dim});
    std::ifstream f(p, std::ios::binary);
    f.read(reinterpret_cast<char*>(u.features.data()), static_cast<std::streamsize>(bytes));
    if (!f) fail("MissingFeatureFile", u.id + ": read failed");
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace unirnnt
