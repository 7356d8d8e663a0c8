#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "xsum/embed.hpp"
#include "xsum/metrics.hpp"
#include "xsum/model.hpp"
#include "xsum/train.hpp"

namespace xsum {

/// Everything a CLI command needs. Subsystem seeds (corpus, init, noise)
/// are derived from `seed` by named streams.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t corpus_size = 200;
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  EvalSettings eval;
  std::filesystem::path corpus_dir;  // empty: `<out>/corpus`
  std::filesystem::path checkpoint;  // eval input; empty: last checkpoint under `<out>`
  std::vector<std::string> variants;
  std::vector<double> ratios{0.25, 0.5, 0.75, 1.0};

  std::uint64_t corpus_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t noise_seed() const;

  /// Copies derived seeds and shared dimensions into the sub-configs and
  /// validates all of them.
  void finalize();
};

/// Flat `section.key=value` lines; `#` starts a comment. Unknown keys and
/// malformed values raise ConfigError naming the key and accepted values.
RunConfig parse_config(std::istream& is);
RunConfig load_config(const std::filesystem::path& path);
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();

}  // namespace xsum
