#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xsum/embed.hpp"
#include "xsum/lm.hpp"
#include "xsum/model.hpp"
#include "xsum/optim.hpp"

namespace xsum {

struct TrainConfig {
  AdamWConfig optim;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;

  void validate() const;
};

/// Per-epoch means over all training pairs; l_f is the fluency loss −SLOR.
struct TraceRow {
  std::size_t epoch = 0;
  double l_t = 0.0, l_v = 0.0, l_o = 0.0, l_f = 0.0, total = 0.0;

  bool operator==(const TraceRow&) const = default;
};

/// `epoch,L_T,L_V,L_O,L_f,total` lines, full double precision.
void write_trace(std::ostream& os, const std::vector<TraceRow>& trace);
std::vector<TraceRow> read_trace(std::istream& is);

struct Checkpoint {
  std::string fingerprint;
  std::size_t epoch = 0;
  std::vector<std::pair<std::string, Tensor2>> params;
  AdamWState optim;
  std::string rng_state;
  std::vector<TraceRow> trace;
};

// Binary layout: magic `XSUMCKPT1`, then little-endian u64 counts/shapes and
// IEEE-754 doubles; strings are u64-length-prefixed.
void write_checkpoint(std::ostream& os, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint snapshot(Model& model, const AdamWState& optim, std::size_t epoch, const Rng& rng,
                    const std::vector<TraceRow>& trace);
/// Copies weights into `model`; VersionError if the architecture differs.
void restore(Model& model, const Checkpoint& ck);

/// Bigram LM over every token sequence in the corpus.
BigramLm corpus_language_model(const std::vector<EmbeddedPair>& corpus);

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  const Checkpoint* resume = nullptr;
  std::function<void(const TraceRow&)> on_epoch;
};

struct FitResult {
  std::vector<TraceRow> trace;
  AdamWState optim;
  std::string rng_state;
};

/// Mini-batch AdamW on the unsupervised objective. Batch gradients are the
/// mean of per-pair gradients, clipped to `clip_norm`. A checkpoint is
/// written after every epoch when a directory is given.
FitResult fit(Model& model, const std::vector<EmbeddedPair>& data, const TrainConfig& cfg,
              const LmInterface& lm, const FitOptions& opts = {});

std::string checkpoint_name(std::size_t epoch);

}  // namespace xsum
