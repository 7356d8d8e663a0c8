#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xsum/tensor.hpp"

namespace xsum {

/// Word- and frame-level features plus their mean-pooled document/video
/// vectors for one document/video pair.
struct EmbeddedPair {
  Tensor2 text_low;    // n×d
  Tensor2 video_low;   // m×d
  Tensor2 text_high;   // 1×d, column mean of text_low
  Tensor2 video_high;  // 1×d, column mean of video_low
  std::vector<std::string> tokens;
  std::optional<std::size_t> gt_frame;
  std::optional<std::vector<std::size_t>> gt_sentence;

  std::size_t n_words() const { return text_low.rows(); }
  std::size_t m_frames() const { return video_low.rows(); }
  std::size_t dim() const { return text_low.cols(); }

  /// Throws IngestionError when shapes, pooled vectors or ground truth are inconsistent.
  void validate() const;
};

/// Mean over rows; 1×d.
Tensor2 pool_high(const Tensor2& low);

/// Scales each row to unit L2 norm (zero rows are left as they are).
Tensor2 normalize_rows(const Tensor2& x);

/// Raw (pre-encoding) pair: word tokens and frame descriptors.
struct RawPair {
  std::vector<std::string> tokens;
  std::vector<std::string> frames;
  std::optional<std::size_t> gt_frame;
  std::optional<std::vector<std::size_t>> gt_sentence;
};

class EncoderInterface {
 public:
  virtual ~EncoderInterface() = default;
  virtual Tensor2 encode_text(const RawPair& raw) const = 0;
  virtual Tensor2 encode_video(const RawPair& raw) const = 0;
};

/// Deterministic stand-in for a pretrained encoder: every token or frame
/// descriptor maps to a seeded Gaussian vector.
class SyntheticEncoder final : public EncoderInterface {
 public:
  SyntheticEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}
  Tensor2 encode_text(const RawPair& raw) const override;
  Tensor2 encode_video(const RawPair& raw) const override;

 private:
  Tensor2 encode(const std::vector<std::string>& items, const char* prefix) const;
  std::size_t dim_;
  std::uint64_t seed_;
};

/// Serves embeddings that were computed elsewhere (e.g. loaded from a file).
class PrecomputedEncoder final : public EncoderInterface {
 public:
  PrecomputedEncoder(Tensor2 text, Tensor2 video) : text_(std::move(text)), video_(std::move(video)) {}
  Tensor2 encode_text(const RawPair&) const override { return text_; }
  Tensor2 encode_video(const RawPair&) const override { return video_; }

 private:
  Tensor2 text_, video_;
};

/// Runs the encoder, L2-normalizes rows and pools the high-level vectors.
EmbeddedPair encode_pair(const RawPair& raw, const EncoderInterface& encoder);

struct SynthConfig {
  std::size_t n_words = 20;
  std::size_t m_frames = 12;
  std::size_t d = 64;
  std::size_t shared_signal_dim = 16;
  double noise_scale = 0.1;
  std::uint64_t seed = 7;
  std::size_t sentence_words = 0;  // 0: max(1, n_words / 5)
  std::size_t distractors = 3;     // distractor directions per modality and pair

  void validate() const;
  std::size_t effective_sentence_words() const;
};

/// Planted-signal corpus. Each pair hides one shared unit direction in a
/// single frame (gt_frame) and a contiguous word span (gt_sentence); all
/// other rows are per-modality distractor directions, orthogonal to the
/// shared subspace when d allows. Noise has expected norm ≈ noise_scale.
std::vector<EmbeddedPair> synth_corpus(const SynthConfig& cfg, std::size_t size);

// Plain-text record format: header `XSUM1 n m d`, n text rows, m video rows,
// `GT frame=<int|-> words=<comma list|->`, then the n tokens on one line.
void write_record(std::ostream& os, const EmbeddedPair& pair);
EmbeddedPair read_record(std::istream& is);
void save_record(const std::filesystem::path& path, const EmbeddedPair& pair);
EmbeddedPair load_record(const std::filesystem::path& path);

/// Writes `pair_NNNNN.xsum` files plus `manifest.txt` into `dir`.
void save_corpus(const std::filesystem::path& dir, const std::vector<EmbeddedPair>& corpus);
std::vector<EmbeddedPair> load_corpus(const std::filesystem::path& dir);

}  // namespace xsum
