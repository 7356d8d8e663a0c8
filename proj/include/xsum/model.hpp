#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xsum/autodiff.hpp"
#include "xsum/decode.hpp"
#include "xsum/embed.hpp"
#include "xsum/fusion.hpp"
#include "xsum/lm.hpp"
#include "xsum/loss.hpp"
#include "xsum/nfdt.hpp"
#include "xsum/ot.hpp"

namespace xsum {

/// How the shared-information rows are chosen.
enum class Selector {
  TopK,    // Gumbel-softmax scores, hard top-k, straight-through gradients
  All,     // no selection: every row of both modalities is pooled
  Random,  // seeded uniform choice of k rows per modality
  Cosine,  // rows ranked by cosine similarity to the other modality's pooled feature
};

Selector parse_selector(const std::string& s);
std::string to_string(Selector s);

struct ModelConfig {
  std::size_t d = 64;
  fusion::StackConfig stack{2, 4, 64, 128};
  bool positional = true;
  std::size_t max_len = 128;
  double tau = 0.5;
  double k_ratio = 0.5;
  bool gumbel_noise = true;  // sample noise during training; evaluation is always noise-free
  bool use_gate = true;
  Selector selector = Selector::TopK;
  std::size_t max_words = 10;
  decode::OrderMode order = decode::OrderMode::Score;
  double residual_scale = 0.1;
  ot::SinkhornOptions sinkhorn{};
  bool debias = true;  // subtract the entropic self-transport terms
  loss::LossWeights weights{};

  void validate() const;
  /// Architecture fields only; a checkpoint must match these to load.
  std::string fingerprint() const;
};

/// Hard choices and noise captured from one forward pass so that repeated
/// evaluations (finite differences) see exactly the same discrete path.
struct SelectionFreeze {
  Tensor2 noise_text, noise_video;
  std::vector<std::size_t> text_indices, video_indices;
  Tensor2 probs_text_ref, probs_video_ref;
  std::vector<std::size_t> word_indices;
};

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // Gumbel noise and the random selector
  const LmInterface* lm = nullptr;
  const SelectionFreeze* freeze = nullptr;
  SelectionFreeze* capture = nullptr;
  bool compute_loss = true;
};

struct ForwardResult {
  Var probs_text, probs_video;  // Gumbel-softmax scores (n×1, m×1); unset unless TopK
  nfdt::SharedInfoSet shared;
  Var gate_text, gate_video;
  Var clean_text, clean_video;
  Var text_ctx, video_ctx;
  Var multimodal;
  Var text_out, video_out;
  Var word_probs, frame_probs;
  Var text_summary, video_summary;  // decoder-probability-weighted input embeddings, 1×d
  loss::LossVars terms;
  double slor = 0.0;
  Var total;
  decode::SummaryPair summary;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  std::vector<Parameter*> parameters();
  std::size_t parameter_count();

  ForwardResult forward(Tape& tape, const EmbeddedPair& pair, const ForwardOptions& opts);
  /// Noise-free decoding; `rng` only matters for the random selector.
  decode::SummaryPair summarize(const EmbeddedPair& pair, Rng* rng = nullptr);

  nfdt::NfdtParams nfdt;
  Parameter pos_text, pos_video;
  fusion::TransformerStack text_stack, video_stack;
  fusion::CrossAttention v2t, t2v;
  Affine fuse_head;
  fusion::TransformerStack guide_text, guide_video;
  Affine word_head, frame_head;

 private:
  ModelConfig cfg_;
};

}  // namespace xsum
