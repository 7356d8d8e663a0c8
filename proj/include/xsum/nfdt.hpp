#pragma once

#include <optional>
#include <span>
#include <vector>

#include "xsum/autodiff.hpp"
#include "xsum/rng.hpp"

namespace xsum {

struct EmbeddedPair;

namespace nfdt {

inline constexpr double kUniformClamp = 1e-12;

struct SalienceScores {
  Tensor2 text_scores;   // n×1
  Tensor2 video_scores;  // m×1
};

struct SharedInfoSet {
  Tensor2 selected_rows;  // 2k×d: k text rows then k frame rows
  std::vector<std::size_t> text_indices;
  std::vector<std::size_t> video_indices;
  Tensor2 pooled;  // 1×d
};

struct GatePair {
  Tensor2 text_gate;   // n×d
  Tensor2 video_gate;  // m×d
};

struct NfdtParams {
  Affine score_text;   // d→1
  Affine score_video;  // d→1
  Affine gate_text;    // 2d→d
  Affine gate_video;   // 2d→d
  double tau = 0.5;
  double k_ratio = 0.5;

  void validate() const;
  /// round(k_ratio · min(n, m)), at least 1.
  std::size_t k_for(std::size_t n, std::size_t m) const;
};

// Pure forward versions.
Tensor2 salience(const Tensor2& low, const Affine& head);
double gumbel_from_uniform(double u);
std::vector<double> gumbel_noise(std::size_t count, Rng& rng);
Tensor2 gumbel_softmax(const Tensor2& scores, const Tensor2& noise, double tau);
/// The k largest entries, highest first; ties resolve to the lower index.
std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k);
SharedInfoSet select_topk_shared(const EmbeddedPair& pair, const Tensor2& probs_text,
                                 const Tensor2& probs_video, std::size_t k);
Tensor2 gate(const Tensor2& pooled, const Tensor2& low, const Affine& head);
Tensor2 filter(const Tensor2& low, const Tensor2& gate);

// Tape versions.
Var salience(Tape& tape, Var low, Affine& head);
Var gumbel_softmax(Var scores, const Tensor2& noise, double tau);

/// Selected rows of one modality. Forward rows are exactly the chosen input
/// rows; when `probs` is given, gradients reach it through a straight-through
/// mask (`probs_ref` overrides the reference used for the mask offset).
Var select_rows(Var low, std::span<const std::size_t> indices, std::optional<Var> probs,
                const Tensor2* probs_ref = nullptr);
Var gate(Tape& tape, Var pooled, Var low, Affine& head);
Var filter(Var low, Var gate);

}  // namespace nfdt
}  // namespace xsum
