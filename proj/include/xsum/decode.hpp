#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "xsum/autodiff.hpp"

namespace xsum::decode {

enum class OrderMode { Score, Position };

OrderMode parse_order_mode(const std::string& s);
std::string to_string(OrderMode mode);

struct SummaryPair {
  std::vector<std::size_t> word_indices;
  std::vector<double> word_scores;  // probability of each selected word, same order
  std::size_t frame_index = 0;
  std::vector<double> frame_scores;  // softmax over all m frames
};

/// Top-k′ words from per-word probabilities (n×1).
void select_words(const Tensor2& word_probs, std::size_t max_words, OrderMode mode, SummaryPair& out);
/// Argmax frame, lowest index on ties.
void select_frame(const Tensor2& frame_probs, SummaryPair& out);

/// Linear head d→1 over rows followed by a softmax across rows (n×1).
Tensor2 row_probabilities(const Tensor2& features, const Affine& head);
Var row_probabilities(Tape& tape, Var features, Affine& head);

SummaryPair decode_text(const Tensor2& x_to, const Affine& head, std::size_t max_words, OrderMode mode);
SummaryPair decode_frame(const Tensor2& x_vo, const Affine& head);

std::vector<std::string> summary_tokens(const SummaryPair& s, const std::vector<std::string>& tokens);

/// `FRAME <index>` then `SENT <space-joined words>`.
void write_summary(std::ostream& os, const SummaryPair& s, const std::vector<std::string>& tokens);

}  // namespace xsum::decode
