#include "xsum/decode.hpp"

#include <algorithm>
#include <ostream>

#include "xsum/error.hpp"
#include "xsum/nfdt.hpp"

namespace xsum::decode {

OrderMode parse_order_mode(const std::string& s) {
  if (s == "score") return OrderMode::Score;
  if (s == "position") return OrderMode::Position;
  throw ConfigError("decode.order: unknown mode '" + s + "' (accepted: score, position)");
}

std::string to_string(OrderMode mode) { return mode == OrderMode::Score ? "score" : "position"; }

void select_words(const Tensor2& word_probs, std::size_t max_words, OrderMode mode, SummaryPair& out) {
  const std::size_t n = word_probs.size();
  if (max_words == 0 || max_words > n) {
    throw ConfigError("decode_text: k'=" + std::to_string(max_words) + " outside [1, n=" +
                      std::to_string(n) + "]");
  }
  auto idx = nfdt::topk_indices(word_probs.values(), max_words);
  if (mode == OrderMode::Position) std::sort(idx.begin(), idx.end());
  out.word_indices = idx;
  out.word_scores.clear();
  for (std::size_t i : idx) out.word_scores.push_back(word_probs[i]);
}

void select_frame(const Tensor2& frame_probs, SummaryPair& out) {
  if (frame_probs.size() == 0) throw DimensionError("decode_frame: no frames (m = 0)");
  out.frame_scores.assign(frame_probs.values().begin(), frame_probs.values().end());
  out.frame_index = nfdt::topk_indices(frame_probs.values(), 1).front();
}

Tensor2 row_probabilities(const Tensor2& features, const Affine& head) {
  if (features.rows() == 0) throw DimensionError("decoder: no rows to score");
  return ops::softmax(nfdt::salience(features, head), ops::Axis::Rows);
}

Var row_probabilities(Tape& tape, Var features, Affine& head) {
  if (features.rows() == 0) throw DimensionError("decoder: no rows to score");
  return ad::softmax(nfdt::salience(tape, features, head), ops::Axis::Rows);
}

SummaryPair decode_text(const Tensor2& x_to, const Affine& head, std::size_t max_words, OrderMode mode) {
  SummaryPair s;
  select_words(row_probabilities(x_to, head), max_words, mode, s);
  return s;
}

SummaryPair decode_frame(const Tensor2& x_vo, const Affine& head) {
  SummaryPair s;
  select_frame(row_probabilities(x_vo, head), s);
  return s;
}

std::vector<std::string> summary_tokens(const SummaryPair& s, const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (std::size_t i : s.word_indices) {
    if (i >= tokens.size()) throw DimensionError("summary word index out of range");
    out.push_back(tokens[i]);
  }
  return out;
}

void write_summary(std::ostream& os, const SummaryPair& s, const std::vector<std::string>& tokens) {
  os << "FRAME " << s.frame_index << '\n' << "SENT";
  for (const auto& w : summary_tokens(s, tokens)) os << ' ' << w;
  os << '\n';
}

}  // namespace xsum::decode
