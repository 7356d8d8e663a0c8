#include "xsum/nfdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xsum/embed.hpp"
#include "xsum/error.hpp"

namespace xsum::nfdt {

namespace {

void check_head(const Affine& head, std::size_t in, std::size_t out, const char* what) {
  if (head.in_dim() != in || head.out_dim() != out || head.bias.value.cols() != out ||
      head.bias.value.rows() != 1) {
    throw DimensionError(std::string(what) + ": head " + head.weight.value.shape_str() +
                         " does not map " + std::to_string(in) + "->" + std::to_string(out));
  }
}

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("gumbel_softmax: temperature must be > 0, got " + std::to_string(tau));
  }
}

Tensor2 scaled_logits(const Tensor2& scores, const Tensor2& noise, double tau) {
  if (!scores.same_shape(noise) || scores.cols() != 1) {
    throw DimensionError("gumbel_softmax: scores " + scores.shape_str() + " vs noise " +
                         noise.shape_str());
  }
  Tensor2 z = scores;
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] + noise[i]) / tau;
  return z;
}

}  // namespace

void NfdtParams::validate() const {
  check_tau(tau);
  if (!(k_ratio > 0.0 && k_ratio <= 1.0)) {
    throw ConfigError("nfdt: k_ratio must be in (0, 1], got " + std::to_string(k_ratio));
  }
}

std::size_t NfdtParams::k_for(std::size_t n, std::size_t m) const {
  const auto k = static_cast<std::size_t>(std::lround(k_ratio * static_cast<double>(std::min(n, m))));
  return std::max<std::size_t>(1, k);
}

Tensor2 salience(const Tensor2& low, const Affine& head) {
  check_head(head, low.cols(), 1, "salience");
  return ops::add_bias(ops::matmul(low, head.weight.value), head.bias.value);
}

double gumbel_from_uniform(double u) {
  u = std::clamp(u, kUniformClamp, 1.0 - kUniformClamp);
  return -std::log(-std::log(u));
}

std::vector<double> gumbel_noise(std::size_t count, Rng& rng) {
  std::vector<double> g(count);
  for (double& v : g) v = gumbel_from_uniform(uniform_open(rng));
  return g;
}

Tensor2 gumbel_softmax(const Tensor2& scores, const Tensor2& noise, double tau) {
  check_tau(tau);
  return ops::softmax(scaled_logits(scores, noise, tau), ops::Axis::Rows);
}

std::vector<std::size_t> topk_indices(std::span<const double> values, std::size_t k) {
  if (k == 0 || k > values.size()) {
    throw ConfigError("top-k: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(values.size()) + "]");
  }
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  idx.resize(k);
  return idx;
}

SharedInfoSet select_topk_shared(const EmbeddedPair& pair, const Tensor2& probs_text,
                                 const Tensor2& probs_video, std::size_t k) {
  const std::size_t n = pair.n_words(), m = pair.m_frames();
  if (k == 0 || k > std::min(n, m)) {
    throw ConfigError("select_topk_shared: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(std::min(n, m)) + "]");
  }
  if (probs_text.size() != n || probs_video.size() != m) {
    throw DimensionError("select_topk_shared: probability lengths " + probs_text.shape_str() +
                         ", " + probs_video.shape_str() + " vs n=" + std::to_string(n) +
                         ", m=" + std::to_string(m));
  }
  SharedInfoSet s;
  s.text_indices = topk_indices(probs_text.values(), k);
  s.video_indices = topk_indices(probs_video.values(), k);
  const Tensor2 parts[] = {ops::gather_rows(pair.text_low, s.text_indices),
                           ops::gather_rows(pair.video_low, s.video_indices)};
  s.selected_rows = ops::concat_rows(parts);
  s.pooled = ops::mean_rows(s.selected_rows);
  return s;
}

Tensor2 gate(const Tensor2& pooled, const Tensor2& low, const Affine& head) {
  if (pooled.rows() != 1 || pooled.cols() != low.cols()) {
    throw DimensionError("gate: pooled " + pooled.shape_str() + " vs rows " + low.shape_str());
  }
  check_head(head, 2 * low.cols(), low.cols(), "gate");
  return ops::sigmoid(
      ops::add_bias(ops::matmul(ops::broadcast_prepend(pooled, low), head.weight.value), head.bias.value));
}

Tensor2 filter(const Tensor2& low, const Tensor2& gate) {
  if (!low.same_shape(gate)) {
    throw DimensionError("filter: features " + low.shape_str() + " vs gate " + gate.shape_str());
  }
  return ops::mul(low, gate);
}

Var salience(Tape& tape, Var low, Affine& head) {
  check_head(head, low.cols(), 1, "salience");
  return ad::affine(tape, low, head);
}

Var gumbel_softmax(Var scores, const Tensor2& noise, double tau) {
  check_tau(tau);
  Tape& t = scores.tape();
  (void)scaled_logits(scores.value(), noise, tau);  // shape check
  Var shifted = ad::add(scores, t.constant(noise));
  return ad::softmax(ad::scale(shifted, 1.0 / tau), ops::Axis::Rows);
}

Var select_rows(Var low, std::span<const std::size_t> indices, std::optional<Var> probs,
                const Tensor2* probs_ref) {
  if (!probs) return ad::gather_rows(low, indices);
  const std::size_t n = low.rows();
  if (probs->rows() != n || probs->cols() != 1) {
    throw DimensionError("select_rows: probabilities " + probs->value().shape_str() + " for " +
                         std::to_string(n) + " rows");
  }
  Tensor2 hard(n, 1);
  for (std::size_t i : indices) {
    if (i >= n) throw DimensionError("select_rows: index " + std::to_string(i) + " out of range");
    hard[i] = 1.0;
  }
  Var mask = probs_ref ? ad::straight_through(hard, *probs, *probs_ref)
                       : ad::straight_through(hard, *probs);
  Var weighted = ad::mul(low, ad::repeat_cols(mask, low.cols()));
  return ad::gather_rows(weighted, indices);
}

Var gate(Tape& tape, Var pooled, Var low, Affine& head) {
  if (pooled.rows() != 1 || pooled.cols() != low.cols()) {
    throw DimensionError("gate: pooled " + pooled.value().shape_str() + " vs rows " +
                         low.value().shape_str());
  }
  check_head(head, 2 * low.cols(), low.cols(), "gate");
  return ad::sigmoid(ad::affine(tape, ad::broadcast_prepend(pooled, low), head));
}

Var filter(Var low, Var gate) {
  if (!low.value().same_shape(gate.value())) {
    throw DimensionError("filter: features " + low.value().shape_str() + " vs gate " +
                         gate.value().shape_str());
  }
  return ad::mul(low, gate);
}

}  // namespace xsum::nfdt
