#include "xsum/model.hpp"

#include <cmath>
#include <sstream>

#include "xsum/error.hpp"

namespace xsum {

Selector parse_selector(const std::string& s) {
  if (s == "topk") return Selector::TopK;
  if (s == "all") return Selector::All;
  if (s == "random") return Selector::Random;
  if (s == "cosine") return Selector::Cosine;
  throw ConfigError("model.selector: unknown selector '" + s + "' (accepted: topk, all, random, cosine)");
}

std::string to_string(Selector s) {
  switch (s) {
    case Selector::TopK: return "topk";
    case Selector::All: return "all";
    case Selector::Random: return "random";
    case Selector::Cosine: return "cosine";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (d == 0) throw ConfigError("model: d must be >= 1");
  if (stack.d != d) throw ConfigError("model: stack width must equal d");
  stack.validate();
  if (max_len == 0) throw ConfigError("model: max_len must be >= 1");
  if (!(tau > 0.0)) throw ConfigError("nfdt.tau must be > 0");
  if (!(k_ratio > 0.0 && k_ratio <= 1.0)) throw ConfigError("nfdt.k_ratio must be in (0, 1]");
  if (max_words == 0) throw ConfigError("decode.max_words must be >= 1");
  if (!(residual_scale >= 0.0)) throw ConfigError("model.residual_scale must be >= 0");
  if (!(sinkhorn.epsilon > 0.0)) throw ConfigError("loss.sinkhorn_eps must be > 0");
  if (sinkhorn.max_iters == 0) throw ConfigError("loss.sinkhorn_iters must be >= 1");
  weights.validate();
}

std::string ModelConfig::fingerprint() const {
  std::ostringstream os;
  os << "d=" << d << ";layers=" << stack.layers << ";heads=" << stack.heads << ";ff=" << stack.ff
     << ";positional=" << positional << ";max_len=" << max_len << ";gate=" << use_gate;
  return os.str();
}

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(init_seed, "init");
  const std::size_t d = cfg_.d;
  nfdt.tau = cfg_.tau;
  nfdt.k_ratio = cfg_.k_ratio;
  nfdt.score_text = fusion::make_affine(d, 1, rng, "nfdt.score_text");
  nfdt.score_video = fusion::make_affine(d, 1, rng, "nfdt.score_video");
  nfdt.gate_text = fusion::make_affine(2 * d, d, rng, "nfdt.gate_text");
  nfdt.gate_video = fusion::make_affine(2 * d, d, rng, "nfdt.gate_video");

  auto positions = [&](const std::string& name) {
    Tensor2 p(cfg_.max_len, d);
    for (double& v : p.values()) v = 0.02 * standard_normal(rng);
    return Parameter(name, std::move(p));
  };
  pos_text = positions("fusion.pos_text");
  pos_video = positions("fusion.pos_video");

  text_stack = fusion::make_stack(cfg_.stack, rng, "fusion.text_stack", cfg_.residual_scale);
  video_stack = fusion::make_stack(cfg_.stack, rng, "fusion.video_stack", cfg_.residual_scale);
  v2t = {fusion::make_affine(d, d, rng, "fusion.v2t.q"), fusion::make_affine(d, d, rng, "fusion.v2t.k"),
         fusion::make_affine(d, d, rng, "fusion.v2t.v")};
  t2v = {fusion::make_affine(d, d, rng, "fusion.t2v.q"), fusion::make_affine(d, d, rng, "fusion.t2v.k"),
         fusion::make_affine(d, d, rng, "fusion.t2v.v")};
  fuse_head = fusion::make_affine(d, d, rng, "fusion.fuse");
  guide_text = fusion::make_stack(cfg_.stack, rng, "fusion.guide_text", cfg_.residual_scale);
  guide_video = fusion::make_stack(cfg_.stack, rng, "fusion.guide_video", cfg_.residual_scale);
  word_head = fusion::make_affine(d, 1, rng, "decode.word");
  frame_head = fusion::make_affine(d, 1, rng, "decode.frame");
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = {&nfdt.score_text.weight, &nfdt.score_text.bias,
                                 &nfdt.score_video.weight, &nfdt.score_video.bias,
                                 &nfdt.gate_text.weight,  &nfdt.gate_text.bias,
                                 &nfdt.gate_video.weight, &nfdt.gate_video.bias,
                                 &pos_text,               &pos_video};
  auto append = [&](std::vector<Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  append(text_stack.parameters());
  append(video_stack.parameters());
  for (fusion::CrossAttention* ca : {&v2t, &t2v}) {
    for (Affine* a : {&ca->q, &ca->k, &ca->v}) append({&a->weight, &a->bias});
  }
  append({&fuse_head.weight, &fuse_head.bias});
  append(guide_text.parameters());
  append(guide_video.parameters());
  append({&word_head.weight, &word_head.bias, &frame_head.weight, &frame_head.bias});
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t total = 0;
  for (Parameter* p : parameters()) total += p->value.size();
  return total;
}

namespace {

std::vector<std::size_t> cosine_rank(const Tensor2& rows, const Tensor2& other_pooled, std::size_t k) {
  std::vector<double> sims(rows.rows());
  double pn = 0.0;
  for (double v : other_pooled.values()) pn += v * v;
  pn = std::sqrt(pn);
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    double dot = 0.0, rn = 0.0;
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      dot += rows(r, c) * other_pooled[c];
      rn += rows(r, c) * rows(r, c);
    }
    const double denom = std::sqrt(rn) * pn;
    sims[r] = denom > 0.0 ? dot / denom : 0.0;
  }
  return nfdt::topk_indices(sims, k);
}

std::vector<std::size_t> random_choice(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace

ForwardResult Model::forward(Tape& tape, const EmbeddedPair& pair, const ForwardOptions& opts) {
  pair.validate();
  const std::size_t n = pair.n_words(), m = pair.m_frames(), d = cfg_.d;
  if (pair.dim() != d) {
    throw DimensionError("model: pair has d=" + std::to_string(pair.dim()) + ", model expects " +
                         std::to_string(d));
  }
  if (cfg_.positional && (n > cfg_.max_len || m > cfg_.max_len)) {
    throw DimensionError("model: sequence longer than max_len=" + std::to_string(cfg_.max_len));
  }
  ForwardResult r;
  Var x_t = tape.constant(pair.text_low);
  Var x_v = tape.constant(pair.video_low);
  Var h_t = tape.constant(pair.text_high);
  Var h_v = tape.constant(pair.video_high);
  const std::size_t k = nfdt.k_for(n, m);
  const SelectionFreeze* fz = opts.freeze;

  // Shared salient information.
  Var sel_t, sel_v;
  switch (cfg_.selector) {
    case Selector::TopK: {
      Tensor2 g_t(n, 1), g_v(m, 1);
      if (fz != nullptr) {
        g_t = fz->noise_text;
        g_v = fz->noise_video;
      } else if (opts.training && cfg_.gumbel_noise) {
        if (opts.rng == nullptr) throw StateError("model: training with Gumbel noise needs an rng");
        g_t = Tensor2::column_vector(nfdt::gumbel_noise(n, *opts.rng));
        g_v = Tensor2::column_vector(nfdt::gumbel_noise(m, *opts.rng));
      }
      r.probs_text = nfdt::gumbel_softmax(nfdt::salience(tape, x_t, nfdt.score_text), g_t, cfg_.tau);
      r.probs_video = nfdt::gumbel_softmax(nfdt::salience(tape, x_v, nfdt.score_video), g_v, cfg_.tau);
      if (fz != nullptr) {
        r.shared.text_indices = fz->text_indices;
        r.shared.video_indices = fz->video_indices;
      } else {
        r.shared.text_indices = nfdt::topk_indices(r.probs_text.value().values(), k);
        r.shared.video_indices = nfdt::topk_indices(r.probs_video.value().values(), k);
      }
      sel_t = nfdt::select_rows(x_t, r.shared.text_indices, r.probs_text,
                                fz ? &fz->probs_text_ref : nullptr);
      sel_v = nfdt::select_rows(x_v, r.shared.video_indices, r.probs_video,
                                fz ? &fz->probs_video_ref : nullptr);
      if (opts.capture != nullptr) {
        opts.capture->noise_text = g_t;
        opts.capture->noise_video = g_v;
        opts.capture->text_indices = r.shared.text_indices;
        opts.capture->video_indices = r.shared.video_indices;
        opts.capture->probs_text_ref = r.probs_text.value();
        opts.capture->probs_video_ref = r.probs_video.value();
      }
      break;
    }
    case Selector::All:
      for (std::size_t i = 0; i < n; ++i) r.shared.text_indices.push_back(i);
      for (std::size_t j = 0; j < m; ++j) r.shared.video_indices.push_back(j);
      sel_t = x_t;
      sel_v = x_v;
      break;
    case Selector::Random: {
      if (fz != nullptr) {
        r.shared.text_indices = fz->text_indices;
        r.shared.video_indices = fz->video_indices;
      } else {
        if (opts.rng == nullptr) throw StateError("model: random selector needs an rng");
        r.shared.text_indices = random_choice(*opts.rng, n, k);
        r.shared.video_indices = random_choice(*opts.rng, m, k);
      }
      if (opts.capture != nullptr) {
        opts.capture->text_indices = r.shared.text_indices;
        opts.capture->video_indices = r.shared.video_indices;
      }
      sel_t = nfdt::select_rows(x_t, r.shared.text_indices, std::nullopt);
      sel_v = nfdt::select_rows(x_v, r.shared.video_indices, std::nullopt);
      break;
    }
    case Selector::Cosine:
      r.shared.text_indices = cosine_rank(pair.text_low, pair.video_high, k);
      r.shared.video_indices = cosine_rank(pair.video_low, pair.text_high, k);
      sel_t = nfdt::select_rows(x_t, r.shared.text_indices, std::nullopt);
      sel_v = nfdt::select_rows(x_v, r.shared.video_indices, std::nullopt);
      break;
  }
  const Var sel_parts[] = {sel_t, sel_v};
  Var selected = ad::concat_rows(sel_parts);
  Var pooled = ad::mean_rows(selected);
  r.shared.selected_rows = selected.value();
  r.shared.pooled = pooled.value();

  // Gating and filtering.
  if (cfg_.use_gate) {
    r.gate_text = nfdt::gate(tape, pooled, x_t, nfdt.gate_text);
    r.gate_video = nfdt::gate(tape, pooled, x_v, nfdt.gate_video);
    r.clean_text = nfdt::filter(x_t, r.gate_text);
    r.clean_video = nfdt::filter(x_v, r.gate_video);
  } else {
    r.clean_text = x_t;
    r.clean_video = x_v;
  }

  // Unimodal context, cross-modal interaction and guidance.
  if (cfg_.positional) {
    Var pt = ad::slice_rows(tape.leaf(pos_text), 0, n);
    Var pv = ad::slice_rows(tape.leaf(pos_video), 0, m);
    r.text_ctx = fusion::unimodal_context(tape, r.clean_text, h_t, text_stack, &pt);
    r.video_ctx = fusion::unimodal_context(tape, r.clean_video, h_v, video_stack, &pv);
  } else {
    r.text_ctx = fusion::unimodal_context(tape, r.clean_text, h_t, text_stack);
    r.video_ctx = fusion::unimodal_context(tape, r.clean_video, h_v, video_stack);
  }
  auto [a_v2t, a_t2v] = fusion::cross_attend(tape, r.video_ctx, r.text_ctx, v2t, t2v);
  r.multimodal = fusion::fuse(tape, a_v2t, a_t2v, fuse_head);
  r.text_out = fusion::guide(tape, r.multimodal, r.text_ctx, guide_text);
  r.video_out = fusion::guide(tape, r.multimodal, r.video_ctx, guide_video);

  // Decoders.
  r.word_probs = decode::row_probabilities(tape, r.text_out, word_head);
  r.frame_probs = decode::row_probabilities(tape, r.video_out, frame_head);
  const std::size_t max_words = std::min(cfg_.max_words, n);
  decode::select_words(r.word_probs.value(), max_words, cfg_.order, r.summary);
  if (fz != nullptr && !fz->word_indices.empty()) r.summary.word_indices = fz->word_indices;
  if (opts.capture != nullptr) opts.capture->word_indices = r.summary.word_indices;
  decode::select_frame(r.frame_probs.value(), r.summary);

  // Unsupervised objective on decoder-weighted summaries.
  if (!opts.compute_loss) return r;
  r.text_summary = ad::matmul_tn(r.word_probs, x_t);
  r.video_summary = ad::matmul_tn(r.frame_probs, x_v);
  r.terms = loss::loss_terms(h_t, r.text_summary, h_v, r.video_summary, cfg_.sinkhorn, cfg_.debias);
  if (opts.lm != nullptr) {
    const auto words = decode::summary_tokens(r.summary, pair.tokens);
    r.slor = loss::slor(words, *opts.lm);
  }
  r.total = loss::total_loss(tape, r.terms, r.slor, cfg_.weights);
  return r;
}

decode::SummaryPair Model::summarize(const EmbeddedPair& pair, Rng* rng) {
  Tape tape(false);
  ForwardOptions opts;
  opts.training = false;
  opts.rng = rng;
  opts.compute_loss = false;
  return forward(tape, pair, opts).summary;
}

}  // namespace xsum
