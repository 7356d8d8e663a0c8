#include "xsum/fusion.hpp"

#include <cmath>

#include "xsum/error.hpp"

namespace xsum::fusion {

void StackConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw ConfigError("transformer: d=" + std::to_string(d) + " must be divisible by heads=" +
                      std::to_string(heads));
  }
  if (ff == 0) throw ConfigError("transformer: ff width must be >= 1");
}

std::size_t TransformerStack::dim() const {
  return layers.empty() ? 0 : layers.front().ln1_gamma.value.cols();
}

std::vector<Parameter*> TransformerStack::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : layers) {
    for (Parameter* p : {&b.ln1_gamma, &b.ln1_beta, &b.q.weight, &b.q.bias, &b.k.weight, &b.k.bias,
                         &b.v.weight, &b.v.bias, &b.o.weight, &b.o.bias, &b.ln2_gamma, &b.ln2_beta,
                         &b.ff1.weight, &b.ff1.bias, &b.ff2.weight, &b.ff2.bias}) {
      out.push_back(p);
    }
  }
  return out;
}

Affine make_affine(std::size_t in, std::size_t out, Rng& rng, const std::string& name, double scale) {
  Tensor2 w(in, out);
  const double sd = scale / std::sqrt(static_cast<double>(in));
  for (double& v : w.values()) v = sd * standard_normal(rng);
  return Affine{Parameter(name + ".w", std::move(w)), Parameter(name + ".b", Tensor2(1, out))};
}

TransformerStack make_stack(const StackConfig& cfg, Rng& rng, const std::string& name,
                            double residual_scale) {
  cfg.validate();
  TransformerStack stack;
  stack.heads = cfg.heads;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = name + "." + std::to_string(l);
    TransformerBlock b;
    b.ln1_gamma = Parameter(p + ".ln1.g", Tensor2(1, cfg.d, 1.0));
    b.ln1_beta = Parameter(p + ".ln1.b", Tensor2(1, cfg.d));
    b.q = make_affine(cfg.d, cfg.d, rng, p + ".q");
    b.k = make_affine(cfg.d, cfg.d, rng, p + ".k");
    b.v = make_affine(cfg.d, cfg.d, rng, p + ".v");
    b.o = make_affine(cfg.d, cfg.d, rng, p + ".o", residual_scale);
    b.ln2_gamma = Parameter(p + ".ln2.g", Tensor2(1, cfg.d, 1.0));
    b.ln2_beta = Parameter(p + ".ln2.b", Tensor2(1, cfg.d));
    b.ff1 = make_affine(cfg.d, cfg.ff, rng, p + ".ff1");
    b.ff2 = make_affine(cfg.ff, cfg.d, rng, p + ".ff2", residual_scale);
    stack.layers.push_back(std::move(b));
  }
  return stack;
}

Var run_stack(Tape& tape, Var x, TransformerStack& stack) {
  if (!stack.layers.empty() && x.cols() != stack.dim()) {
    throw DimensionError("transformer: tokens " + x.value().shape_str() + " vs stack width " +
                         std::to_string(stack.dim()));
  }
  for (auto& b : stack.layers) {
    Var h = ad::layer_norm(x, tape.leaf(b.ln1_gamma), tape.leaf(b.ln1_beta));
    Var att = ad::attention(ad::affine(tape, h, b.q), ad::affine(tape, h, b.k), ad::affine(tape, h, b.v),
                            stack.heads);
    x = ad::add(x, ad::affine(tape, att, b.o));
    Var h2 = ad::layer_norm(x, tape.leaf(b.ln2_gamma), tape.leaf(b.ln2_beta));
    x = ad::add(x, ad::affine(tape, ad::gelu(ad::affine(tape, h2, b.ff1)), b.ff2));
  }
  return x;
}

Var unimodal_context(Tape& tape, Var clean, Var high, TransformerStack& stack, const Var* positions) {
  if (high.rows() != 1 || high.cols() != clean.cols()) {
    throw DimensionError("unimodal_context: high " + high.value().shape_str() + " vs tokens " +
                         clean.value().shape_str());
  }
  Var tokens = clean;
  if (positions != nullptr) tokens = ad::add(tokens, *positions);
  const Var parts[] = {high, tokens};
  Var out = run_stack(tape, ad::concat_rows(parts), stack);
  return ad::slice_rows(out, 1, clean.rows());
}

std::pair<Var, Var> cross_attend(Tape& tape, Var x_v, Var x_t, CrossAttention& v2t,
                                 CrossAttention& t2v) {
  if (x_v.cols() != x_t.cols()) {
    throw DimensionError("cross_attend: video " + x_v.value().shape_str() + " vs text " +
                         x_t.value().shape_str());
  }
  Var a_v2t = ad::attention(ad::affine(tape, x_v, v2t.q), ad::affine(tape, x_t, v2t.k),
                            ad::affine(tape, x_t, v2t.v), 1);
  Var a_t2v = ad::attention(ad::affine(tape, x_t, t2v.q), ad::affine(tape, x_v, t2v.k),
                            ad::affine(tape, x_v, t2v.v), 1);
  return {a_v2t, a_t2v};
}

Var fuse(Tape& tape, Var a_v2t, Var a_t2v, Affine& head) {
  const Var parts[] = {a_v2t, a_t2v};
  return ad::affine(tape, ad::concat_rows(parts), head);
}

Var guide(Tape& tape, Var multimodal, Var unimodal, TransformerStack& stack) {
  if (multimodal.cols() != unimodal.cols()) {
    throw DimensionError("guide: multimodal " + multimodal.value().shape_str() + " vs unimodal " +
                         unimodal.value().shape_str());
  }
  const Var parts[] = {multimodal, unimodal};
  Var out = run_stack(tape, ad::concat_rows(parts), stack);
  return ad::slice_rows(out, multimodal.rows(), unimodal.rows());
}

}  // namespace xsum::fusion
