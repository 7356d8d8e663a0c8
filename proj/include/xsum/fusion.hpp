#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xsum/autodiff.hpp"
#include "xsum/rng.hpp"

namespace xsum::fusion {

struct StackConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t d = 64;
  std::size_t ff = 128;

  void validate() const;
};

/// Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x)) with a GELU FFN.
struct TransformerBlock {
  Parameter ln1_gamma, ln1_beta;
  Affine q, k, v, o;
  Parameter ln2_gamma, ln2_beta;
  Affine ff1, ff2;
};

struct TransformerStack {
  std::size_t heads = 1;
  std::vector<TransformerBlock> layers;

  std::size_t dim() const;
  std::vector<Parameter*> parameters();
};

/// Output projections are scaled by `residual_scale`; 0 gives an exact
/// identity stack, small values a residual-dominant one.
TransformerStack make_stack(const StackConfig& cfg, Rng& rng, const std::string& name,
                            double residual_scale);

Affine make_affine(std::size_t in, std::size_t out, Rng& rng, const std::string& name,
                   double scale = 1.0);

Var run_stack(Tape& tape, Var tokens, TransformerStack& stack);

/// [high; clean] through the stack, high-level token dropped.
/// `positions`, when given, is added to the clean tokens first.
Var unimodal_context(Tape& tape, Var clean, Var high, TransformerStack& stack,
                     const Var* positions = nullptr);

/// Single-head attention with learned query/key/value projections.
struct CrossAttention {
  Affine q, k, v;
};

/// Returns (A_v2t, A_t2v): frames attend over words and words over frames.
std::pair<Var, Var> cross_attend(Tape& tape, Var x_v, Var x_t, CrossAttention& v2t,
                                 CrossAttention& t2v);

/// Row-stacks A_v2t above A_t2v and applies the d→d head to every row.
Var fuse(Tape& tape, Var a_v2t, Var a_t2v, Affine& head);

/// Runs [multimodal; unimodal] through the stack and keeps only the unimodal positions.
Var guide(Tape& tape, Var multimodal, Var unimodal, TransformerStack& stack);

}  // namespace xsum::fusion
