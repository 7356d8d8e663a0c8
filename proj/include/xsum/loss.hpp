#pragma once

#include <span>
#include <string>

#include "xsum/autodiff.hpp"
#include "xsum/lm.hpp"
#include "xsum/ot.hpp"

namespace xsum::loss {

struct LossWeights {
  double lambda_t = 1.0;
  double lambda_v = 1.0;
  double lambda_o = 1.0;
  double lambda_f = 0.1;

  void validate() const;
};

struct LossTerms {
  double l_t = 0.0;
  double l_v = 0.0;
  double l_o = 0.0;
};

/// Length-normalized ln P_LM(words) − ln Π P(t).
double slor(std::span<const std::string> words, const LmInterface& lm);

/// λ_T·L_T + λ_V·L_V + λ_O·L_O + λ_f·L_f with the fluency loss L_f = −SLOR.
double total_loss(const LossTerms& terms, double slor_value, const LossWeights& w);

struct LossVars {
  Var l_t, l_v, l_o;
};

/// W(x, y) by Sinkhorn; with `debias`, W(x, y) − ½W(x, x) − ½W(y, y).
Var divergence(Var x, Var y, const ot::SinkhornOptions& opts, bool debias);

/// L_T = W(doc, text summary), L_V = W(video, frame summary),
/// L_O = W(text summary, frame summary), all by Sinkhorn.
LossVars loss_terms(Var text_high, Var text_summary, Var video_high, Var video_summary,
                    const ot::SinkhornOptions& opts, bool debias = false);

Var total_loss(Tape& tape, const LossVars& terms, double slor_value, const LossWeights& w);

}  // namespace xsum::loss
