#include "xsum/loss.hpp"

#include <cmath>

#include "xsum/error.hpp"

namespace xsum::loss {

void LossWeights::validate() const {
  for (double v : {lambda_t, lambda_v, lambda_o, lambda_f}) {
    if (!std::isfinite(v)) throw ConfigError("loss weights must be finite");
  }
  if (lambda_t < 0.0 || lambda_v < 0.0 || lambda_o < 0.0) {
    throw ConfigError("lambda_t, lambda_v and lambda_o must be nonnegative");
  }
}

double slor(std::span<const std::string> words, const LmInterface& lm) {
  if (words.empty()) throw ConfigError("slor: summary has no words");
  double log_unigram = 0.0;
  for (const auto& w : words) {
    const double p = lm.unigram(w);
    if (!(p > 0.0)) throw VocabularyError("token '" + w + "' has zero unigram probability");
    log_unigram += std::log(p);
  }
  return (lm.log_prob(words) - log_unigram) / static_cast<double>(words.size());
}

double total_loss(const LossTerms& t, double slor_value, const LossWeights& w) {
  return w.lambda_t * t.l_t + w.lambda_v * t.l_v + w.lambda_o * t.l_o + w.lambda_f * (-slor_value);
}

Var divergence(Var x, Var y, const ot::SinkhornOptions& opts, bool debias) {
  Var w = ot::wasserstein(x, y, opts);
  if (!debias) return w;
  Var self = ad::add(ot::wasserstein(x, x, opts), ot::wasserstein(y, y, opts));
  return ad::sub(w, ad::scale(self, 0.5));
}

LossVars loss_terms(Var text_high, Var text_summary, Var video_high, Var video_summary,
                    const ot::SinkhornOptions& opts, bool debias) {
  return LossVars{divergence(text_high, text_summary, opts, debias),
                  divergence(video_high, video_summary, opts, debias),
                  divergence(text_summary, video_summary, opts, debias)};
}

Var total_loss(Tape& tape, const LossVars& t, double slor_value, const LossWeights& w) {
  Var sum = ad::add(ad::add(ad::scale(t.l_t, w.lambda_t), ad::scale(t.l_v, w.lambda_v)),
                    ad::scale(t.l_o, w.lambda_o));
  return ad::add(sum, tape.constant(Tensor2(1, 1, w.lambda_f * (-slor_value))));
}

}  // namespace xsum::loss
