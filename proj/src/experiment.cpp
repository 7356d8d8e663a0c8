#include "xsum/experiment.hpp"

#include <cstdio>

#include "xsum/error.hpp"

namespace xsum {

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full",    "no-shared-selection", "plain-softmax",
                                                 "no-gate", "random-selector",     "cosine-filter"};
  return names;
}

ModelConfig apply_variant(ModelConfig base, const std::string& variant) {
  if (variant == "full") return base;
  if (variant == "no-shared-selection") {
    base.selector = Selector::All;
  } else if (variant == "plain-softmax") {
    base.gumbel_noise = false;
  } else if (variant == "no-gate") {
    base.use_gate = false;
  } else if (variant == "random-selector") {
    base.selector = Selector::Random;
  } else if (variant == "cosine-filter") {
    base.selector = Selector::Cosine;
  } else {
    std::string accepted;
    for (const auto& n : variant_names()) accepted += (accepted.empty() ? "" : ", ") + n;
    throw ConfigError("unknown variant '" + variant + "' (accepted: " + accepted + ")");
  }
  return base;
}

TrainedModel train_model(const RunConfig& cfg, const std::vector<EmbeddedPair>& corpus, const FitOptions& opts) {
  TrainedModel out;
  out.model = std::make_unique<Model>(cfg.model, cfg.init_seed());
  const BigramLm lm = corpus_language_model(corpus);
  out.fit = fit(*out.model, corpus, cfg.train, lm, opts);
  return out;
}

std::vector<EvalReport> ablation_run(const std::vector<EmbeddedPair>& corpus, const RunConfig& cfg,
                                     const std::vector<std::string>& variants) {
  if (variants.empty()) throw ConfigError("ablate.variants is empty");
  std::vector<ModelConfig> configs;
  for (const auto& v : variants) configs.push_back(apply_variant(cfg.model, v));
  std::vector<EvalReport> out;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    RunConfig rc = cfg;
    rc.model = configs[i];
    TrainedModel tm = train_model(rc, corpus);
    out.push_back(evaluate(*tm.model, corpus, cfg.eval, variants[i]));
  }
  return out;
}

std::vector<EvalReport> sweep_k(const std::vector<EmbeddedPair>& corpus, const RunConfig& cfg,
                                const std::vector<double>& ratios) {
  for (const double r : ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("k ratio must be in (0, 1], got " + std::to_string(r));
  }
  std::vector<EvalReport> out;
  for (const double r : ratios) {
    RunConfig rc = cfg;
    rc.model.k_ratio = r;
    TrainedModel tm = train_model(rc, corpus);
    char key[32];
    std::snprintf(key, sizeof key, "%g", r);
    out.push_back(evaluate(*tm.model, corpus, cfg.eval, key));
  }
  return out;
}

}  // namespace xsum
