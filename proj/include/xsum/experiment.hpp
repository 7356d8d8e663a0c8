#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xsum/config.hpp"
#include "xsum/metrics.hpp"
#include "xsum/model.hpp"
#include "xsum/train.hpp"

namespace xsum {

/// full, no-shared-selection, plain-softmax, no-gate, random-selector, cosine-filter.
const std::vector<std::string>& variant_names();
/// Model config for an ablation row; ConfigError on an unknown name.
ModelConfig apply_variant(ModelConfig base, const std::string& variant);

struct TrainedModel {
  std::unique_ptr<Model> model;
  FitResult fit;
};

/// Initializes from the run's init seed and fits on `corpus`.
TrainedModel train_model(const RunConfig& cfg, const std::vector<EmbeddedPair>& corpus,
                         const FitOptions& opts = {});

/// Trains and evaluates each variant with identical data and seeds.
std::vector<EvalReport> ablation_run(const std::vector<EmbeddedPair>& corpus, const RunConfig& cfg,
                                     const std::vector<std::string>& variants);

/// One report per k ratio, in input order; the report key is the ratio.
std::vector<EvalReport> sweep_k(const std::vector<EmbeddedPair>& corpus, const RunConfig& cfg,
                                const std::vector<double>& ratios);

}  // namespace xsum
