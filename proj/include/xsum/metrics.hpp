#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "xsum/embed.hpp"
#include "xsum/model.hpp"

namespace xsum {

/// ROUGE-N F1 with clipped n-gram counts. Tokens are lowercased; no stemming.
double rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               std::size_t n);
/// LCS-based ROUGE-L F1.
double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

/// 1 when |pred − gt| ≤ window.
double frame_hit(std::size_t pred, std::size_t gt, std::size_t window);
/// IoU of [i−h, i+h] ∩ [0, m) around the two frames.
double temporal_iou(std::size_t pred, std::size_t gt, std::size_t half_width, std::size_t m);

struct EvalSettings {
  std::size_t fa_window = 2;
  std::size_t iou_half_width = 2;
  std::uint64_t seed = 1;  // per-pair streams for the random selector
};

struct PairEval {
  std::size_t index = 0;
  std::size_t pred_frame = 0;
  std::optional<std::size_t> gt_frame;
  double fa = 0.0, iou = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  decode::SummaryPair summary;
};

struct EvalReport {
  std::string variant;
  double fa = 0.0, iou = 0.0, rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0;
  std::vector<PairEval> pairs;
};

/// Noise-free decoding of every pair. Frame metrics average over pairs with
/// a gt_frame, text metrics over pairs with a gt_sentence.
EvalReport evaluate(Model& model, const std::vector<EmbeddedPair>& corpus, const EvalSettings& settings,
                    const std::string& variant = "full");

/// Aligned human-readable table.
void write_report_table(std::ostream& os, const std::vector<EvalReport>& reports,
                        const std::string& key_header = "variant");
/// `variant,fa,iou,r1,r2,rl` lines (or another key column name).
void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports,
                      const std::string& key_header = "variant");
/// `index,pred_frame,gt_frame,fa,iou,r1,r2,rl` lines.
void write_pair_csv(std::ostream& os, const EvalReport& report);

}  // namespace xsum
