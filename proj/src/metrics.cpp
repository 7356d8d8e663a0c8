#include "xsum/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <ostream>

#include "xsum/error.hpp"

namespace xsum {

namespace {

std::vector<std::string> lowered(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (std::string t : tokens) {
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    out.push_back(std::move(t));
  }
  return out;
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& t, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (t.size() < n) return out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
  return out;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (cand_total == 0.0 || ref_total == 0.0 || overlap == 0.0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

}  // namespace

double rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
               std::size_t n) {
  if (n == 0) throw ConfigError("rouge_n: n must be >= 1");
  const auto c = ngram_counts(lowered(candidate), n);
  const auto r = ngram_counts(lowered(reference), n);
  std::size_t overlap = 0, ct = 0, rt = 0;
  for (const auto& [g, k] : c) {
    ct += k;
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) rt += k;
  return f1(static_cast<double>(overlap), static_cast<double>(ct), static_cast<double>(rt));
}

double rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  const auto a = lowered(candidate);
  const auto b = lowered(reference);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return f1(static_cast<double>(prev[b.size()]), static_cast<double>(a.size()), static_cast<double>(b.size()));
}

double frame_hit(std::size_t pred, std::size_t gt, std::size_t window) {
  const std::size_t diff = pred > gt ? pred - gt : gt - pred;
  return diff <= window ? 1.0 : 0.0;
}

double temporal_iou(std::size_t pred, std::size_t gt, std::size_t half_width, std::size_t m) {
  if (m == 0) throw DimensionError("temporal_iou: m must be >= 1");
  auto clip = [&](std::size_t c) {
    const long long lo = std::max<long long>(0, static_cast<long long>(c) - static_cast<long long>(half_width));
    const long long hi =
        std::min<long long>(static_cast<long long>(m) - 1, static_cast<long long>(c + half_width));
    return std::pair{lo, hi};
  };
  const auto [a0, a1] = clip(pred);
  const auto [b0, b1] = clip(gt);
  const long long len_a = std::max(0LL, a1 - a0 + 1);
  const long long len_b = std::max(0LL, b1 - b0 + 1);
  const long long inter = std::max(0LL, std::min(a1, b1) - std::max(a0, b0) + 1);
  const long long uni = len_a + len_b - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

EvalReport evaluate(Model& model, const std::vector<EmbeddedPair>& corpus, const EvalSettings& settings,
                    const std::string& variant) {
  EvalReport rep;
  rep.variant = variant;
  std::size_t n_frame = 0, n_text = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const EmbeddedPair& pair = corpus[i];
    pair.validate();
    Rng rng = make_rng(settings.seed, "eval/" + std::to_string(i));
    PairEval pe;
    pe.index = i;
    pe.summary = model.summarize(pair, &rng);
    pe.pred_frame = pe.summary.frame_index;
    pe.gt_frame = pair.gt_frame;
    if (pair.gt_frame) {
      pe.fa = frame_hit(pe.pred_frame, *pair.gt_frame, settings.fa_window);
      pe.iou = temporal_iou(pe.pred_frame, *pair.gt_frame, settings.iou_half_width, pair.m_frames());
      rep.fa += pe.fa;
      rep.iou += pe.iou;
      ++n_frame;
    }
    if (pair.gt_sentence) {
      const auto cand = decode::summary_tokens(pe.summary, pair.tokens);
      std::vector<std::string> ref;
      for (std::size_t w : *pair.gt_sentence) ref.push_back(pair.tokens.at(w));
      pe.rouge1 = rouge_n(cand, ref, 1);
      pe.rouge2 = rouge_n(cand, ref, 2);
      pe.rougeL = rouge_l(cand, ref);
      rep.rouge1 += pe.rouge1;
      rep.rouge2 += pe.rouge2;
      rep.rougeL += pe.rougeL;
      ++n_text;
    }
    rep.pairs.push_back(std::move(pe));
  }
  if (n_frame > 0) {
    rep.fa /= static_cast<double>(n_frame);
    rep.iou /= static_cast<double>(n_frame);
  }
  if (n_text > 0) {
    rep.rouge1 /= static_cast<double>(n_text);
    rep.rouge2 /= static_cast<double>(n_text);
    rep.rougeL /= static_cast<double>(n_text);
  }
  return rep;
}

void write_report_table(std::ostream& os, const std::vector<EvalReport>& reports, const std::string& key_header) {
  std::size_t w = key_header.size();
  for (const auto& r : reports) w = std::max(w, r.variant.size());
  char buf[256];
  os << "# ROUGE: lowercase exact-token match, no stemming, no stopword removal\n";
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s  %8s  %8s\n", static_cast<int>(w), key_header.c_str(), "FA",
                "IoU", "R-1", "R-2", "R-L");
  os << buf;
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %8.4f  %8.4f  %8.4f\n", static_cast<int>(w),
                  r.variant.c_str(), r.fa, r.iou, r.rouge1, r.rouge2, r.rougeL);
    os << buf;
  }
}

void write_report_csv(std::ostream& os, const std::vector<EvalReport>& reports, const std::string& key_header) {
  os << key_header << ",fa,iou,r1,r2,rl\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g\n", r.fa, r.iou, r.rouge1, r.rouge2, r.rougeL);
    os << r.variant << buf;
  }
}

void write_pair_csv(std::ostream& os, const EvalReport& report) {
  os << "index,pred_frame,gt_frame,fa,iou,r1,r2,rl\n";
  char buf[256];
  for (const auto& p : report.pairs) {
    const std::string gt = p.gt_frame ? std::to_string(*p.gt_frame) : "";
    std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", p.index, p.pred_frame, gt.c_str(),
                  p.fa, p.iou, p.rouge1, p.rouge2, p.rougeL);
    os << buf;
  }
}

}  // namespace xsum
