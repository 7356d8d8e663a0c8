#include "xsum/lm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "xsum/error.hpp"

namespace xsum {

namespace {
const std::string kStart = "<s>";
}

UnigramTable::UnigramTable(std::map<std::string, double> weights) {
  double total = 0.0;
  for (const auto& [tok, w] : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw VocabularyError("unigram weight for '" + tok + "' must be positive");
    }
    total += w;
  }
  for (auto& [tok, w] : weights) w /= total;
  probs_ = std::move(weights);
}

UnigramTable UnigramTable::parse(std::istream& is) {
  std::map<std::string, double> weights;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok, prob, extra;
    if (!(ls >> tok)) continue;
    if (!(ls >> prob) || (ls >> extra)) {
      throw IngestionError("unigram table line " + std::to_string(lineno) + ": expected '<token> <probability>'");
    }
    double p = 0.0;
    try {
      p = std::stod(prob);
    } catch (const std::logic_error&) {
      throw IngestionError("unigram table line " + std::to_string(lineno) + ": bad probability");
    }
    weights[tok] += p;
  }
  if (weights.empty()) throw IngestionError("unigram table is empty");
  return UnigramTable(std::move(weights));
}

UnigramTable UnigramTable::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw PathError("cannot read unigram table " + path.string());
  return parse(is);
}

void UnigramTable::write(std::ostream& os) const {
  char buf[32];
  for (const auto& [tok, p] : probs_) {
    std::snprintf(buf, sizeof buf, "%.17g", p);
    os << tok << ' ' << buf << '\n';
  }
}

double UnigramTable::prob(const std::string& token) const {
  auto it = probs_.find(token);
  if (it == probs_.end()) throw VocabularyError("token '" + token + "' is not in the unigram table");
  return it->second;
}

BigramLm BigramLm::train(const std::vector<std::vector<std::string>>& sentences, double smoothing) {
  if (!(smoothing > 0.0)) throw ConfigError("bigram smoothing must be > 0");
  BigramLm lm;
  lm.smoothing_ = smoothing;
  std::map<std::string, double> counts;
  for (const auto& s : sentences) {
    const std::string* prev = &kStart;
    for (const auto& tok : s) {
      counts[tok] += 1.0;
      lm.counts_[*prev][tok] += 1.0;
      lm.context_totals_[*prev] += 1.0;
      prev = &tok;
    }
  }
  if (counts.empty()) throw ConfigError("bigram LM needs at least one token");
  lm.unigrams_ = UnigramTable(std::move(counts));
  return lm;
}

double BigramLm::bigram(const std::string& prev, const std::string& token) const {
  if (!unigrams_.contains(token)) throw VocabularyError("token '" + token + "' is not in the LM vocabulary");
  const double vocab = static_cast<double>(unigrams_.size());
  double pair = 0.0, total = 0.0;
  if (auto it = counts_.find(prev); it != counts_.end()) {
    if (auto jt = it->second.find(token); jt != it->second.end()) pair = jt->second;
    total = context_totals_.at(prev);
  }
  return (pair + smoothing_) / (total + smoothing_ * vocab);
}

double BigramLm::log_prob(std::span<const std::string> sentence) const {
  double lp = 0.0;
  const std::string* prev = &kStart;
  for (const auto& tok : sentence) {
    lp += std::log(bigram(*prev, tok));
    prev = &tok;
  }
  return lp;
}

}  // namespace xsum
