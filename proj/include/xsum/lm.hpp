#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace xsum {

/// Sentence log-probability plus per-token unigram probabilities.
class LmInterface {
 public:
  virtual ~LmInterface() = default;
  /// Natural-log probability of the whole token sequence.
  virtual double log_prob(std::span<const std::string> sentence) const = 0;
  /// Unigram probability in (0, 1]; throws VocabularyError for unknown tokens.
  virtual double unigram(const std::string& token) const = 0;
};

/// Token → probability map. Files hold `<token> <probability>` lines and are
/// normalized at load time.
class UnigramTable {
 public:
  UnigramTable() = default;
  explicit UnigramTable(std::map<std::string, double> weights);

  static UnigramTable parse(std::istream& is);
  static UnigramTable load(const std::filesystem::path& path);
  void write(std::ostream& os) const;

  double prob(const std::string& token) const;
  bool contains(const std::string& token) const { return probs_.count(token) != 0; }
  std::size_t size() const { return probs_.size(); }
  const std::map<std::string, double>& entries() const { return probs_; }

 private:
  std::map<std::string, double> probs_;
};

/// Add-k smoothed bigram model with a sentence-start context.
class BigramLm final : public LmInterface {
 public:
  BigramLm() = default;
  static BigramLm train(const std::vector<std::vector<std::string>>& sentences, double smoothing = 0.1);

  double log_prob(std::span<const std::string> sentence) const override;
  double unigram(const std::string& token) const override { return unigrams_.prob(token); }
  const UnigramTable& unigrams() const { return unigrams_; }
  double bigram(const std::string& prev, const std::string& token) const;

 private:
  UnigramTable unigrams_;
  std::map<std::string, std::map<std::string, double>> counts_;
  std::map<std::string, double> context_totals_;
  double smoothing_ = 0.1;
};

}  // namespace xsum
