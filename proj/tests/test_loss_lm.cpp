#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "xsum/error.hpp"
#include "xsum/grad_check.hpp"
#include "xsum/lm.hpp"
#include "xsum/loss.hpp"

using namespace xsum;
using testutil::random_tensor;

namespace {

// P_LM(sentence) = Π P(t)^power under a fixed unigram table.
class PowerLm final : public LmInterface {
 public:
  PowerLm(std::map<std::string, double> p, double power) : p_(std::move(p)), power_(power) {}
  double log_prob(std::span<const std::string> s) const override {
    double lp = 0;
    for (const auto& t : s) lp += power_ * std::log(p_.at(t));
    return lp;
  }
  double unigram(const std::string& t) const override { return p_.at(t); }

 private:
  std::map<std::string, double> p_;
  double power_;
};

// Bigram table given directly.
class TableLm final : public LmInterface {
 public:
  std::map<std::pair<std::string, std::string>, double> bigrams;
  std::map<std::string, double> unigrams;
  double log_prob(std::span<const std::string> s) const override {
    double lp = 0;
    std::string prev = "<s>";
    for (const auto& t : s) {
      lp += std::log(bigrams.at({prev, t}));
      prev = t;
    }
    return lp;
  }
  double unigram(const std::string& t) const override { return unigrams.at(t); }
};

}  // namespace

TEST_CASE("slor examples") {
  const std::map<std::string, double> p{{"a", 0.5}, {"b", 0.3}, {"c", 0.2}};
  const std::vector<std::string> s{"a", "b", "c", "a"};
  CHECK(std::abs(loss::slor(s, PowerLm(p, 1.0))) < 1e-15);
  const std::vector<std::string> one{"b"};
  CHECK(loss::slor(one, PowerLm(p, 2.0)) == doctest::Approx(std::log(0.3)).epsilon(1e-15));
  CHECK_THROWS_AS(loss::slor(std::vector<std::string>{}, PowerLm(p, 1.0)), ConfigError);

  TableLm lm;
  lm.unigrams = {{"the", 0.3}, {"cat", 0.1}, {"sat", 0.05}, {"down", 0.05}};
  lm.bigrams = {{{"<s>", "the"}, 0.4}, {{"the", "cat"}, 0.2}, {{"cat", "sat"}, 0.5},
                {{"sat", "down"}, 0.3}, {{"down", "the"}, 0.1}};
  const std::vector<std::string> five{"the", "cat", "sat", "down", "the"};
  const double by_hand = (std::log(0.4 * 0.2 * 0.5 * 0.3 * 0.1) - std::log(0.3 * 0.1 * 0.05 * 0.05 * 0.3)) / 5.0;
  CHECK(loss::slor(five, lm) == doctest::Approx(by_hand).epsilon(1e-14));
}

TEST_CASE("total loss examples") {
  const loss::LossTerms t{0.2, 0.3, 0.5};
  CHECK(loss::total_loss(t, 0.7, {0, 0, 0, 0}) == 0.0);
  CHECK(loss::total_loss(t, 0.7, {1, 1, 1, 0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(loss::total_loss(loss::LossTerms{}, 0.4, {0, 0, 0, 1}) == doctest::Approx(-0.4).epsilon(1e-15));
  loss::LossWeights bad{-1, 1, 1, 1};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  loss::LossWeights neg_f{1, 1, 1, -0.5};
  CHECK_NOTHROW(neg_f.validate());
}

TEST_CASE("tape total loss equals the weighted terms") {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape(false);
    const double lt = uniform_open(rng), lv = uniform_open(rng), lo = uniform_open(rng), s = uniform_open(rng) - 0.5;
    const loss::LossWeights w{uniform_open(rng), uniform_open(rng), uniform_open(rng), uniform_open(rng)};
    const loss::LossVars v{tape.constant(Tensor2(1, 1, lt)), tape.constant(Tensor2(1, 1, lv)),
                           tape.constant(Tensor2(1, 1, lo))};
    const double expected = w.lambda_t * lt + w.lambda_v * lv + w.lambda_o * lo - w.lambda_f * s;
    CHECK(std::abs(loss::total_loss(tape, v, s, w).value().item() - expected) < 1e-12);
    CHECK(std::abs(loss::total_loss(loss::LossTerms{lt, lv, lo}, s, w) - expected) < 1e-12);
  }
}

TEST_CASE("loss terms examples") {
  Rng rng(2);
  const ot::SinkhornOptions opts{0.05, 2000, 1e-9};
  const Tensor2 x = random_tensor(6, 8, rng);
  const Tensor2 high = ops::mean_rows(x);
  Tape tape(false);
  const auto same = loss::loss_terms(tape.constant(high), tape.constant(x), tape.constant(high), tape.constant(x), opts);
  CHECK(same.l_t.value().item() < opts.epsilon * std::log(8.0) + 1e-6);
  const auto deb =
      loss::loss_terms(tape.constant(high), tape.constant(x), tape.constant(high), tape.constant(x), opts, true);
  CHECK(std::abs(deb.l_t.value().item()) < 1e-9);
  CHECK(std::abs(deb.l_o.value().item()) < 1e-9);
}

TEST_CASE("loss terms are nonnegative and L_O is symmetric") {
  Rng rng(3);
  const ot::SinkhornOptions opts{0.05, 2000, 1e-9};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 4 + trial % 5;
    const Tensor2 th = random_tensor(1, d, rng), ts = random_tensor(3, d, rng);
    const Tensor2 vh = random_tensor(1, d, rng), vs = random_tensor(2, d, rng);
    Tape tape(false);
    const auto t = loss::loss_terms(tape.constant(th), tape.constant(ts), tape.constant(vh), tape.constant(vs), opts);
    CHECK(t.l_t.value().item() >= 0.0);
    CHECK(t.l_v.value().item() >= 0.0);
    CHECK(t.l_o.value().item() >= 0.0);
    const double swapped = loss::divergence(tape.constant(vs), tape.constant(ts), opts, false).value().item();
    CHECK(std::abs(swapped - t.l_o.value().item()) < 1e-6);
    const double deb_ab = loss::divergence(tape.constant(ts), tape.constant(vs), opts, true).value().item();
    const double deb_ba = loss::divergence(tape.constant(vs), tape.constant(ts), opts, true).value().item();
    CHECK(std::abs(deb_ab - deb_ba) < 1e-6);
    CHECK(deb_ab >= -1e-9);
  }
}

TEST_CASE("debiased divergence gradients") {
  Rng rng(4);
  Parameter x = testutil::random_param("x", 3, 4, rng, 0.5);
  Parameter y = testutil::random_param("y", 2, 4, rng, 0.5);
  const ot::SinkhornOptions opts{0.1, 30, 0.0};
  auto fn = [&](Tape& t) { return loss::divergence(t.leaf(x), t.leaf(y), opts, true); };
  const auto rep = grad_check(fn, {&x, &y}, 1e-6, 1e-4);
  CAPTURE(rep.max_rel_error);
  CHECK(rep.passed);
}

TEST_CASE("unigram table") {
  UnigramTable t({{"a", 2.0}, {"b", 6.0}});
  CHECK(t.prob("a") == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(t.size() == 2);
  CHECK_THROWS_AS(t.prob("zzz"), VocabularyError);
  CHECK_THROWS_AS(UnigramTable({{"a", 0.0}}), VocabularyError);

  std::stringstream ss;
  t.write(ss);
  const UnigramTable back = UnigramTable::parse(ss);
  CHECK(back.prob("b") == doctest::Approx(0.75).epsilon(1e-15));

  std::stringstream bad("a 0.5\nb\n");
  CHECK_THROWS_AS(UnigramTable::parse(bad), IngestionError);
  std::stringstream nan("a x\n");
  CHECK_THROWS_AS(UnigramTable::parse(nan), IngestionError);
  std::stringstream empty("");
  CHECK_THROWS_AS(UnigramTable::parse(empty), IngestionError);
  CHECK_THROWS_AS(UnigramTable::load("/nonexistent/unigrams.txt"), PathError);
}

TEST_CASE("bigram LM") {
  const std::vector<std::vector<std::string>> corpus{{"a", "b", "a"}, {"b", "b"}};
  const BigramLm lm = BigramLm::train(corpus, 0.5);
  CHECK(lm.unigram("a") == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(lm.unigram("b") == doctest::Approx(0.6).epsilon(1e-15));
  // Context "a" is followed once by "b" out of one occurrence; vocabulary has 2 words.
  CHECK(lm.bigram("a", "b") == doctest::Approx((1.0 + 0.5) / (1.0 + 1.0)).epsilon(1e-15));
  CHECK(lm.bigram("a", "a") == doctest::Approx(0.5 / 2.0).epsilon(1e-15));
  const std::vector<std::string> s{"b", "a"};
  CHECK(lm.log_prob(s) == doctest::Approx(std::log(lm.bigram("<s>", "b")) + std::log(lm.bigram("b", "a"))));
  for (const std::string prev : {"a", "b"}) {
    CHECK(lm.bigram(prev, "a") + lm.bigram(prev, "b") == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(lm.bigram("a", "c"), VocabularyError);
  CHECK_THROWS_AS(BigramLm::train({}, 0.5), ConfigError);
  CHECK_THROWS_AS(BigramLm::train(corpus, 0.0), ConfigError);
}
