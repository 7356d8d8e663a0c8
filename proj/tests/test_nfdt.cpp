#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "xsum/embed.hpp"
#include "xsum/error.hpp"
#include "xsum/grad_check.hpp"
#include "xsum/nfdt.hpp"

using namespace xsum;
using testutil::random_tensor;

namespace {

Affine zero_affine(std::size_t in, std::size_t out) {
  return Affine{Parameter("w", Tensor2(in, out)), Parameter("b", Tensor2(1, out))};
}

Affine random_affine(std::size_t in, std::size_t out, Rng& rng, double scale = 0.5) {
  return Affine{Parameter("w", random_tensor(in, out, rng, scale)), Parameter("b", random_tensor(1, out, rng, scale))};
}

EmbeddedPair small_pair(std::size_t n, std::size_t m, std::size_t d, Rng& rng) {
  EmbeddedPair p;
  p.text_low = random_tensor(n, d, rng);
  p.video_low = random_tensor(m, d, rng);
  p.text_high = pool_high(p.text_low);
  p.video_high = pool_high(p.video_low);
  for (std::size_t i = 0; i < n; ++i) p.tokens.push_back("w" + std::to_string(i));
  return p;
}

}  // namespace

TEST_CASE("salience examples") {
  Rng rng(1);
  const Tensor2 x = random_tensor(5, 8, rng);
  const Tensor2 z = nfdt::salience(x, zero_affine(8, 1));
  REQUIRE(z.rows() == 5);
  for (double v : z.values()) CHECK(v == 0.0);

  Affine basis = zero_affine(2, 1);
  basis.weight.value(0, 0) = 1.0;
  const Tensor2 s = nfdt::salience(Tensor2::from_rows({{1, 0}, {0, 1}}), basis);
  CHECK(s(0, 0) == 1.0);
  CHECK(s(1, 0) == 0.0);

  const Tensor2 r = nfdt::salience(x, random_affine(8, 1, rng));
  CHECK(r.rows() == 5);
  CHECK(r.all_finite());
  CHECK_THROWS_AS(nfdt::salience(x, zero_affine(8, 2)), DimensionError);
  CHECK_THROWS_AS(nfdt::salience(x, zero_affine(7, 1)), DimensionError);
}

TEST_CASE("gumbel noise examples") {
  CHECK(nfdt::gumbel_from_uniform(std::exp(-1.0)) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(nfdt::gumbel_from_uniform(std::exp(-std::exp(1.0))) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::isfinite(nfdt::gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(nfdt::gumbel_from_uniform(1.0)));
}

TEST_CASE("gumbel noise mean is the Euler-Mascheroni constant") {
  Rng rng = make_rng(42, "gumbel-mean");
  const auto g = nfdt::gumbel_noise(1000000, rng);
  double mean = 0.0;
  for (double v : g) {
    REQUIRE(std::isfinite(v));
    mean += v;
  }
  mean /= static_cast<double>(g.size());
  CHECK(std::abs(mean - 0.5772156649) < 0.01);
}

TEST_CASE("gumbel softmax examples") {
  const Tensor2 zeros(3, 1);
  for (double tau : {0.1, 0.5, 3.0}) {
    const Tensor2 u = nfdt::gumbel_softmax(Tensor2(3, 1, 1.7), zeros, tau);
    for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  const Tensor2 p = nfdt::gumbel_softmax(Tensor2::column_vector(std::vector<double>{2.0, 0.0}), Tensor2(2, 1), 1.0);
  const double e2 = std::exp(2.0);
  CHECK(p(0, 0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-14));
  CHECK(p(1, 0) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-14));
  CHECK(p(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK_THROWS_AS(nfdt::gumbel_softmax(zeros, zeros, 0.0), ConfigError);
  CHECK_THROWS_AS(nfdt::gumbel_softmax(zeros, zeros, -1.0), ConfigError);
  CHECK_THROWS_AS(nfdt::gumbel_softmax(zeros, Tensor2(2, 1), 1.0), DimensionError);
}

TEST_CASE("gumbel softmax sums to one and ignores a constant shift") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor2 s = random_tensor(7, 1, rng, 5.0);
    const auto g = nfdt::gumbel_noise(7, rng);
    const Tensor2 noise = Tensor2::column_vector(g);
    const Tensor2 p = nfdt::gumbel_softmax(s, noise, 0.5);
    double sum = 0.0;
    for (double v : p.values()) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    Tensor2 shifted = s;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 123.0;
    CHECK(max_abs_diff(nfdt::gumbel_softmax(shifted, noise, 0.5), p) < 1e-12);
  }
}

TEST_CASE("gumbel-max frequencies match softmax") {
  const std::vector<double> s{1.0, 0.5, -0.3, 0.2};
  const Tensor2 expected = ops::softmax(Tensor2::row_vector(s), ops::Axis::Cols);
  Rng rng = make_rng(2024, "gumbel-max");
  std::vector<double> counts(4, 0.0);
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const auto g = nfdt::gumbel_noise(4, rng);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i)
      if (s[i] + g[i] > s[best] + g[best]) best = i;
    counts[best] += 1.0;
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(counts[i] / trials - expected(0, i)) < 0.01);
}

TEST_CASE("top-k selection") {
  const std::vector<double> v{0.5, 0.2, 0.9};
  CHECK(nfdt::topk_indices(v, 2) == std::vector<std::size_t>{2, 0});
  const std::vector<double> ties{0.3, 0.3, 0.3, 0.1};
  CHECK(nfdt::topk_indices(ties, 2) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(nfdt::topk_indices(v, 0), ConfigError);
  CHECK_THROWS_AS(nfdt::topk_indices(v, 4), ConfigError);
}

TEST_CASE("select_topk_shared matches brute-force argsort") {
  Rng rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 6, m = 2 + (trial * 7) % 5, d = 4;
    const EmbeddedPair pair = small_pair(n, m, d, rng);
    const Tensor2 pt = ops::softmax(random_tensor(n, 1, rng), ops::Axis::Rows);
    const Tensor2 pv = ops::softmax(random_tensor(m, 1, rng), ops::Axis::Rows);
    const std::size_t k = 1 + trial % std::min(n, m);
    const auto set = nfdt::select_topk_shared(pair, pt, pv, k);
    auto brute = [&](const Tensor2& p) {
      std::vector<std::size_t> idx(p.rows());
      std::iota(idx.begin(), idx.end(), 0);
      std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p(a, 0) > p(b, 0) || (p(a, 0) == p(b, 0) && a < b); });
      idx.resize(k);
      return idx;
    };
    CHECK(set.text_indices == brute(pt));
    CHECK(set.video_indices == brute(pv));
    REQUIRE(set.selected_rows.rows() == 2 * k);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::equal(set.selected_rows.row(i).begin(), set.selected_rows.row(i).end(),
                       pair.text_low.row(set.text_indices[i]).begin()));
      CHECK(std::equal(set.selected_rows.row(k + i).begin(), set.selected_rows.row(k + i).end(),
                       pair.video_low.row(set.video_indices[i]).begin()));
    }
    CHECK(max_abs_diff(set.pooled, ops::mean_rows(set.selected_rows)) < 1e-15);
  }
}

TEST_CASE("select_topk_shared with k = n = m takes every row") {
  Rng rng(5);
  const EmbeddedPair pair = small_pair(3, 3, 4, rng);
  const Tensor2 p = ops::softmax(random_tensor(3, 1, rng), ops::Axis::Rows);
  const auto set = nfdt::select_topk_shared(pair, p, p, 3);
  auto sorted = set.text_indices;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2});
  CHECK(set.selected_rows.rows() == 6);
  CHECK_THROWS_AS(nfdt::select_topk_shared(pair, p, p, 4), ConfigError);
  CHECK_THROWS_AS(nfdt::select_topk_shared(pair, p, p, 0), ConfigError);
}

TEST_CASE("k from ratio") {
  nfdt::NfdtParams params;
  params.k_ratio = 0.5;
  CHECK(params.k_for(20, 12) == 6);
  params.k_ratio = 0.01;
  CHECK(params.k_for(20, 12) == 1);
  params.k_ratio = 1.0;
  CHECK(params.k_for(3, 5) == 3);
  params.k_ratio = 0.0;
  CHECK_THROWS_AS(params.validate(), ConfigError);
  params.k_ratio = 0.5;
  params.tau = 0.0;
  CHECK_THROWS_AS(params.validate(), ConfigError);
}

TEST_CASE("gate examples") {
  Rng rng(7);
  const Tensor2 low = random_tensor(4, 3, rng);
  const Tensor2 pooled = random_tensor(1, 3, rng);
  const Tensor2 half = nfdt::gate(pooled, low, zero_affine(6, 3));
  CHECK(half.rows() == 4);
  CHECK(half.cols() == 3);
  for (double v : half.values()) CHECK(v == 0.5);
  Affine open = zero_affine(6, 3);
  open.bias.value.fill(40.0);
  const Tensor2 ones = nfdt::gate(pooled, low, open);
  for (double v : ones.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(max_abs_diff(nfdt::filter(low, ones), low) < 1e-15);
  const Tensor2 g = nfdt::gate(pooled, low, random_affine(6, 3, rng, 2.0));
  for (double v : g.values()) CHECK((v > 0.0 && v < 1.0));
  CHECK_THROWS_AS(nfdt::gate(pooled, low, zero_affine(3, 3)), DimensionError);
  CHECK_THROWS_AS(nfdt::gate(pooled, low, zero_affine(6, 2)), DimensionError);
}

TEST_CASE("filter examples") {
  const Tensor2 low = Tensor2::from_rows({{2.0, -1.0}, {3.0, 4.0}});
  CHECK(nfdt::filter(low, Tensor2(2, 2, 1.0)) == low);
  const Tensor2 zeroed = nfdt::filter(low, Tensor2(2, 2, 0.0));
  for (double v : zeroed.values()) CHECK(v == 0.0);
  CHECK(nfdt::filter(Tensor2(1, 1, 2.0), Tensor2(1, 1, 0.25)).item() == 0.5);
  CHECK_THROWS_AS(nfdt::filter(low, Tensor2(2, 3, 1.0)), DimensionError);
}

TEST_CASE("gate then filter never grows a row") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor2 low = random_tensor(5, 8, rng);
    const Tensor2 pooled = random_tensor(1, 8, rng);
    const Tensor2 out = nfdt::filter(low, nfdt::gate(pooled, low, random_affine(16, 8, rng, 3.0)));
    for (std::size_t r = 0; r < 5; ++r) {
      double a = 0, b = 0;
      for (std::size_t c = 0; c < 8; ++c) {
        a += out(r, c) * out(r, c);
        b += low(r, c) * low(r, c);
      }
      CHECK(a <= b);
    }
  }
}

TEST_CASE("tape versions agree with the pure forward") {
  Rng rng(21);
  Affine head = random_affine(8, 1, rng);
  Affine gh = random_affine(16, 8, rng);
  const Tensor2 low = random_tensor(5, 8, rng);
  const Tensor2 pooled = random_tensor(1, 8, rng);
  const Tensor2 noise = random_tensor(5, 1, rng);
  Tape tape(false);
  Var s = nfdt::salience(tape, tape.constant(low), head);
  CHECK(max_abs_diff(s.value(), nfdt::salience(low, head)) < 1e-15);
  CHECK(max_abs_diff(nfdt::gumbel_softmax(s, noise, 0.5).value(), nfdt::gumbel_softmax(s.value(), noise, 0.5)) < 1e-15);
  Var g = nfdt::gate(tape, tape.constant(pooled), tape.constant(low), gh);
  CHECK(max_abs_diff(g.value(), nfdt::gate(pooled, low, gh)) < 1e-15);
}

TEST_CASE("straight-through selection gradient reaches the score head") {
  Rng rng(31);
  const std::size_t n = 6, d = 4, k = 3;
  Affine head = random_affine(d, 1, rng);
  head.weight.name = "score.w";
  head.bias.name = "score.b";
  const Tensor2 low = random_tensor(n, d, rng);
  const Tensor2 noise = random_tensor(n, 1, rng, 0.3);
  const Tensor2 readout = random_tensor(k, d, rng);

  // Freeze the hard choice and the straight-through reference at the base point.
  Tensor2 ref;
  std::vector<std::size_t> idx;
  {
    Tape t(false);
    ref = nfdt::gumbel_softmax(nfdt::salience(t, t.constant(low), head), noise, 0.5).value();
    idx = nfdt::topk_indices(ref.values(), k);
  }
  auto fn = [&](Tape& t) {
    Var probs = nfdt::gumbel_softmax(nfdt::salience(t, t.constant(low), head), noise, 0.5);
    Var rows = nfdt::select_rows(t.constant(low), idx, probs, &ref);
    return ad::sum(ad::mul(rows, t.constant(readout)));
  };
  {
    Tape t;
    head.weight.zero_grad();
    t.backward(fn(t));
    double norm = 0.0;
    for (double g : head.weight.grad.values()) norm += g * g;
    CHECK(norm > 0.0);
    head.weight.zero_grad();
    head.bias.zero_grad();
  }
  const auto rep = grad_check(fn, {&head.weight, &head.bias}, 1e-6, 1e-3);
  CHECK(rep.max_rel_error < 1e-3);
  CHECK(rep.params[0].max_analytic > 0.0);
}
