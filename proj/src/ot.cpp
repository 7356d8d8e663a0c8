#include "xsum/ot.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <numeric>

#include "xsum/error.hpp"

namespace xsum::ot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMassTol = 1e-9;

void check_weights(const Tensor2& w, const char* what) {
  if (w.rows() != 1 || w.cols() == 0) {
    throw DimensionError(std::string(what) + ": weights must be a nonempty row vector, got " +
                         w.shape_str());
  }
  double total = 0.0;
  for (double v : w.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + ": negative or non-finite weight");
    total += v;
  }
  if (std::abs(total - 1.0) > kMassTol) {
    throw ConfigError(std::string(what) + ": weights sum to " + std::to_string(total) + ", not 1");
  }
}

void check_problem(const Tensor2& a, const Tensor2& b, const Tensor2& cost, const char* what) {
  check_weights(a, what);
  check_weights(b, what);
  if (cost.rows() != a.cols() || cost.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": cost " + cost.shape_str() + " for marginals " +
                         a.shape_str() + " and " + b.shape_str());
  }
}

double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : -kInf; }

/// One Sinkhorn run, optionally keeping every iterate for the backward pass.
struct Iterates {
  std::vector<std::vector<double>> f, g;
};

SinkhornResult run_sinkhorn(const Tensor2& a, const Tensor2& b, const Tensor2& cost,
                            const SinkhornOptions& opts, Iterates* keep) {
  if (!(opts.epsilon > 0.0) || !std::isfinite(opts.epsilon)) {
    throw ConfigError("sinkhorn: epsilon must be > 0");
  }
  if (opts.max_iters == 0) throw ConfigError("sinkhorn: max_iters must be >= 1");
  check_problem(a, b, cost, "sinkhorn");
  const std::size_t P = a.cols(), Q = b.cols();
  const double eps = opts.epsilon;
  std::vector<double> log_a(P), log_b(Q);
  for (std::size_t i = 0; i < P; ++i) log_a[i] = log_or_neg_inf(a[i]);
  for (std::size_t j = 0; j < Q; ++j) log_b[j] = log_or_neg_inf(b[j]);

  std::vector<double> f(P, 0.0), g(Q, 0.0), buf(std::max(P, Q));
  SinkhornResult res;
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    for (std::size_t i = 0; i < P; ++i) {
      if (a[i] == 0.0) {
        f[i] = -kInf;
        continue;
      }
      double mx = -kInf;
      for (std::size_t j = 0; j < Q; ++j) mx = std::max(mx, buf[j] = (g[j] - cost(i, j)) / eps);
      double s = 0.0;
      for (std::size_t j = 0; j < Q; ++j) s += std::exp(buf[j] - mx);
      f[i] = eps * log_a[i] - eps * (mx + std::log(s));
    }
    for (std::size_t j = 0; j < Q; ++j) {
      if (b[j] == 0.0) {
        g[j] = -kInf;
        continue;
      }
      double mx = -kInf;
      for (std::size_t i = 0; i < P; ++i) mx = std::max(mx, buf[i] = (f[i] - cost(i, j)) / eps);
      double s = 0.0;
      for (std::size_t i = 0; i < P; ++i) s += std::exp(buf[i] - mx);
      g[j] = eps * log_b[j] - eps * (mx + std::log(s));
    }
    if (keep != nullptr) {
      keep->f.push_back(f);
      keep->g.push_back(g);
    }
    double violation = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      double row = 0.0;
      if (a[i] > 0.0) {
        for (std::size_t j = 0; j < Q; ++j) {
          if (b[j] > 0.0) row += std::exp((f[i] + g[j] - cost(i, j)) / eps);
        }
      }
      violation += std::abs(row - a[i]);
    }
    res.violations.push_back(violation);
    res.iterations = it + 1;
    if (violation < opts.tol) {
      res.converged = true;
      break;
    }
  }

  res.plan.cost = cost;
  res.plan.gamma = Tensor2(P, Q);
  double total = 0.0;
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < Q; ++j) {
      if (a[i] == 0.0 || b[j] == 0.0) continue;
      const double gm = std::exp((f[i] + g[j] - cost(i, j)) / eps);
      res.plan.gamma(i, j) = gm;
      total += gm * cost(i, j);
    }
  res.plan.total_cost = total;
  res.distance = total;
  return res;
}

}  // namespace

void Pmf::validate() const {
  check_weights(weights, "pmf");
  if (support.rows() != weights.cols()) {
    throw DimensionError("pmf: " + std::to_string(weights.cols()) + " weights but " +
                         std::to_string(support.rows()) + " support points");
  }
}

Pmf features_to_pmf(const Tensor2& x) {
  if (x.size() == 0) throw DimensionError("features_to_pmf: empty input " + x.shape_str());
  if (!x.all_finite()) throw EvaluationError("features_to_pmf: non-finite features");
  const Tensor2 v = x.rows() == 1 ? x : ops::mean_rows(x);
  Pmf p;
  p.weights = ops::softmax(v, ops::Axis::Cols);
  p.support = Tensor2(v.cols(), v.cols());
  for (std::size_t i = 0; i < v.cols(); ++i) p.support(i, i) = v[i];
  return p;
}

Tensor2 euclidean_cost(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("cost_matrix: support dimensions " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor2 c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double diff = a(i, k) - b(j, k);
        s += diff * diff;
      }
      c(i, j) = std::sqrt(s);
    }
  return c;
}

Tensor2 cost_matrix(const Pmf& p, const Pmf& q) { return euclidean_cost(p.support, q.support); }

TransportPlan ot_exact(const Pmf& p, const Pmf& q) {
  p.validate();
  q.validate();
  if (p.size() * q.size() > kExactMaxCells) {
    throw OracleScaleError("ot_exact: " + std::to_string(p.size()) + "x" + std::to_string(q.size()) +
                           " exceeds the exact-solver limit of " + std::to_string(kExactMaxCells) +
                           " cells; use ot_sinkhorn");
  }
  return ot_exact(p.weights, q.weights, cost_matrix(p, q));
}

TransportPlan ot_exact(const Tensor2& a, const Tensor2& b, const Tensor2& cost) {
  check_problem(a, b, cost, "ot_exact");
  const std::size_t P = a.cols(), Q = b.cols();
  if (P * Q > kExactMaxCells) {
    throw OracleScaleError("ot_exact: " + std::to_string(P) + "x" + std::to_string(Q) +
                           " exceeds the exact-solver limit of " + std::to_string(kExactMaxCells) +
                           " cells; use ot_sinkhorn");
  }
  constexpr double tiny = 1e-15;
  std::vector<double> supply(a.values().begin(), a.values().end());
  std::vector<double> demand(b.values().begin(), b.values().end());
  Tensor2 flow(P, Q);

  // Successive shortest paths. Left node i, right node j; residual arcs are
  // i→j (cost C_ij, unbounded) and j→i (cost −C_ij, capacity flow_ij).
  const std::size_t max_rounds = 4 * (P + Q) * (P + Q) + 64;
  for (std::size_t round = 0;; ++round) {
    const double remaining = std::accumulate(demand.begin(), demand.end(), 0.0);
    if (remaining <= 1e-13) break;
    if (round >= max_rounds) throw EvaluationError("ot_exact: augmentation did not terminate");

    std::vector<double> dl(P, kInf), dr(Q, kInf);
    std::vector<long> pred_l(P, -1), pred_r(Q, -1);  // pred_l[i]: right node j; pred_r[j]: left node i
    for (std::size_t i = 0; i < P; ++i)
      if (supply[i] > tiny) dl[i] = 0.0;
    for (std::size_t pass = 0; pass < P + Q + 1; ++pass) {
      bool changed = false;
      for (std::size_t i = 0; i < P; ++i) {
        if (dl[i] == kInf) continue;
        for (std::size_t j = 0; j < Q; ++j) {
          const double nd = dl[i] + cost(i, j);
          if (nd < dr[j] - 1e-15) {
            dr[j] = nd;
            pred_r[j] = static_cast<long>(i);
            changed = true;
          }
        }
      }
      for (std::size_t j = 0; j < Q; ++j) {
        if (dr[j] == kInf) continue;
        for (std::size_t i = 0; i < P; ++i) {
          if (flow(i, j) <= tiny) continue;
          const double nd = dr[j] - cost(i, j);
          if (nd < dl[i] - 1e-15) {
            dl[i] = nd;
            pred_l[i] = static_cast<long>(j);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }

    long best = -1;
    for (std::size_t j = 0; j < Q; ++j) {
      if (demand[j] > tiny && dr[j] < kInf && (best < 0 || dr[j] < dr[static_cast<std::size_t>(best)])) {
        best = static_cast<long>(j);
      }
    }
    if (best < 0) break;

    // Walk back to find the bottleneck.
    double push = demand[static_cast<std::size_t>(best)];
    std::size_t j = static_cast<std::size_t>(best);
    std::size_t start = 0;
    for (std::size_t guard = 0; guard <= P + Q; ++guard) {
      const auto i = static_cast<std::size_t>(pred_r[j]);
      if (pred_l[i] < 0) {
        start = i;
        break;
      }
      const auto jp = static_cast<std::size_t>(pred_l[i]);
      push = std::min(push, flow(i, jp));
      j = jp;
    }
    push = std::min(push, supply[start]);

    j = static_cast<std::size_t>(best);
    demand[j] -= push;
    for (std::size_t guard = 0; guard <= P + Q; ++guard) {
      const auto i = static_cast<std::size_t>(pred_r[j]);
      flow(i, j) += push;
      if (pred_l[i] < 0) {
        supply[i] -= push;
        break;
      }
      const auto jp = static_cast<std::size_t>(pred_l[i]);
      flow(i, jp) -= push;
      j = jp;
    }
  }

  TransportPlan plan;
  plan.gamma = flow;
  plan.cost = cost;
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < Q; ++j) {
      if (plan.gamma(i, j) < 0.0) plan.gamma(i, j) = 0.0;
      plan.total_cost += plan.gamma(i, j) * cost(i, j);
    }
  return plan;
}

SinkhornResult ot_sinkhorn(const Pmf& p, const Pmf& q, const SinkhornOptions& opts) {
  p.validate();
  q.validate();
  return run_sinkhorn(p.weights, q.weights, cost_matrix(p, q), opts, nullptr);
}

SinkhornResult sinkhorn(const Tensor2& a, const Tensor2& b, const Tensor2& cost,
                        const SinkhornOptions& opts) {
  return run_sinkhorn(a, b, cost, opts, nullptr);
}

PmfVar features_to_pmf(Var x) {
  if (x.value().size() == 0) throw DimensionError("features_to_pmf: empty input " + x.value().shape_str());
  Var v = x.rows() == 1 ? x : ad::mean_rows(x);
  return PmfVar{ad::softmax(v, ops::Axis::Cols), ad::diag(v)};
}

Var euclidean_cost(Var a, Var b) {
  Tensor2 c = euclidean_cost(a.value(), b.value());
  return a.tape().record(c, {a, b}, [a, b, c](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const Tensor2& av = a.value();
    const Tensor2& bv = b.value();
    Tensor2 ga(av.rows(), av.cols()), gb(bv.rows(), bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < bv.rows(); ++j) {
        if (c(i, j) == 0.0 || g(i, j) == 0.0) continue;  // subgradient 0 at coincident points
        const double w = g(i, j) / c(i, j);
        for (std::size_t k = 0; k < av.cols(); ++k) {
          const double diff = av(i, k) - bv(j, k);
          ga(i, k) += w * diff;
          gb(j, k) -= w * diff;
        }
      }
    t.accumulate(a.id(), ga);
    t.accumulate(b.id(), gb);
  });
}

Var sinkhorn_distance(Var a, Var b, Var cost, const SinkhornOptions& opts, SinkhornResult* info) {
  auto iterates = std::make_shared<Iterates>();
  SinkhornResult res = run_sinkhorn(a.value(), b.value(), cost.value(), opts, iterates.get());
  const Tensor2 gamma = res.plan.gamma;
  const double eps = opts.epsilon;
  Tensor2 out(1, 1, res.distance);
  if (info != nullptr) *info = std::move(res);
  return a.tape().record(std::move(out), {a, b, cost}, [a, b, cost, gamma, iterates, eps](Tape& t, std::size_t self) {
    const double up = t.grad(self)[0];
    const Tensor2& av = a.value();
    const Tensor2& bv = b.value();
    const Tensor2& c = cost.value();
    const std::size_t P = av.cols(), Q = bv.cols();
    Tensor2 ga(1, P), gb(1, Q), gc(P, Q);
    std::vector<double> fbar(P, 0.0), gbar(Q, 0.0);
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t j = 0; j < Q; ++j) {
        const double gm = gamma(i, j);
        if (gm == 0.0) continue;
        gc(i, j) += up * gm * (1.0 - c(i, j) / eps);
        fbar[i] += up * gm * c(i, j) / eps;
        gbar[j] += up * gm * c(i, j) / eps;
      }
    const auto& F = iterates->f;
    const auto& G = iterates->g;
    for (std::size_t it = F.size(); it-- > 0;) {
      const auto& f = F[it];
      const auto& g = G[it];
      // g = ε log b − ε LSE_i((f_i − C_ij)/ε): column-softmax weights γ_ij / b_j.
      for (std::size_t j = 0; j < Q; ++j) {
        if (bv[j] == 0.0) continue;
        const double gj = gbar[j];
        if (gj != 0.0) {
          for (std::size_t i = 0; i < P; ++i) {
            if (av[i] == 0.0) continue;
            const double w = std::exp((f[i] + g[j] - c(i, j)) / eps) / bv[j];
            fbar[i] -= w * gj;
            gc(i, j) += w * gj;
          }
          gb[j] += eps * gj / bv[j];
        }
      }
      // f = ε log a − ε LSE_j((g_prev_j − C_ij)/ε): row-softmax weights.
      std::fill(gbar.begin(), gbar.end(), 0.0);
      for (std::size_t i = 0; i < P; ++i) {
        if (av[i] == 0.0) continue;
        const double fi = fbar[i];
        if (fi == 0.0) continue;
        for (std::size_t j = 0; j < Q; ++j) {
          const double gprev = it == 0 ? 0.0 : G[it - 1][j];  // −∞ for empty columns
          const double w = std::exp((f[i] + gprev - c(i, j)) / eps) / av[i];
          gbar[j] -= w * fi;
          gc(i, j) += w * fi;
        }
        ga[i] += eps * fi / av[i];
      }
      std::fill(fbar.begin(), fbar.end(), 0.0);
    }
    t.accumulate(a.id(), ga);
    t.accumulate(b.id(), gb);
    t.accumulate(cost.id(), gc);
  });
}

Var wasserstein(Var x, Var y, const SinkhornOptions& opts, SinkhornResult* info) {
  const PmfVar p = features_to_pmf(x);
  const PmfVar q = features_to_pmf(y);
  return sinkhorn_distance(p.weights, q.weights, euclidean_cost(p.support, q.support), opts, info);
}

}  // namespace xsum::ot
