#pragma once

#include <vector>

#include "xsum/autodiff.hpp"

namespace xsum::ot {

/// Discrete distribution: weights (1×P) on support points (P×D).
struct Pmf {
  Tensor2 weights;
  Tensor2 support;

  std::size_t size() const { return weights.cols(); }
  /// Throws DimensionError/ConfigError on shape or normalization violations.
  void validate() const;
};

struct TransportPlan {
  Tensor2 gamma;  // |p|×|q|
  Tensor2 cost;   // same shape
  double total_cost = 0.0;
};

struct SinkhornOptions {
  double epsilon = 0.05;
  std::size_t max_iters = 500;
  double tol = 1e-6;
};

struct SinkhornResult {
  double distance = 0.0;  // ⟨γ, C⟩
  TransportPlan plan;
  std::size_t iterations = 0;
  bool converged = false;
  /// L1 row-marginal violation after each iteration (columns are exact).
  std::vector<double> violations;
};

/// Matrices are mean-pooled to one d-vector v; weights = softmax(v) and
/// support point i = v_i·e_i.
Pmf features_to_pmf(const Tensor2& x);

/// Pairwise Euclidean distances between support points.
Tensor2 cost_matrix(const Pmf& p, const Pmf& q);
Tensor2 euclidean_cost(const Tensor2& a, const Tensor2& b);

inline constexpr std::size_t kExactMaxCells = 64;

/// Exact transport by successive shortest augmenting paths. Limited to
/// |p|·|q| ≤ 64; larger problems raise OracleScaleError.
TransportPlan ot_exact(const Pmf& p, const Pmf& q);
TransportPlan ot_exact(const Tensor2& a, const Tensor2& b, const Tensor2& cost);

/// Log-domain Sinkhorn on kernel exp(−C/ε). Never throws on
/// non-convergence; check `converged`.
SinkhornResult ot_sinkhorn(const Pmf& p, const Pmf& q, const SinkhornOptions& opts);
SinkhornResult sinkhorn(const Tensor2& a, const Tensor2& b, const Tensor2& cost,
                        const SinkhornOptions& opts);

// Tape versions; gradients flow through weights, supports and every
// Sinkhorn iteration.
struct PmfVar {
  Var weights;
  Var support;
};

PmfVar features_to_pmf(Var x);
Var euclidean_cost(Var a, Var b);
Var sinkhorn_distance(Var a, Var b, Var cost, const SinkhornOptions& opts,
                      SinkhornResult* info = nullptr);
/// W(pmf(x), pmf(y)) via Sinkhorn.
Var wasserstein(Var x, Var y, const SinkhornOptions& opts, SinkhornResult* info = nullptr);

}  // namespace xsum::ot
