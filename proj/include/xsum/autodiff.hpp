#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xsum/tensor.hpp"

namespace xsum {

/// A learnable weight together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;

  Parameter() = default;
  Parameter(std::string n, Tensor2 v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad = Tensor2(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor2& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order; the
/// backward pass replays recorded closures in reverse, once each.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor2 value);
  Var leaf(Parameter& param);

  /// Appends an op result. `parents` decide whether gradients are tracked;
  /// `backward` is kept only when recording and some parent needs gradients.
  Var record(Tensor2 value, std::initializer_list<Var> parents, BackwardFn backward);
  Var record(Tensor2 value, std::span<const Var> parents, BackwardFn backward);

  const Tensor2& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient slot of a node; allocated on first use.
  Tensor2& grad(std::size_t id);
  void accumulate(std::size_t id, const Tensor2& g);

  /// Seeds d(loss)/d(loss) = 1, replays the tape and adds leaf gradients into
  /// their Parameters. Throws StateError if nothing was recorded.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t recorded_ops() const noexcept { return recorded_ops_; }
  std::size_t backward_visits() const noexcept { return backward_visits_; }

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
  std::size_t recorded_ops_ = 0;
  std::size_t backward_visits_ = 0;
};

/// Dense affine map y = x·W + b with W in×out and b 1×out.
struct Affine {
  Parameter weight;
  Parameter bias;

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
};

// Tape-recording primitives. Each validates shapes exactly like its ops::
// counterpart and records a backward closure when gradients are needed.
namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var matmul_tn(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);
Var sigmoid(Var a);
Var gelu(Var a);
Var exp(Var a);
Var softmax(Var a, ops::Axis axis);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var broadcast_prepend(Var vec, Var rows);
Var mean_rows(Var a);
Var sum(Var a);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
Var attention(Var q, Var k, Var v, std::size_t heads);
/// Row-vector to diagonal matrix.
Var diag(Var vec);
/// Column vector n×1 repeated across `cols` columns.
Var repeat_cols(Var column, std::size_t cols);

/// Forward value is `hard + (soft - soft_ref)`, backward is the identity onto
/// `soft`. With soft_ref equal to soft's value the forward is exactly `hard`.
Var straight_through(const Tensor2& hard, Var soft, const Tensor2& soft_ref);
inline Var straight_through(const Tensor2& hard, Var soft) {
  return straight_through(hard, soft, soft.value());
}

Var affine(Var x, Var weight, Var bias);
Var affine(Tape& tape, Var x, Affine& head);

}  // namespace ad
}  // namespace xsum
