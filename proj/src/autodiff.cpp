#include "xsum/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xsum/error.hpp"

namespace xsum {

const Tensor2& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor2 value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Parameter& param) {
  nodes_.push_back(Node{param.value, {}, {}, &param, recording_});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor2 value, std::initializer_list<Var> parents, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::record(Tensor2 value, std::span<const Var> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    throw EvaluationError("non-finite value produced (shape " + value.shape_str() + ")");
  }
  bool track = false;
  if (recording_) {
    for (const Var& p : parents) track = track || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, track ? std::move(backward) : BackwardFn{},
                        nullptr, track});
  if (track) ++recorded_ops_;
  return Var(this, nodes_.size() - 1);
}

Tensor2& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.rows() != n.value.rows()) {
    n.grad = Tensor2(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor2& g) {
  if (!nodes_[id].needs_grad) return;
  grad(id) += g;
}

void Tape::backward(Var loss) {
  if (!recording_ || recorded_ops_ == 0) {
    throw StateError("backward called before any recorded forward pass");
  }
  if (backward_done_) throw StateError("backward already ran on this tape");
  if (loss.value().size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + loss.value().shape_str());
  }
  grad(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
    ++backward_visits_;
  }
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) n.param->grad += n.grad;
  }
  backward_done_ = true;
}

namespace ad {

namespace {

void check_same_tape(Var a, Var b, const char* prim) {
  if (&a.tape() != &b.tape()) throw StateError(std::string(prim) + ": operands on different tapes");
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  return a.tape().record(ops::matmul(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           if (t.needs_grad(a.id())) t.accumulate(a.id(), ops::matmul_nt(g, b.value()));
                           if (t.needs_grad(b.id())) t.accumulate(b.id(), ops::matmul_tn(a.value(), g));
                         });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b, "matmul_nt");
  return a.tape().record(ops::matmul_nt(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           if (t.needs_grad(a.id())) t.accumulate(a.id(), ops::matmul(g, b.value()));
                           if (t.needs_grad(b.id())) t.accumulate(b.id(), ops::matmul_tn(g, a.value()));
                         });
}

Var matmul_tn(Var a, Var b) {
  check_same_tape(a, b, "matmul_tn");
  return a.tape().record(ops::matmul_tn(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           if (t.needs_grad(a.id())) t.accumulate(a.id(), ops::matmul_nt(b.value(), g));
                           if (t.needs_grad(b.id())) t.accumulate(b.id(), ops::matmul(a.value(), g));
                         });
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  return a.tape().record(ops::add(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2 g = t.grad(self);
                           t.accumulate(a.id(), g);
                           t.accumulate(b.id(), g);
                         });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  return a.tape().record(ops::sub(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2 g = t.grad(self);
                           t.accumulate(a.id(), g);
                           t.accumulate(b.id(), ops::scale(g, -1.0));
                         });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  return a.tape().record(ops::mul(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           if (t.needs_grad(a.id())) t.accumulate(a.id(), ops::mul(g, b.value()));
                           if (t.needs_grad(b.id())) t.accumulate(b.id(), ops::mul(g, a.value()));
                         });
}

Var scale(Var a, double s) {
  return a.tape().record(ops::scale(a.value(), s), {a}, [a, s](Tape& t, std::size_t self) {
    t.accumulate(a.id(), ops::scale(t.grad(self), s));
  });
}

Var add_bias(Var a, Var bias) {
  check_same_tape(a, bias, "add_bias");
  return a.tape().record(ops::add_bias(a.value(), bias.value()), {a, bias},
                         [a, bias](Tape& t, std::size_t self) {
                           const Tensor2 g = t.grad(self);
                           t.accumulate(a.id(), g);
                           if (t.needs_grad(bias.id())) {
                             Tensor2 gb(1, g.cols());
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                             t.accumulate(bias.id(), gb);
                           }
                         });
}

Var sigmoid(Var a) {
  Tensor2 y = ops::sigmoid(a.value());
  return a.tape().record(y, {a}, [a, y](Tape& t, std::size_t self) {
    Tensor2 g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
    t.accumulate(a.id(), g);
  });
}

Var gelu(Var a) {
  return a.tape().record(ops::gelu(a.value()), {a}, [a](Tape& t, std::size_t self) {
    constexpr double k = 0.7978845608028654;
    Tensor2 g = t.grad(self);
    const Tensor2& x = a.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double inner = k * (v + 0.044715 * v * v * v);
      const double th = std::tanh(inner);
      const double dinner = k * (1.0 + 3.0 * 0.044715 * v * v);
      g[i] *= 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * dinner;
    }
    t.accumulate(a.id(), g);
  });
}

Var exp(Var a) {
  Tensor2 y = a.value();
  for (double& v : y.values()) v = std::exp(v);
  return a.tape().record(y, {a}, [a, y](Tape& t, std::size_t self) {
    t.accumulate(a.id(), ops::mul(t.grad(self), y));
  });
}

Var softmax(Var a, ops::Axis axis) {
  Tensor2 y = ops::softmax(a.value(), axis);
  return a.tape().record(y, {a}, [a, y, axis](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2 out(y.rows(), y.cols());
    if (axis == ops::Axis::Cols) {
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) out(r, c) = y(r, c) * (g(r, c) - dot);
      }
    } else {
      for (std::size_t c = 0; c < y.cols(); ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < y.rows(); ++r) dot += g(r, c) * y(r, c);
        for (std::size_t r = 0; r < y.rows(); ++r) out(r, c) = y(r, c) * (g(r, c) - dot);
      }
    }
    t.accumulate(a.id(), out);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::vector<Tensor2> values;
  values.reserve(parts.size());
  for (const Var& p : parts) {
    check_same_tape(parts.front(), p, "concat_rows");
    values.push_back(p.value());
  }
  std::vector<Var> owned(parts.begin(), parts.end());
  return parts.front().tape().record(
      ops::concat_rows(values), parts, [owned](Tape& t, std::size_t self) {
        const Tensor2 g = t.grad(self);
        std::size_t offset = 0;
        for (const Var& p : owned) {
          const std::size_t r = p.value().rows();
          if (t.needs_grad(p.id())) t.accumulate(p.id(), ops::slice_rows(g, offset, r));
          offset += r;
        }
      });
}

Var concat_cols(Var a, Var b) {
  check_same_tape(a, b, "concat_cols");
  return a.tape().record(ops::concat_cols(a.value(), b.value()), {a, b},
                         [a, b](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           const std::size_t ca = a.value().cols();
                           Tensor2 ga(g.rows(), ca), gb(g.rows(), g.cols() - ca);
                           for (std::size_t r = 0; r < g.rows(); ++r)
                             for (std::size_t c = 0; c < g.cols(); ++c) {
                               if (c < ca) ga(r, c) = g(r, c);
                               else gb(r, c - ca) = g(r, c);
                             }
                           t.accumulate(a.id(), ga);
                           t.accumulate(b.id(), gb);
                         });
}

Var broadcast_prepend(Var vec, Var rows) {
  check_same_tape(vec, rows, "broadcast_prepend");
  return vec.tape().record(ops::broadcast_prepend(vec.value(), rows.value()), {vec, rows},
                           [vec, rows](Tape& t, std::size_t self) {
                             const Tensor2& g = t.grad(self);
                             const std::size_t cv = vec.value().cols();
                             Tensor2 gv(1, cv), gr(g.rows(), g.cols() - cv);
                             for (std::size_t r = 0; r < g.rows(); ++r)
                               for (std::size_t c = 0; c < g.cols(); ++c) {
                                 if (c < cv) gv[c] += g(r, c);
                                 else gr(r, c - cv) = g(r, c);
                               }
                             t.accumulate(vec.id(), gv);
                             t.accumulate(rows.id(), gr);
                           });
}

Var mean_rows(Var a) {
  return a.tape().record(ops::mean_rows(a.value()), {a}, [a](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    const std::size_t n = a.value().rows();
    Tensor2 out(n, g.cols());
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) out(r, c) = g[c] * inv;
    t.accumulate(a.id(), out);
  });
}

Var sum(Var a) {
  const auto vals = a.value().values();
  Tensor2 s(1, 1, std::accumulate(vals.begin(), vals.end(), 0.0));
  return a.tape().record(s, {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id(), Tensor2(a.value().rows(), a.value().cols(), t.grad(self)[0]));
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  return a.tape().record(ops::slice_rows(a.value(), begin, count), {a},
                         [a, begin](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           Tensor2 out(a.value().rows(), a.value().cols());
                           std::copy(g.values().begin(), g.values().end(),
                                     out.values().begin() + static_cast<long>(begin * g.cols()));
                           t.accumulate(a.id(), out);
                         });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape().record(ops::gather_rows(a.value(), idx), {a},
                         [a, idx](Tape& t, std::size_t self) {
                           const Tensor2& g = t.grad(self);
                           Tensor2 out(a.value().rows(), a.value().cols());
                           for (std::size_t i = 0; i < idx.size(); ++i)
                             for (std::size_t c = 0; c < g.cols(); ++c) out(idx[i], c) += g(i, c);
                           t.accumulate(a.id(), out);
                         });
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  check_same_tape(a, gamma, "layer_norm");
  check_same_tape(a, beta, "layer_norm");
  const Tensor2& x = a.value();
  Tensor2 y = ops::layer_norm(x, gamma.value(), beta.value(), eps);
  const std::size_t rows = x.rows(), d = x.cols();
  Tensor2 xhat(rows, d);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = x.row(r);
    const double mu = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    inv_std[r] = 1.0 / std::sqrt(var / static_cast<double>(d) + eps);
    for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (row[c] - mu) * inv_std[r];
  }
  return a.tape().record(
      std::move(y), {a, gamma, beta},
      [a, gamma, beta, xhat, inv_std](Tape& t, std::size_t self) {
        const Tensor2& g = t.grad(self);
        const Tensor2& gm = gamma.value();
        const std::size_t rows = g.rows(), d = g.cols();
        Tensor2 gg(1, d), gbeta(1, d), gx(rows, d);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            gg[c] += g(r, c) * xhat(r, c);
            gbeta[c] += g(r, c);
            const double dxhat = g(r, c) * gm[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat(r, c);
          }
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t c = 0; c < d; ++c) {
            const double dxhat = g(r, c) * gm[c];
            gx(r, c) = inv_std[r] * (dxhat - inv_d * sum_dxhat - xhat(r, c) * inv_d * sum_dxhat_xhat);
          }
        }
        t.accumulate(a.id(), gx);
        t.accumulate(gamma.id(), gg);
        t.accumulate(beta.id(), gbeta);
      });
}

Var attention(Var q, Var k, Var v, std::size_t heads) {
  check_same_tape(q, k, "attention");
  check_same_tape(q, v, "attention");
  const Tensor2& qv = q.value();
  const Tensor2& kv = k.value();
  const Tensor2& vv = v.value();
  if (qv.cols() != kv.cols() || kv.rows() != vv.rows() || vv.cols() != qv.cols()) {
    throw DimensionError("attention: incompatible shapes q " + qv.shape_str() + ", k " +
                         kv.shape_str() + ", v " + vv.shape_str());
  }
  std::vector<Tensor2> probs;
  probs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) probs.push_back(ops::attention_weights(qv, kv, heads, h));
  if (heads == 0) ops::attention_weights(qv, kv, heads, 0);  // throws
  const std::size_t dh = qv.cols() / heads;
  Tensor2 out(qv.rows(), vv.cols());
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < qv.rows(); ++i)
      for (std::size_t j = 0; j < kv.rows(); ++j) {
        const double w = probs[h](i, j);
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out(i, c) += w * vv(j, c);
      }
  return q.tape().record(
      std::move(out), {q, k, v}, [q, k, v, probs, heads, dh](Tape& t, std::size_t self) {
        const Tensor2& g = t.grad(self);
        const Tensor2& qv = q.value();
        const Tensor2& kv = k.value();
        const Tensor2& vv = v.value();
        const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
        Tensor2 gq(qv.rows(), qv.cols()), gk(kv.rows(), kv.cols()), gv(vv.rows(), vv.cols());
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor2& p = probs[h];
          const std::size_t lo = h * dh, hi = (h + 1) * dh;
          // dP = dO · Vᵀ, dS = P ⊙ (dP − rowsum(dP ⊙ P))
          Tensor2 ds(qv.rows(), kv.rows());
          for (std::size_t i = 0; i < qv.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < kv.rows(); ++j) {
              double dp = 0.0;
              for (std::size_t c = lo; c < hi; ++c) dp += g(i, c) * vv(j, c);
              ds(i, j) = dp;
              dot += dp * p(i, j);
              for (std::size_t c = lo; c < hi; ++c) gv(j, c) += p(i, j) * g(i, c);
            }
            for (std::size_t j = 0; j < kv.rows(); ++j) ds(i, j) = p(i, j) * (ds(i, j) - dot) * inv;
          }
          for (std::size_t i = 0; i < qv.rows(); ++i)
            for (std::size_t j = 0; j < kv.rows(); ++j) {
              const double s = ds(i, j);
              if (s == 0.0) continue;
              for (std::size_t c = lo; c < hi; ++c) {
                gq(i, c) += s * kv(j, c);
                gk(j, c) += s * qv(i, c);
              }
            }
        }
        t.accumulate(q.id(), gq);
        t.accumulate(k.id(), gk);
        t.accumulate(v.id(), gv);
      });
}

Var diag(Var vec) {
  const Tensor2& x = vec.value();
  if (x.rows() != 1) throw DimensionError("diag: expected row vector, got " + x.shape_str());
  Tensor2 out(x.cols(), x.cols());
  for (std::size_t i = 0; i < x.cols(); ++i) out(i, i) = x[i];
  return vec.tape().record(std::move(out), {vec}, [vec](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2 gv(1, g.cols());
    for (std::size_t i = 0; i < g.cols(); ++i) gv[i] = g(i, i);
    t.accumulate(vec.id(), gv);
  });
}

Var repeat_cols(Var column, std::size_t cols) {
  const Tensor2& x = column.value();
  if (x.cols() != 1) throw DimensionError("repeat_cols: expected column vector, got " + x.shape_str());
  Tensor2 out(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x[r];
  return column.tape().record(std::move(out), {column}, [column](Tape& t, std::size_t self) {
    const Tensor2& g = t.grad(self);
    Tensor2 gc(g.rows(), 1);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gc[r] += g(r, c);
    t.accumulate(column.id(), gc);
  });
}

Var straight_through(const Tensor2& hard, Var soft, const Tensor2& soft_ref) {
  if (!hard.same_shape(soft.value()) || !hard.same_shape(soft_ref)) {
    throw DimensionError("straight_through: shapes " + hard.shape_str() + ", " +
                         soft.value().shape_str() + ", " + soft_ref.shape_str());
  }
  Tensor2 out = hard;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += soft.value()[i] - soft_ref[i];
  return soft.tape().record(std::move(out), {soft}, [soft](Tape& t, std::size_t self) {
    t.accumulate(soft.id(), t.grad(self));
  });
}

Var affine(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

Var affine(Tape& tape, Var x, Affine& head) {
  if (x.value().cols() != head.in_dim()) {
    throw DimensionError("affine: input " + x.value().shape_str() + " does not match head " +
                         head.weight.value.shape_str());
  }
  return affine(x, tape.leaf(head.weight), tape.leaf(head.bias));
}

}  // namespace ad
}  // namespace xsum
