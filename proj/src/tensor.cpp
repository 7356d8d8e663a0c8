#include "xsum/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "xsum/error.hpp"

namespace xsum {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor2& t) {
  return ConstMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}
MutMap view(Tensor2& t) {
  return MutMap(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* prim, const Tensor2& a, const Tensor2& b) {
  throw DimensionError(std::string(prim) + ": incompatible shapes " + a.shape_str() + " and " +
                       b.shape_str());
}

void require_same(const char* prim, const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail(prim, a, b);
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Tensor2: data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
  }
}

Tensor2 Tensor2::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor2::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor2(r, c, std::move(data));
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::column_vector(std::span<const double> values) {
  return Tensor2(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor2::item() const {
  if (size() != 1) throw DimensionError("Tensor2::item: expected 1x1, got " + shape_str());
  return data_[0];
}

bool Tensor2::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor2& Tensor2::operator+=(const Tensor2& other) {
  require_same("accumulate", *this, other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2& Tensor2::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double max_abs_diff(const Tensor2& a, const Tensor2& b) {
  require_same("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace ops {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  Tensor2 out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a, b);
  Tensor2 out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) shape_fail("matmul_tn", a, b);
  Tensor2 out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
  require_same("add", a, b);
  Tensor2 out = a;
  out += b;
  return out;
}

Tensor2 sub(const Tensor2& a, const Tensor2& b) {
  require_same("sub", a, b);
  Tensor2 out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor2 mul(const Tensor2& a, const Tensor2& b) {
  require_same("mul", a, b);
  Tensor2 out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor2 scale(const Tensor2& a, double s) {
  Tensor2 out = a;
  out *= s;
  return out;
}

Tensor2 add_bias(const Tensor2& a, const Tensor2& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) shape_fail("add_bias", a, bias);
  Tensor2 out = a;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) += bias[c];
  return out;
}

Tensor2 sigmoid(const Tensor2& a) {
  Tensor2 out = a;
  for (double& v : out.values()) v = stable_sigmoid(v);
  return out;
}

Tensor2 gelu(const Tensor2& a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  Tensor2 out = a;
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
  return out;
}

Tensor2 softmax(const Tensor2& a, Axis axis) {
  Tensor2 out = a;
  if (axis == Axis::Cols) {
    for (std::size_t r = 0; r < a.rows(); ++r) {
      auto row = out.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double sum = 0.0;
      for (double& v : row) sum += (v = std::exp(v - mx));
      for (double& v : row) v /= sum;
    }
  } else {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      double mx = -INFINITY;
      for (std::size_t r = 0; r < a.rows(); ++r) mx = std::max(mx, a(r, c));
      double sum = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) sum += (out(r, c) = std::exp(a(r, c) - mx));
      for (std::size_t r = 0; r < a.rows(); ++r) out(r, c) /= sum;
    }
  }
  return out;
}

Tensor2 concat_rows(std::span<const Tensor2> parts) {
  if (parts.empty()) return {};
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts.front(), p);
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
  return Tensor2(rows, cols, std::move(data));
}

Tensor2 concat_cols(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) shape_fail("concat_cols", a, b);
  Tensor2 out(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<long>(a.cols()));
  }
  return out;
}

Tensor2 broadcast_prepend(const Tensor2& vec, const Tensor2& rows) {
  if (vec.rows() != 1) shape_fail("broadcast_prepend", vec, rows);
  Tensor2 out(rows.rows(), vec.cols() + rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    std::copy(vec.values().begin(), vec.values().end(), out.row(r).begin());
    std::copy(rows.row(r).begin(), rows.row(r).end(),
              out.row(r).begin() + static_cast<long>(vec.cols()));
  }
  return out;
}

Tensor2 mean_rows(const Tensor2& a) {
  if (a.rows() == 0) throw DimensionError("mean_rows: empty input " + a.shape_str());
  Tensor2 out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c);
  out *= 1.0 / static_cast<double>(a.rows());
  return out;
}

Tensor2 slice_rows(const Tensor2& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + a.shape_str());
  }
  auto first = a.values().begin() + static_cast<long>(begin * a.cols());
  return Tensor2(count, a.cols(),
                 std::vector<double>(first, first + static_cast<long>(count * a.cols())));
}

Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> indices) {
  Tensor2 out(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " out of " +
                           a.shape_str());
    }
    std::copy(a.row(indices[i]).begin(), a.row(indices[i]).end(), out.row(i).begin());
  }
  return out;
}

Tensor2 layer_norm(const Tensor2& a, const Tensor2& gamma, const Tensor2& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != a.cols()) shape_fail("layer_norm", a, gamma);
  if (!gamma.same_shape(beta)) shape_fail("layer_norm", gamma, beta);
  Tensor2 out(a.rows(), a.cols());
  const double d = static_cast<double>(a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    const double mu = std::accumulate(row.begin(), row.end(), 0.0) / d;
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    const double inv = 1.0 / std::sqrt(var / d + eps);
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = gamma[c] * (row[c] - mu) * inv + beta[c];
  }
  return out;
}

Tensor2 attention_weights(const Tensor2& q, const Tensor2& k, std::size_t heads, std::size_t head) {
  if (q.cols() != k.cols()) shape_fail("attention", q, k);
  if (heads == 0 || q.cols() % heads != 0 || head >= heads) {
    throw DimensionError("attention: width " + std::to_string(q.cols()) +
                         " not divisible into " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = q.cols() / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor2 s(q.rows(), k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i)
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t c = head * dh; c < (head + 1) * dh; ++c) acc += q(i, c) * k(j, c);
      s(i, j) = acc * inv;
    }
  return softmax(s, Axis::Cols);
}

Tensor2 attention(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::size_t heads) {
  if (k.rows() != v.rows() || q.cols() != v.cols()) shape_fail("attention", k, v);
  Tensor2 out(q.rows(), v.cols());
  const std::size_t dh = q.cols() / std::max<std::size_t>(heads, 1);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor2 p = attention_weights(q, k, heads, h);
    for (std::size_t i = 0; i < q.rows(); ++i)
      for (std::size_t j = 0; j < k.rows(); ++j) {
        const double w = p(i, j);
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out(i, c) += w * v(j, c);
      }
  }
  return out;
}

}  // namespace ops
}  // namespace xsum
