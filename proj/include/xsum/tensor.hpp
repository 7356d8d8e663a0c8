#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace xsum {

/// Dense row-major matrix of doubles. Vectors are 1×d (row) or n×1 (column).
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 row_vector(std::span<const double> values);
  static Tensor2 column_vector(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double item() const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  void fill(double v);
  Tensor2& operator+=(const Tensor2& other);
  Tensor2& operator*=(double s);

  bool operator==(const Tensor2& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Largest absolute entry-wise difference; shapes must match.
double max_abs_diff(const Tensor2& a, const Tensor2& b);

// Pure, tape-free forward primitives. Shape violations throw DimensionError
// naming the primitive and the offending shapes.
namespace ops {

enum class Axis { Rows, Cols };  // Rows: normalize down each column; Cols: across each row

Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);  // a · bᵀ
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);  // aᵀ · b
Tensor2 transpose(const Tensor2& a);
Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 sub(const Tensor2& a, const Tensor2& b);
Tensor2 mul(const Tensor2& a, const Tensor2& b);
Tensor2 scale(const Tensor2& a, double s);
Tensor2 add_bias(const Tensor2& a, const Tensor2& bias);
Tensor2 sigmoid(const Tensor2& a);
Tensor2 gelu(const Tensor2& a);
Tensor2 softmax(const Tensor2& a, Axis axis);
Tensor2 concat_rows(std::span<const Tensor2> parts);
Tensor2 concat_cols(const Tensor2& a, const Tensor2& b);
Tensor2 broadcast_prepend(const Tensor2& vec, const Tensor2& rows);
Tensor2 mean_rows(const Tensor2& a);
Tensor2 slice_rows(const Tensor2& a, std::size_t begin, std::size_t count);
Tensor2 gather_rows(const Tensor2& a, std::span<const std::size_t> indices);
Tensor2 layer_norm(const Tensor2& a, const Tensor2& gamma, const Tensor2& beta, double eps = 1e-5);

/// Softmax(Q·Kᵀ/√dₕ)·V per head, heads split along columns.
Tensor2 attention(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::size_t heads);
/// Row-stochastic attention weights of one head (queries × keys).
Tensor2 attention_weights(const Tensor2& q, const Tensor2& k, std::size_t heads, std::size_t head);

double stable_sigmoid(double x);

}  // namespace ops
}  // namespace xsum
