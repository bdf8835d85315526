#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dmdnet/error.hpp"

namespace dmdnet {

// Row-compressed real sparse matrix. Entries within a row are sorted by column
// and unique.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  // Duplicate (row, col) pairs are summed into one entry.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets) {
    for (const auto& t : triplets) {
      if (t.row >= rows || t.col >= cols) {
        throw ShapeError("sparse triplet (" + std::to_string(t.row) + ", " +
                         std::to_string(t.col) + ") out of range");
      }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    SparseMatrix m(rows, cols);
    m.col_index_.reserve(triplets.size());
    m.values_.reserve(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i) {
      const auto& t = triplets[i];
      if (i > 0 && triplets[i - 1].row == t.row && triplets[i - 1].col == t.col) {
        m.values_.back() += t.value;
        continue;
      }
      m.col_index_.push_back(t.col);
      m.values_.push_back(t.value);
      ++m.row_ptr_[t.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    return m;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_index() const noexcept { return col_index_; }
  std::span<const double> values() const noexcept { return values_; }

  double coeff(std::size_t r, std::size_t c) const {
    auto begin = col_index_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    auto end = col_index_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    auto it = std::lower_bound(begin, end, c);
    if (it == end || *it != c) return 0.0;
    return values_[static_cast<std::size_t>(it - col_index_.begin())];
  }

  std::vector<double> row_sums() const {
    std::vector<double> s(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) s[r] += values_[e];
    return s;
  }

  std::vector<double> col_sums() const {
    std::vector<double> s(cols_, 0.0);
    for (std::size_t e = 0; e < values_.size(); ++e) s[col_index_[e]] += values_[e];
    return s;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e)
        t.push_back({col_index_[e], r, values_[e]});
    return from_triplets(cols_, rows_, std::move(t));
  }

  SparseMatrix scaled_rows(std::span<const double> factors) const {
    SparseMatrix out = *this;
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) out.values_[e] *= factors[r];
    return out;
  }

  SparseMatrix scaled(double factor) const {
    SparseMatrix out = *this;
    for (auto& v : out.values_) v *= factor;
    return out;
  }

  // y (rows x k) = this * x (cols x k); both row-major.
  template <typename T>
  void multiply(std::span<const T> x, std::size_t k, std::span<T> y) const {
    std::fill(y.begin(), y.end(), T{0});
    for (std::size_t r = 0; r < rows_; ++r) {
      T* yr = y.data() + r * k;
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) {
        const T w = static_cast<T>(values_[e]);
        const T* xr = x.data() + col_index_[e] * k;
        for (std::size_t j = 0; j < k; ++j) yr[j] += w * xr[j];
      }
    }
  }

  // x (cols x k) += this^T * y (rows x k).
  template <typename T>
  void multiply_transpose_add(std::span<const T> y, std::size_t k, std::span<T> x) const {
    for (std::size_t r = 0; r < rows_; ++r) {
      const T* yr = y.data() + r * k;
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e) {
        const T w = static_cast<T>(values_[e]);
        T* xr = x.data() + col_index_[e] * k;
        for (std::size_t j = 0; j < k; ++j) xr[j] += w * yr[j];
      }
    }
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_),
                                              static_cast<Eigen::Index>(cols_));
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e)
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_index_[e])) = values_[e];
    return d;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_index_;
  std::vector<double> values_;
};

}  // namespace dmdnet
