// SPDX-License-Identifier: Apache-2.0
#include "softtpr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "softtpr/errors.hpp"

namespace softtpr {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": size mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

bool finite_span(std::span<const double> s) {
  return std::all_of(s.begin(), s.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

bool Vector::all_finite() const noexcept { return finite_span(data_); }

Vector& Vector::operator+=(const Vector& other) {
  require_same_size(size(), other.size(), "Vector::operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& other) {
  require_same_size(size(), other.size(), "Vector::operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector a) { return a *= s; }

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  require_same_size(rows * cols, data_.size(), "Matrix");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require_same_size(row.size(), c, "Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::from_columns(std::span<const Vector> columns) {
  const std::size_t c = columns.size();
  const std::size_t r = c == 0 ? 0 : columns[0].size();
  Matrix m(r, c);
  for (std::size_t j = 0; j < c; ++j) m.set_column(j, columns[j]);
  return m;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector Matrix::column(std::size_t c) const {
  Vector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

void Matrix::set_column(std::size_t c, const Vector& v) {
  require_same_size(v.size(), rows_, "Matrix::set_column");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v[r];
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const noexcept { return finite_span(data_); }

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_size(rows_, other.rows_, "Matrix::operator+= rows");
  require_same_size(cols_, other.cols_, "Matrix::operator+= cols");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_size(rows_, other.rows_, "Matrix::operator-= rows");
  require_same_size(cols_, other.cols_, "Matrix::operator-= cols");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require_same_size(a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  require_same_size(a.cols(), x.size(), "matvec");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x.span());
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Vector outer_flatten(const Vector& filler, const Vector& role) {
  if (filler.empty() || role.empty()) {
    throw std::invalid_argument("outer_flatten: filler and role must be non-empty");
  }
  if (!filler.all_finite() || !role.all_finite()) {
    throw std::invalid_argument("outer_flatten: non-finite input");
  }
  const std::size_t df = filler.size();
  Vector out(df * role.size());
  for (std::size_t j = 0; j < role.size(); ++j)
    for (std::size_t i = 0; i < df; ++i) out[j * df + i] = filler[i] * role[j];
  return out;
}

Matrix semi_orthogonal(std::size_t d, std::size_t n, SeededRng& rng) {
  if (n == 0 || d < n) {
    throw std::invalid_argument("semi_orthogonal: need d >= n >= 1 (d=" + std::to_string(d) +
                                ", n=" + std::to_string(n) + ")");
  }
  std::vector<Vector> cols;
  cols.reserve(n);
  while (cols.size() < n) {
    Vector v(d);
    for (auto& x : v) x = rng.normal();
    // Second pass restores orthogonality lost to cancellation in the first.
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : cols) {
        const double p = dot(q.span(), v.span());
        for (std::size_t i = 0; i < d; ++i) v[i] -= p * q[i];
      }
    }
    const double nrm = norm2(v.span());
    if (nrm < 1e-8) continue;  // Gaussian draw landed in the span; redraw.
    v *= 1.0 / nrm;
    cols.push_back(std::move(v));
  }
  return Matrix::from_columns(cols);
}

Matrix inverse(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("inverse: matrix must be square");
  const std::size_t n = a.rows();
  Matrix work = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(work(r, col)) > std::abs(work(pivot, col))) pivot = r;
    if (std::abs(work(pivot, col)) < kSingularPivot) {
      throw SingularMatrixError("inverse: pivot below " + std::to_string(kSingularPivot) +
                                " at column " + std::to_string(col));
    }
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(work(pivot, c), work(col, c));
        std::swap(inv(pivot, c), inv(col, c));
      }
    }
    const double p = work(col, col);
    for (std::size_t c = 0; c < n; ++c) {
      work(col, c) /= p;
      inv(col, c) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = work(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        work(r, c) -= f * work(col, c);
        inv(r, c) -= f * inv(col, c);
      }
    }
  }
  return inv;
}

Matrix left_inverse(const Matrix& m) {
  if (m.rows() < m.cols()) {
    throw SingularMatrixError("left_inverse: more columns than rows, rank deficient");
  }
  const Matrix mt = m.transposed();
  return matmul(inverse(matmul(mt, m)), mt);
}

}  // namespace softtpr
