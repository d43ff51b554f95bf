#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ebert {

/// Dense row-major matrix; vectors are 1xN.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), T(0)) {}

  T* operator[](int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const T* operator[](int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }

  T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool empty() const { return v.empty(); }
  std::size_t size() const { return v.size(); }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

// C (+)= A * B with A [m,k], B [k,n]; ikj ordering keeps B access sequential.
template <typename T>
void mm_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
    throw std::invalid_argument("mm: shape mismatch");
  for (int i = 0; i < a.rows; ++i) {
    const T* arow = a[i];
    T* crow = c[i];
    for (int k = 0; k < a.cols; ++k) {
      const T s = arow[k];
      if (s == T(0)) continue;
      const T* brow = b[k];
      for (int j = 0; j < b.cols; ++j) crow[j] += s * brow[j];
    }
  }
}

template <typename T>
Mat<T> mm(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows, b.cols);
  mm_acc(a, b, c);
  return c;
}

// C (+)= A' * B with A [k,m], B [k,n].
template <typename T>
void mm_AtB_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw std::invalid_argument("mm_AtB: shape mismatch");
  for (int k = 0; k < a.rows; ++k) {
    const T* arow = a[k];
    const T* brow = b[k];
    for (int i = 0; i < a.cols; ++i) {
      const T s = arow[i];
      if (s == T(0)) continue;
      T* crow = c[i];
      for (int j = 0; j < b.cols; ++j) crow[j] += s * brow[j];
    }
  }
}

// C (+)= A * B' with A [m,k], B [n,k].
template <typename T>
void mm_ABt_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
    throw std::invalid_argument("mm_ABt: shape mismatch");
  for (int i = 0; i < a.rows; ++i) {
    const T* arow = a[i];
    T* crow = c[i];
    for (int j = 0; j < b.rows; ++j) {
      const T* brow = b[j];
      T s = T(0);
      for (int k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      crow[j] += s;
    }
  }
}

template <typename T>
Mat<T> mm_ABt(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> c(a.rows, b.rows);
  mm_ABt_acc(a, b, c);
  return c;
}

template <typename T>
void add_row_bias(Mat<T>& m, const Mat<T>& bias) {
  for (int i = 0; i < m.rows; ++i) {
    T* row = m[i];
    const T* b = bias[0];
    for (int j = 0; j < m.cols; ++j) row[j] += b[j];
  }
}

// bias gradient: accumulate column sums of m into a 1xN matrix
template <typename T>
void acc_col_sums(const Mat<T>& m, Mat<T>& out) {
  for (int i = 0; i < m.rows; ++i) {
    const T* row = m[i];
    T* o = out[0];
    for (int j = 0; j < m.cols; ++j) o[j] += row[j];
  }
}

template <typename T>
void hadamard_acc(Mat<T>& m, const Mat<T>& mult) {
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] *= mult.v[i];
}

template <typename T>
void axpy(Mat<T>& y, T alpha, const Mat<T>& x) {
  for (std::size_t i = 0; i < y.v.size(); ++i) y.v[i] += alpha * x.v[i];
}

}  // namespace ebert
