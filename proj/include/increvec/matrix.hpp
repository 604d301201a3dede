#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "increvec/common.hpp"

namespace increvec {

// Dense row-major matrix. The numeric substrate for embeddings,
// activations and parameters; T is float for training, double for
// gradient checks and oracles.
template <typename T>
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Matrix() = default;
    Matrix(int r, int c, T fill = T(0))
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    T* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const T* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return data.size(); }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(T(0)); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Matrix<U> cast() const {
        Matrix<U> out(rows, cols);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Dense n x t x d tensor, row-major in the last dimension. Substrate for
// the history tensors A and B.
template <typename T>
struct Tensor3 {
    int n = 0;
    int t = 0;
    int d = 0;
    std::vector<T> data;

    Tensor3() = default;
    Tensor3(int n_, int t_, int d_, T fill = T(0))
        : n(n_), t(t_), d(d_),
          data(static_cast<std::size_t>(n_) * t_ * d_, fill) {}

    T* at(int i, int j) {
        return data.data() + (static_cast<std::size_t>(i) * t + j) * d;
    }
    const T* at(int i, int j) const {
        return data.data() + (static_cast<std::size_t>(i) * t + j) * d;
    }
};

// C = A * B
template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols)
        throw ShapeError("gemm_nn: shape mismatch");
    c.zero();
    for (int i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const T aik = arow[k];
            if (aik == T(0)) continue;
            const T* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

// C = A * B^T
template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
    if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows)
        throw ShapeError("gemm_nt: shape mismatch");
    for (int i = 0; i < a.rows; ++i) {
        const T* arow = a.row(i);
        T* crow = c.row(i);
        for (int j = 0; j < b.rows; ++j) {
            const T* brow = b.row(j);
            T acc = T(0);
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
}

// C = A^T * B
template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("gemm_tn: shape mismatch");
    c.zero();
    for (int k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const T aki = arow[i];
            if (aki == T(0)) continue;
            T* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

// C += A^T * B (gradient accumulation form)
template <typename T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
    if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
        throw ShapeError("gemm_tn_acc: shape mismatch");
    for (int k = 0; k < a.rows; ++k) {
        const T* arow = a.row(k);
        const T* brow = b.row(k);
        for (int i = 0; i < a.cols; ++i) {
            const T aki = arow[i];
            if (aki == T(0)) continue;
            T* crow = c.row(i);
            for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
        }
    }
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
std::vector<T> mean_rows(const Matrix<T>& m) {
    std::vector<T> out(static_cast<std::size_t>(m.cols), T(0));
    for (int i = 0; i < m.rows; ++i) {
        const T* row = m.row(i);
        for (int j = 0; j < m.cols; ++j) out[j] += row[j];
    }
    const T inv = T(1) / static_cast<T>(m.rows);
    for (auto& v : out) v *= inv;
    return out;
}

}  // namespace increvec
