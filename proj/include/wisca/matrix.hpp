// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wisca/errors.hpp"

namespace wisca {

// Dense row-major 2D array of doubles. All library compute happens in f64
// regardless of what a checkpoint stores.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != rows * cols)
            throw ShapeError("matrix data length does not match rows*cols");
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool empty() const { return rows == 0 || cols == 0; }
    std::size_t size() const { return rows * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double l1_norm(const Matrix& m) {
    if (m.empty()) throw DomainError("l1_norm: empty matrix");
    double s = 0.0;
    for (double v : m.data) s += std::fabs(v);
    return s;
}

inline double l2_norm_sq(const Matrix& m) {
    if (m.empty()) throw DomainError("l2_norm: empty matrix");
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return s;
}

inline double l2_norm(const Matrix& m) { return std::sqrt(l2_norm_sq(m)); }

inline double max_abs(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data) s = std::max(s, std::fabs(v));
    return s;
}

inline bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) +
                         " vs " + std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; i++) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * b.cols];
        for (std::size_t k = 0; k < a.cols; k++) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; j++) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// a * b^T without materializing the transpose; used for score matrices
inline Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols)
        throw ShapeError("matmul_bt: inner dimensions differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; i++) {
        const double* arow = &a.data[i * a.cols];
        for (std::size_t j = 0; j < b.rows; j++) {
            const double* brow = &b.data[j * b.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; k++) s += arow[k] * brow[k];
            out(i, j) = s;
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; i++)
        for (std::size_t j = 0; j < m.cols; j++) out(j, i) = m(i, j);
    return out;
}

inline Matrix scaled(const Matrix& m, double c) {
    Matrix out = m;
    for (double& v : out.data) v *= c;
    return out;
}

// numerically stabilized per-row softmax (max subtraction)
inline Matrix row_softmax(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; i++) {
        const double* in = &m.data[i * m.cols];
        double* o = &out.data[i * m.cols];
        double mx = in[0];
        for (std::size_t j = 1; j < m.cols; j++) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; j++) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < m.cols; j++) o[j] /= sum;
    }
    return out;
}

} // namespace wisca
