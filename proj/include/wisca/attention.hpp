// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <limits>
#include <string>

#include "wisca/errors.hpp"
#include "wisca/matrix.hpp"

namespace wisca {

// One attention block's geometry. g = n_q_heads / n_kv_heads; g == 1 is
// plain multi-head attention, g > 1 is grouped-query attention where g
// query heads share one key/value head.
struct AttentionLayout {
    std::size_t d_model = 0;
    std::size_t n_q_heads = 0;
    std::size_t n_kv_heads = 0;
    std::size_t head_dim = 0;
    bool has_bias = false;

    std::size_t g() const { return n_kv_heads ? n_q_heads / n_kv_heads : 0; }
    std::size_t q_width() const { return n_q_heads * head_dim; }
    std::size_t kv_width() const { return n_kv_heads * head_dim; }

    void validate() const {
        if (d_model == 0 || n_q_heads == 0 || n_kv_heads == 0 || head_dim == 0)
            throw DomainError("attention layout: all dims must be >= 1");
        if (n_q_heads % n_kv_heads != 0)
            throw DomainError("attention layout: n_q_heads must be a multiple of n_kv_heads");
    }
};

// Projection weights; biases are 1xN row vectors, empty when absent.
struct AttentionWeights {
    Matrix w_q, w_k, w_v, w_o;
    Matrix b_q, b_k, b_v, b_o;
};

struct LoraPair {
    Matrix a; // m x r
    Matrix b; // r x n
    std::size_t rank() const { return a.cols; }
};

inline void check_attention_shapes(const AttentionWeights& w, const AttentionLayout& lo) {
    lo.validate();
    auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
        if (m.rows != r || m.cols != c)
            throw ShapeError(std::string(name) + ": expected " + std::to_string(r) + "x" +
                             std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                             std::to_string(m.cols));
    };
    expect(w.w_q, lo.d_model, lo.q_width(), "w_q");
    expect(w.w_k, lo.d_model, lo.kv_width(), "w_k");
    expect(w.w_v, lo.d_model, lo.kv_width(), "w_v");
    expect(w.w_o, lo.q_width(), lo.d_model, "w_o");
    auto expect_bias = [&expect](const Matrix& b, std::size_t n, const char* name) {
        if (!b.empty()) expect(b, 1, n, name);
    };
    expect_bias(w.b_q, lo.q_width(), "b_q");
    expect_bias(w.b_k, lo.kv_width(), "b_k");
    expect_bias(w.b_v, lo.kv_width(), "b_v");
    expect_bias(w.b_o, lo.d_model, "b_o");
}

namespace detail {

inline Matrix slice_cols(const Matrix& m, std::size_t c0, std::size_t c1) {
    Matrix out(m.rows, c1 - c0);
    for (std::size_t i = 0; i < m.rows; i++)
        for (std::size_t j = c0; j < c1; j++) out(i, j - c0) = m(i, j);
    return out;
}

// overwrite columns [c0, c0 + block.cols) of m with block
inline void paste_cols(Matrix& m, const Matrix& block, std::size_t c0) {
    if (block.rows != m.rows || c0 + block.cols > m.cols)
        throw ShapeError("column block does not fit the target matrix");
    for (std::size_t i = 0; i < m.rows; i++)
        for (std::size_t j = 0; j < block.cols; j++) m(i, c0 + j) = block(i, j);
}

inline void add_row_vector(Matrix& m, const Matrix& bias) {
    if (bias.empty()) return;
    if (bias.rows != 1 || bias.cols != m.cols)
        throw ShapeError("bias must be a 1x" + std::to_string(m.cols) + " row vector");
    for (std::size_t i = 0; i < m.rows; i++)
        for (std::size_t j = 0; j < m.cols; j++) m(i, j) += bias(0, j);
}

inline void check_attention_shapes(const Matrix& x, const AttentionWeights& w,
                                   const AttentionLayout& lo) {
    wisca::check_attention_shapes(w, lo);
    if (x.cols != lo.d_model)
        throw ShapeError("input: expected " + std::to_string(lo.d_model) +
                         " columns, got " + std::to_string(x.cols));
}

} // namespace detail

// Grouped-query attention forward: query head h attends against key/value
// head h/g. Full (non-causal) attention by default; the causal flag masks
// j > i before the softmax.
inline Matrix gqa_forward(const Matrix& x, const AttentionWeights& w,
                          const AttentionLayout& lo, bool causal = false) {
    detail::check_attention_shapes(x, w, lo);
    const std::size_t n = x.rows, dk = lo.head_dim, g = lo.g();

    Matrix q = matmul(x, w.w_q);
    Matrix k = matmul(x, w.w_k);
    Matrix v = matmul(x, w.w_v);
    detail::add_row_vector(q, w.b_q);
    detail::add_row_vector(k, w.b_k);
    detail::add_row_vector(v, w.b_v);

    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    Matrix heads(n, lo.q_width());
    for (std::size_t h = 0; h < lo.n_q_heads; h++) {
        std::size_t kv = h / g;
        Matrix qh = detail::slice_cols(q, h * dk, (h + 1) * dk);
        Matrix kh = detail::slice_cols(k, kv * dk, (kv + 1) * dk);
        Matrix vh = detail::slice_cols(v, kv * dk, (kv + 1) * dk);

        Matrix scores = matmul_bt(qh, kh);
        for (double& s : scores.data) s *= inv_sqrt_dk;
        if (causal)
            for (std::size_t i = 0; i < n; i++)
                for (std::size_t j = i + 1; j < n; j++)
                    scores(i, j) = -std::numeric_limits<double>::infinity();
        Matrix attn = row_softmax(scores);
        Matrix oh = matmul(attn, vh);
        for (std::size_t i = 0; i < n; i++)
            for (std::size_t j = 0; j < dk; j++) heads(i, h * dk + j) = oh(i, j);
    }

    Matrix out = matmul(heads, w.w_o);
    detail::add_row_vector(out, w.b_o);
    return out;
}

inline Matrix mha_forward(const Matrix& x, const AttentionWeights& w,
                          const AttentionLayout& lo, bool causal = false) {
    if (lo.n_q_heads != lo.n_kv_heads)
        throw ShapeError("mha_forward requires n_q_heads == n_kv_heads (got g=" +
                         std::to_string(lo.g()) + ")");
    return gqa_forward(x, w, lo, causal);
}

// x * (W + A*B)
inline Matrix lora_forward(const Matrix& x, const Matrix& w, const LoraPair& p) {
    if (p.a.cols != p.b.rows)
        throw ShapeError("lora pair: A.cols != B.rows");
    if (p.a.rows != w.rows || p.b.cols != w.cols)
        throw ShapeError("lora pair does not match base weight shape");
    Matrix merged = w;
    Matrix delta = matmul(p.a, p.b);
    for (std::size_t i = 0; i < merged.data.size(); i++) merged.data[i] += delta.data[i];
    return matmul(x, merged);
}

} // namespace wisca
