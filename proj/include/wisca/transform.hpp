// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "wisca/attention.hpp"
#include "wisca/errors.hpp"
#include "wisca/matrix.hpp"

// Weight rescaling transforms. Every op maps a weight pair to a rebalanced
// pair whose products (hence model outputs) are preserved: the paired scale
// factors are reciprocal, so Q*K^T, W_v*W_o, A*B etc. are unchanged up to
// f64 rounding. Zero-norm inputs come back untouched with a warning rather
// than an exception (the LoRA B=0 init is a legitimate input).
namespace wisca {

enum class Strategy {
    qk_tensor,
    qk_channel,
    vo_tensor,
    vo_channel,
    gqa_tensor,
    gqa_channel,
    lora,
    linear_pair,
};

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::qk_tensor: return "qk_tensor";
        case Strategy::qk_channel: return "qk_channel";
        case Strategy::vo_tensor: return "vo_tensor";
        case Strategy::vo_channel: return "vo_channel";
        case Strategy::gqa_tensor: return "gqa_tensor";
        case Strategy::gqa_channel: return "gqa_channel";
        case Strategy::lora: return "lora";
        case Strategy::linear_pair: return "linear_pair";
    }
    return "?";
}

enum class Role { q, k, v, o, lora_a, lora_b };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::q: return "q";
        case Role::k: return "k";
        case Role::v: return "v";
        case Role::o: return "o";
        case Role::lora_a: return "lora_a";
        case Role::lora_b: return "lora_b";
    }
    return "?";
}

// The recorded factors of one rescaling application. Tensor strategies hold
// one scalar per role; channel strategies one factor per projection channel
// (channel c of q/k/v, or row c of w_o).
struct ScalePlan {
    Strategy strategy = Strategy::qk_tensor;
    std::map<Role, double> tensor_factors;
    std::map<Role, std::vector<double>> channel_factors;
    std::vector<std::string> warnings;

    bool is_identity() const {
        for (auto& [r, f] : tensor_factors)
            if (f != 1.0) return false;
        for (auto& [r, v] : channel_factors)
            for (double f : v)
                if (f != 1.0) return false;
        return true;
    }
};

namespace detail {

inline void check_factor(double a, const char* what) {
    if (!(std::isfinite(a) && a > 0.0))
        throw NumericError(std::string("scale factor for ") + what +
                           " is not finite positive");
}

inline double col_l1(const Matrix& m, std::size_t c) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows; i++) s += std::fabs(m(i, c));
    return s;
}

inline double row_l1(const Matrix& m, std::size_t r) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; j++) s += std::fabs(m(r, j));
    return s;
}

inline double col_l2(const Matrix& m, std::size_t c) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows; i++) s += m(i, c) * m(i, c);
    return std::sqrt(s);
}

inline double row_l2(const Matrix& m, std::size_t r) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; j++) s += m(r, j) * m(r, j);
    return std::sqrt(s);
}

inline void scale_col(Matrix& m, std::size_t c, double a) {
    for (std::size_t i = 0; i < m.rows; i++) m(i, c) *= a;
}

inline void scale_row(Matrix& m, std::size_t r, double a) {
    for (std::size_t j = 0; j < m.cols; j++) m(r, j) *= a;
}

} // namespace detail

// Both norms balance a reciprocal pair; L1 stays the default.
enum class NormKind { l1, l2 };

inline double norm_of(const Matrix& m, NormKind k) {
    return k == NormKind::l1 ? l1_norm(m) : l2_norm(m);
}

struct TensorScaleResult {
    Matrix first, second;
    ScalePlan plan;
};

namespace detail {

// shared core of the tensor-wise pair rules: balance ||first|| against
// target_ratio * ||second||, multiplying first by a and second by 1/a
inline TensorScaleResult pair_scale(const Matrix& m1, const Matrix& m2, Strategy tag,
                                    Role r1, Role r2, double target_ratio,
                                    NormKind nk) {
    double n1 = norm_of(m1, nk), n2 = norm_of(m2, nk);
    TensorScaleResult res{m1, m2, {}};
    res.plan.strategy = tag;
    if (n1 == 0.0 || n2 == 0.0) {
        res.plan.tensor_factors[r1] = 1.0;
        res.plan.tensor_factors[r2] = 1.0;
        res.plan.warnings.push_back(std::string("zero-norm pair (") + role_name(r1) +
                                    "/" + role_name(r2) + ") skipped");
        return res;
    }
    double a = std::sqrt(target_ratio * n2 / n1);
    double inv = std::sqrt(n1 / (target_ratio * n2));
    check_factor(a, role_name(r1));
    check_factor(inv, role_name(r2));
    for (double& v : res.first.data) v *= a;
    for (double& v : res.second.data) v *= inv;
    res.plan.tensor_factors[r1] = a;
    res.plan.tensor_factors[r2] = inv;
    return res;
}

} // namespace detail

// w_q' = w_q * sqrt(||w_k||/||w_q||), w_k' = w_k * sqrt(||w_q||/||w_k||)
inline TensorScaleResult qk_tensor_scale(const Matrix& w_q, const Matrix& w_k,
                                         NormKind nk = NormKind::l1) {
    return detail::pair_scale(w_q, w_k, Strategy::qk_tensor, Role::q, Role::k, 1.0, nk);
}

// mirror rule on the value/output pair
inline TensorScaleResult vo_tensor_scale(const Matrix& w_v, const Matrix& w_o,
                                         NormKind nk = NormKind::l1) {
    return detail::pair_scale(w_v, w_o, Strategy::vo_tensor, Role::v, Role::o, 1.0, nk);
}

// GQA target ||w_q'|| == g * ||w_k'||: with g query heads sharing one key
// head, the balanced-wins condition sums over the group.
inline TensorScaleResult gqa_tensor_scale(const Matrix& w_q, const Matrix& w_k,
                                          std::size_t g, NormKind nk = NormKind::l1) {
    if (g < 1) throw DomainError("gqa_tensor_scale: g must be >= 1");
    Strategy tag = g == 1 ? Strategy::qk_tensor : Strategy::gqa_tensor;
    return detail::pair_scale(w_q, w_k, tag, Role::q, Role::k,
                              static_cast<double>(g), nk);
}

// A' = A * sqrt(||B||/||A||), B' = B * sqrt(||A||/||B||); B = 0 (the vanilla
// LoRA init) comes back unchanged with a warning.
inline TensorScaleResult lora_scale(const LoraPair& p, NormKind nk = NormKind::l1) {
    auto r = detail::pair_scale(p.a, p.b, Strategy::lora, Role::lora_a, Role::lora_b,
                                1.0, nk);
    return r;
}

enum class Activation { relu, leaky_relu, identity };

// consecutive linear layers y = w2 * act(w1 * x) with a positively
// homogeneous activation: reciprocal factors move through the activation
inline TensorScaleResult linear_pair_scale(const Matrix& w1, const Matrix& w2,
                                           Activation act,
                                           NormKind nk = NormKind::l1) {
    (void)act; // any positively homogeneous activation preserves outputs
    return detail::pair_scale(w1, w2, Strategy::linear_pair, Role::q, Role::k, 1.0, nk);
}

// test helper mirroring the activations linear_pair_scale is valid for
inline Matrix apply_activation(const Matrix& m, Activation act, double slope = 0.01) {
    Matrix out = m;
    switch (act) {
        case Activation::identity: break;
        case Activation::relu:
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::leaky_relu:
            for (double& v : out.data) v = v > 0.0 ? v : slope * v;
            break;
    }
    return out;
}

// Channel-wise rule. Channel c of query head h is paired with channel c of
// its key head h/g. One factor is shared across the whole query group so
// every per-head score matrix stays invariant: the key column is matched
// against the *sum* of the g paired query-column norms (the group-averaged
// target; g = 1 collapses to the plain per-column rule).
inline TensorScaleResult qk_channel_scale(const Matrix& w_q, const Matrix& w_k,
                                          const AttentionLayout& lo,
                                          NormKind nk = NormKind::l1) {
    lo.validate();
    if (w_q.cols != lo.q_width() || w_k.cols != lo.kv_width() || w_q.rows != w_k.rows)
        throw ShapeError("qk_channel_scale: weights do not match layout");
    const std::size_t dk = lo.head_dim, g = lo.g();
    TensorScaleResult res{w_q, w_k, {}};
    res.plan.strategy = g == 1 ? Strategy::qk_channel : Strategy::gqa_channel;
    std::vector<double>& qf = res.plan.channel_factors[Role::q];
    std::vector<double>& kf = res.plan.channel_factors[Role::k];
    qf.assign(w_q.cols, 1.0);
    kf.assign(w_k.cols, 1.0);

    auto col_norm = [&](const Matrix& m, std::size_t c) {
        return nk == NormKind::l1 ? detail::col_l1(m, c) : detail::col_l2(m, c);
    };
    for (std::size_t kv = 0; kv < lo.n_kv_heads; kv++) {
        for (std::size_t c = 0; c < dk; c++) {
            const std::size_t kcol = kv * dk + c;
            double qsum = 0.0;
            for (std::size_t j = 0; j < g; j++)
                qsum += col_norm(w_q, (kv * g + j) * dk + c);
            double knorm = col_norm(w_k, kcol);
            if (qsum == 0.0 || knorm == 0.0) {
                res.plan.warnings.push_back("zero-norm channel (kv head " +
                                            std::to_string(kv) + ", c " +
                                            std::to_string(c) + ") untouched");
                continue;
            }
            // beta scales the key column up, 1/beta the g query columns down
            double beta = std::sqrt(qsum / knorm);
            double inv = std::sqrt(knorm / qsum);
            detail::check_factor(beta, "k channel");
            detail::check_factor(inv, "q channel");
            detail::scale_col(res.second, kcol, beta);
            kf[kcol] = beta;
            for (std::size_t j = 0; j < g; j++) {
                const std::size_t qcol = (kv * g + j) * dk + c;
                detail::scale_col(res.first, qcol, inv);
                qf[qcol] = inv;
            }
        }
    }
    return res;
}

// Value/output channel rule: w_v column j feeds the w_o rows of the g query
// heads in its group (row h*dk + c for each head h); reciprocal factors keep
// the composed product fixed.
inline TensorScaleResult vo_channel_scale(const Matrix& w_v, const Matrix& w_o,
                                          const AttentionLayout& lo,
                                          NormKind nk = NormKind::l1) {
    lo.validate();
    if (w_v.cols != lo.kv_width() || w_o.rows != lo.q_width())
        throw ShapeError("vo_channel_scale: weights do not match layout");
    const std::size_t dk = lo.head_dim, g = lo.g();
    TensorScaleResult res{w_v, w_o, {}};
    res.plan.strategy = Strategy::vo_channel;
    std::vector<double>& vf = res.plan.channel_factors[Role::v];
    std::vector<double>& of = res.plan.channel_factors[Role::o];
    vf.assign(w_v.cols, 1.0);
    of.assign(w_o.rows, 1.0);

    for (std::size_t kv = 0; kv < lo.n_kv_heads; kv++) {
        for (std::size_t c = 0; c < dk; c++) {
            const std::size_t vcol = kv * dk + c;
            double osum = 0.0;
            for (std::size_t j = 0; j < g; j++) {
                const std::size_t orow = (kv * g + j) * dk + c;
                osum += nk == NormKind::l1 ? detail::row_l1(w_o, orow)
                                           : detail::row_l2(w_o, orow);
            }
            double vnorm = nk == NormKind::l1 ? detail::col_l1(w_v, vcol)
                                              : detail::col_l2(w_v, vcol);
            if (osum == 0.0 || vnorm == 0.0) {
                res.plan.warnings.push_back("zero-norm channel (kv head " +
                                            std::to_string(kv) + ", c " +
                                            std::to_string(c) + ") untouched");
                continue;
            }
            double alpha = std::sqrt(osum / vnorm);
            double inv = std::sqrt(vnorm / osum);
            detail::check_factor(alpha, "v channel");
            detail::check_factor(inv, "o channel");
            detail::scale_col(res.first, vcol, alpha);
            vf[vcol] = alpha;
            for (std::size_t j = 0; j < g; j++) {
                const std::size_t orow = (kv * g + j) * dk + c;
                detail::scale_row(res.second, orow, inv);
                of[orow] = inv;
            }
        }
    }
    return res;
}

namespace detail {

inline void apply_role(Matrix& w, Matrix& bias, Role role, const ScalePlan& plan,
                       bool rows_are_channels) {
    auto tf = plan.tensor_factors.find(role);
    auto cf = plan.channel_factors.find(role);
    if (tf != plan.tensor_factors.end()) {
        for (double& v : w.data) v *= tf->second;
        if (!bias.empty() && role != Role::o)
            for (double& v : bias.data) v *= tf->second;
        return;
    }
    if (cf == plan.channel_factors.end()) return;
    const std::vector<double>& f = cf->second;
    if (rows_are_channels) {
        if (f.size() != w.rows)
            throw PlanError(std::string("plan for role ") + role_name(role) +
                            " has " + std::to_string(f.size()) + " factors, weight has " +
                            std::to_string(w.rows) + " rows");
        for (std::size_t r = 0; r < w.rows; r++) scale_row(w, r, f[r]);
        return; // w_o rows; b_o is never scaled
    }
    if (f.size() != w.cols)
        throw PlanError(std::string("plan for role ") + role_name(role) + " has " +
                        std::to_string(f.size()) + " factors, weight has " +
                        std::to_string(w.cols) + " columns");
    for (std::size_t c = 0; c < w.cols; c++) scale_col(w, c, f[c]);
    if (!bias.empty() && role != Role::o)
        for (std::size_t c = 0; c < w.cols; c++) bias(0, c) *= f[c];
}

} // namespace detail

// Applies recorded factors to a full weight set, biases included: b_q/b_k/b_v
// scale with their projection's columns, b_o is a pure output offset and is
// left alone. An all-ones plan is a bit-exact identity.
[[nodiscard]] inline AttentionWeights apply_plan(const AttentionWeights& w,
                                                const ScalePlan& plan) {
    if (plan.strategy == Strategy::lora)
        throw PlanError("lora plan cannot be applied to attention weights");
    AttentionWeights out = w;
    detail::apply_role(out.w_q, out.b_q, Role::q, plan, false);
    detail::apply_role(out.w_k, out.b_k, Role::k, plan, false);
    detail::apply_role(out.w_v, out.b_v, Role::v, plan, false);
    detail::apply_role(out.w_o, out.b_o, Role::o, plan,
                       plan.channel_factors.count(Role::o) > 0);
    return out;
}

[[nodiscard]] inline LoraPair apply_plan(const LoraPair& p, const ScalePlan& plan) {
    if (plan.strategy != Strategy::lora)
        throw PlanError(std::string("plan strategy ") + strategy_name(plan.strategy) +
                        " cannot be applied to a LoRA pair");
    LoraPair out = p;
    Matrix none;
    detail::apply_role(out.a, none, Role::lora_a, plan, false);
    detail::apply_role(out.b, none, Role::lora_b, plan, false);
    return out;
}

} // namespace wisca
