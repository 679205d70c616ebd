// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "wisca/errors.hpp"

// Toy two-parameter landscape L(Q,K) = (QK - C)^2: SGD-with-momentum runs
// from raw vs norm-balanced starts, the gradient-direction drift derivation,
// and the Hessian-trace profile along a contour QK = C.
namespace wisca {

struct SimConfig {
    double c = 1.0;
    double eta = 0.01;
    double beta = 0.9;
    double eps = 1e-2;
    std::size_t max_iters = 10000;

    void validate() const {
        if (!(eta > 0.0)) throw DomainError("sim config: eta must be > 0");
        if (!(beta >= 0.0 && beta < 1.0)) throw DomainError("sim config: beta in [0,1)");
        if (!(eps > 0.0)) throw DomainError("sim config: eps must be > 0");
        if (max_iters < 1) throw DomainError("sim config: max_iters must be >= 1");
    }
};

struct TrajStep {
    std::size_t iter;
    double q, k, loss, gq, gk;
};

struct Trajectory {
    std::vector<TrajStep> steps;
    bool converged = false;
    bool diverged = false;
    std::optional<std::size_t> iters_to_converge;
};

inline double toy_loss(double q, double k, double c) {
    double d = q * k - c;
    return d * d;
}

inline std::pair<double, double> toy_grad(double q, double k, double c) {
    double d = 2.0 * (q * k - c);
    return {d * k, d * q};
}

// Balance |Q| and |K| while preserving the product exactly: Q' keeps the
// sign of Q, K' is computed as QK/Q' so Q'K' == QK at the bit level.
inline std::pair<double, double> wisca_project(double q, double k) {
    double p = q * k;
    if (p == 0.0) return {0.0, 0.0};
    double qp = std::copysign(std::sqrt(std::fabs(p)), q);
    return {qp, p / qp};
}

// velocity form: v <- beta*v - eta*grad; theta <- theta + v
inline Trajectory sgd_momentum_run(double q0, double k0, const SimConfig& cfg,
                                   bool wisca_init = false) {
    cfg.validate();
    Trajectory traj;
    double q = q0, k = k0;
    if (wisca_init) {
        auto [qp, kp] = wisca_project(q0, k0);
        q = qp;
        k = kp;
    }
    double vq = 0.0, vk = 0.0;
    for (std::size_t t = 0; t <= cfg.max_iters; t++) {
        double loss = toy_loss(q, k, cfg.c);
        auto [gq, gk] = toy_grad(q, k, cfg.c);
        if (!std::isfinite(loss) || !std::isfinite(q) || !std::isfinite(k)) {
            traj.diverged = true;
            return traj;
        }
        traj.steps.push_back({t, q, k, loss, gq, gk});
        if (loss < cfg.eps) {
            traj.converged = true;
            traj.iters_to_converge = t;
            return traj;
        }
        vq = cfg.beta * vq - cfg.eta * gq;
        vk = cfg.beta * vk - cfg.eta * gk;
        q += vq;
        k += vk;
    }
    return traj;
}

// |Q/K - (Q - eps*K)/(K - eps*Q)|: how much one normalized-step update turns
// the gradient direction; zero exactly when Q^2 == K^2
inline double gradient_direction_drift(double q, double k, double eps, double c = 1.0) {
    (void)c; // drift of the direction ratio is independent of the contour level
    if (k == 0.0) throw DomainError("gradient_direction_drift: K must be nonzero");
    double denom = k - eps * q;
    if (denom == 0.0)
        throw DomainError("gradient_direction_drift: K - eps*Q must be nonzero");
    return std::fabs(q / k - (q - eps * k) / denom);
}

struct ContourPoint {
    double q, k, trace;
};

// Tr(H) = 2(Q^2 + K^2) along QK = C, sampled on a log-symmetric grid that
// always contains the balanced point Q = K = sqrt(C).
inline std::vector<ContourPoint> contour_flatness_profile(double c, std::size_t grid,
                                                          double log_span = 1.3862943611198906) {
    if (!(c > 0.0)) throw DomainError("contour_flatness_profile: C must be > 0");
    if (grid < 3) throw DomainError("contour_flatness_profile: grid must be >= 3");
    std::vector<ContourPoint> out;
    out.reserve(grid);
    double root = std::sqrt(c);
    for (std::size_t i = 0; i < grid; i++) {
        double u = -log_span + 2.0 * log_span * static_cast<double>(i) /
                                   static_cast<double>(grid - 1);
        double q = root * std::exp(u);
        double k = c / q;
        out.push_back({q, k, 2.0 * (q * q + k * k)});
    }
    return out;
}

// header iter,Q,K,loss,gQ,gK; 17 significant digits
inline std::string trajectory_csv(const Trajectory& traj) {
    std::string out = "iter,Q,K,loss,gQ,gK\n";
    char buf[160];
    for (const auto& s : traj.steps) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.iter, s.q,
                      s.k, s.loss, s.gq, s.gk);
        out += buf;
    }
    return out;
}

// presentational only: trajectory polyline over a few QK = const hyperbolas
inline std::string trajectory_svg(const Trajectory& traj, const SimConfig& cfg,
                                  int width = 640, int height = 640) {
    double lo_q = 0.0, hi_q = 1.0, lo_k = 0.0, hi_k = 1.0;
    for (const auto& s : traj.steps) {
        lo_q = std::min(lo_q, s.q);
        hi_q = std::max(hi_q, s.q);
        lo_k = std::min(lo_k, s.k);
        hi_k = std::max(hi_k, s.k);
    }
    double pad_q = 0.25 * (hi_q - lo_q + 1e-9), pad_k = 0.25 * (hi_k - lo_k + 1e-9);
    lo_q -= pad_q;
    hi_q += pad_q;
    lo_k -= pad_k;
    hi_k += pad_k;
    auto px = [&](double q) { return (q - lo_q) / (hi_q - lo_q) * width; };
    auto py = [&](double k) { return height - (k - lo_k) / (hi_k - lo_k) * height; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    char buf[96];
    // contour hyperbolas around the target level
    for (double lvl : {0.25 * cfg.c, 0.5 * cfg.c, cfg.c, 2.0 * cfg.c, 4.0 * cfg.c}) {
        if (lvl == 0.0) continue;
        svg += "<polyline fill=\"none\" stroke=\"#c8d8e8\" stroke-width=\"1\" points=\"";
        for (int i = 0; i <= 200; i++) {
            double q = lo_q + (hi_q - lo_q) * i / 200.0;
            if (std::fabs(q) < 1e-9) continue;
            double k = lvl / q;
            if (k < lo_k || k > hi_k) continue;
            std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(q), py(k));
            svg += buf;
        }
        svg += "\"/>\n";
    }
    svg += "<polyline fill=\"none\" stroke=\"#d04030\" stroke-width=\"2\" points=\"";
    for (const auto& s : traj.steps) {
        std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(s.q), py(s.k));
        svg += buf;
    }
    svg += "\"/>\n";
    if (!traj.steps.empty()) {
        std::snprintf(buf, sizeof buf,
                      "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"#2060c0\"/>\n",
                      px(traj.steps.front().q), py(traj.steps.front().k));
        svg += buf;
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace wisca
