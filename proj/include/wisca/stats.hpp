// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <thread>
#include <vector>

#include "wisca/errors.hpp"
#include "wisca/rng.hpp"

// Monte-Carlo check of the norm-convergence statement: the L1 and L2 norm
// ratios of two i.i.d. Gaussian matrices concentrate around 1 as mn grows,
// with std ~ 1/sqrt(mn).
namespace wisca {

struct ConvergenceRow {
    std::size_t m = 0, n = 0, trials = 0;
    double mean_ratio_l1 = 0.0, std_ratio_l1 = 0.0;
    double mean_ratio_l2 = 0.0, std_ratio_l2 = 0.0;
    double chebyshev_bound = 0.0;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
};

// deviation level the analytic tail bound is quoted at
inline constexpr double kChebyshevEps = 0.05;

// P(|  ||W||_1 / E||W||_1  - 1| > eps) <= (1 - 2/pi) / (eps^2 mn)
inline double chebyshev_bound(std::size_t m, std::size_t n, double eps = kChebyshevEps) {
    double b = (1.0 - 2.0 / M_PI) / (eps * eps * static_cast<double>(m) *
                                     static_cast<double>(n));
    return std::min(1.0, b);
}

namespace detail {

// Fused |x| and x^2 accumulation over `count` Gaussian draws without
// materializing the matrix. Eight interleaved sub-streams keep the FP
// pipelines busy; the lane split is fixed, so results do not depend on the
// caller's threading. Partial sums reduce in fixed order.
inline std::pair<double, double> gauss_norm_sums(std::size_t count, const Rng& stream) {
    const auto& t = zig_tables;
    Rng lane[8] = {stream.fork(0x10), stream.fork(0x11), stream.fork(0x12),
                   stream.fork(0x13), stream.fork(0x14), stream.fork(0x15),
                   stream.fork(0x16), stream.fork(0x17)};
    double s1[8] = {}, s2[8] = {};
    std::size_t full = count & ~static_cast<std::size_t>(7);
    for (std::size_t i = 0; i < full; i += 8) {
        for (int l = 0; l < 8; l++) {
            std::uint64_t u = lane[l].next();
            int idx = static_cast<int>(u & 0xff);
            std::uint64_t rabs = (u >> 9) & ((1ULL << 52) - 1);
            double x = static_cast<double>(rabs) * t.w[idx];
            if (rabs >= t.k[idx]) [[unlikely]]
                x = lane[l].gauss_abs_continue(idx, x);
            s1[l] += x;
            s2[l] += x * x;
        }
    }
    for (std::size_t i = full; i < count; i++) {
        double x = std::fabs(lane[0].gauss());
        s1[0] += x;
        s2[0] += x * x;
    }
    double a1 = ((s1[0] + s1[1]) + (s1[2] + s1[3])) + ((s1[4] + s1[5]) + (s1[6] + s1[7]));
    double a2 = ((s2[0] + s2[1]) + (s2[2] + s2[3])) + ((s2[4] + s2[5]) + (s2[6] + s2[7]));
    return {a1, a2};
}

} // namespace detail

// Samples two independent m x n Gaussian matrices and returns
// (||A||_1/||B||_1, ||A||_2/||B||_2). The norms are scale-free in sigma but
// sigma is applied anyway to guard against scale bugs.
inline std::pair<double, double> norm_ratio_trial(std::size_t m, std::size_t n,
                                                  double sigma, const Rng& rng) {
    if (m < 1 || n < 1) throw DomainError("norm_ratio_trial: dims must be >= 1");
    if (!(sigma > 0.0)) throw DomainError("norm_ratio_trial: sigma must be > 0");
    auto [l1a, l2a] = detail::gauss_norm_sums(m * n, rng.fork(1));
    auto [l1b, l2b] = detail::gauss_norm_sums(m * n, rng.fork(2));
    // sigma cancels in the ratio only up to rounding; apply it symmetrically
    return {(sigma * l1a) / (sigma * l1b),
            std::sqrt(sigma * sigma * l2a) / std::sqrt(sigma * sigma * l2b)};
}

// Per size: empirical mean/std of both ratios over `trials` independent
// pairs plus the analytic tail bound. Trial i draws from a pre-assigned
// fork, so any worker count reproduces the same table.
inline ConvergenceTable convergence_experiment(
    const std::vector<std::pair<std::size_t, std::size_t>>& sizes, std::size_t trials,
    double sigma, const Rng& rng, std::size_t workers = 1) {
    if (trials < 1) throw DomainError("convergence_experiment: trials must be >= 1");
    if (workers < 1) workers = 1;
    ConvergenceTable table;
    for (std::size_t si = 0; si < sizes.size(); si++) {
        auto [m, n] = sizes[si];
        std::vector<double> r1(trials), r2(trials);
        auto worker = [&](std::size_t w) {
            for (std::size_t i = w; i < trials; i += workers) {
                auto [a, b] = norm_ratio_trial(m, n, sigma, rng.fork(si, i));
                r1[i] = a;
                r2[i] = b;
            }
        };
        if (workers == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; w++) pool.emplace_back(worker, w);
            for (auto& th : pool) th.join();
        }
        auto mean_std = [&](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
            return std::pair<double, double>{mean, std::sqrt(var)};
        };
        auto [m1, s1] = mean_std(r1);
        auto [m2, s2] = mean_std(r2);
        table.rows.push_back({m, n, trials, m1, s1, m2, s2, chebyshev_bound(m, n)});
    }
    return table;
}

inline std::string convergence_csv(const ConvergenceTable& t) {
    std::string out =
        "m,n,trials,mean_ratio_l1,std_ratio_l1,mean_ratio_l2,std_ratio_l2,chebyshev_bound\n";
    char buf[256];
    for (const auto& r : t.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.m,
                      r.n, r.trials, r.mean_ratio_l1, r.std_ratio_l1, r.mean_ratio_l2,
                      r.std_ratio_l2, r.chebyshev_bound);
        out += buf;
    }
    return out;
}

} // namespace wisca
