// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "wisca/errors.hpp"
#include "wisca/matrix.hpp"
#include "wisca/rng.hpp"

// Functional equivalence: two parameterizations are equivalent when their
// forwards agree on every input. The check runs a battery of random inputs
// and reports the worst deviation; a shape mismatch is architectural
// inconsistency and raises StructuralError instead of failing numerically.
namespace wisca {

struct EquivalenceReport {
    std::size_t battery_size = 0;
    double max_abs_dev = 0.0;
    double max_rel_dev = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::size_t worst_input = 0;
};

// max-entry deviation relative to the larger max-entry magnitude; 0/0 -> 0
inline double relative_deviation(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw StructuralError("outputs have different shapes: " + std::to_string(a.rows) +
                              "x" + std::to_string(a.cols) + " vs " +
                              std::to_string(b.rows) + "x" + std::to_string(b.cols));
    double dev = 0.0;
    for (std::size_t i = 0; i < a.data.size(); i++)
        dev = std::max(dev, std::fabs(a.data[i] - b.data[i]));
    double scale = std::max(max_abs(a), max_abs(b));
    if (dev == 0.0) return 0.0;
    return scale == 0.0 ? 0.0 : dev / scale;
}

using Forward = std::function<Matrix(const Matrix&)>;

inline EquivalenceReport verify_equivalence(const Forward& f_a, const Forward& f_b,
                                            const std::vector<Matrix>& battery,
                                            double tol) {
    if (!(tol > 0.0)) throw DomainError("verify_equivalence: tol must be > 0");
    EquivalenceReport rep;
    rep.battery_size = battery.size();
    rep.tolerance = tol;
    for (std::size_t i = 0; i < battery.size(); i++) {
        Matrix a = f_a(battery[i]);
        Matrix b = f_b(battery[i]);
        if (!a.same_shape(b))
            throw StructuralError("outputs have different shapes at battery input " +
                                  std::to_string(i));
        double abs_dev = 0.0;
        for (std::size_t j = 0; j < a.data.size(); j++)
            abs_dev = std::max(abs_dev, std::fabs(a.data[j] - b.data[j]));
        double scale = std::max(max_abs(a), max_abs(b));
        double rel_dev = abs_dev == 0.0 ? 0.0 : (scale == 0.0 ? 0.0 : abs_dev / scale);
        if (rel_dev > rep.max_rel_dev) {
            rep.max_rel_dev = rel_dev;
            rep.worst_input = i;
        }
        rep.max_abs_dev = std::max(rep.max_abs_dev, abs_dev);
    }
    rep.passed = rep.max_rel_dev <= tol;
    return rep;
}

// deterministic default battery: `count` inputs, Gaussian entries
inline std::vector<Matrix> make_battery(std::size_t count, std::size_t rows,
                                        std::size_t cols, std::uint64_t seed,
                                        double sigma = 1.0) {
    std::vector<Matrix> out;
    out.reserve(count);
    Rng base(seed);
    for (std::size_t i = 0; i < count; i++) {
        Rng r = base.fork(i);
        out.push_back(gaussian_fill(rows, cols, sigma, r));
    }
    return out;
}

using ScalarField = std::function<double(const std::vector<double>&)>;

// sum of central second differences per coordinate
inline double hessian_trace(const ScalarField& f, const std::vector<double>& theta,
                            double h) {
    if (!(h > 0.0)) throw DomainError("hessian_trace: h must be > 0");
    double f0 = f(theta);
    if (!std::isfinite(f0)) throw NumericError("hessian_trace: f(theta) not finite");
    double tr = 0.0;
    std::vector<double> p = theta;
    for (std::size_t i = 0; i < theta.size(); i++) {
        p[i] = theta[i] + h;
        double fp = f(p);
        p[i] = theta[i] - h;
        double fm = f(p);
        p[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("hessian_trace: non-finite field evaluation at coordinate " +
                               std::to_string(i));
        tr += (fp - 2.0 * f0 + fm) / (h * h);
    }
    return tr;
}

struct SharpnessProbe {
    double base_loss = 0.0;
    double hessian_trace = 0.0;
    double sigma = 0.0;
    double mc_expected_val_loss = 0.0;
    double analytic_expected_val_loss = 0.0;
    double mc_standard_error = 0.0;
};

// Monte-Carlo E[f(theta + delta)], delta ~ N(0, sigma^2 I), next to the
// second-order prediction L0 + sigma^2/2 * Tr(H). Sample i draws from a
// pre-assigned forked stream, so the estimate is independent of how the
// work is split across workers.
inline SharpnessProbe expected_val_loss(const ScalarField& f,
                                        const std::vector<double>& theta, double sigma,
                                        std::size_t samples, const Rng& rng,
                                        double trace_h = 1e-4) {
    if (!(sigma > 0.0)) throw DomainError("expected_val_loss: sigma must be > 0");
    if (samples < 1) throw DomainError("expected_val_loss: samples must be >= 1");
    SharpnessProbe probe;
    probe.sigma = sigma;
    probe.base_loss = f(theta);
    if (!std::isfinite(probe.base_loss))
        throw NumericError("expected_val_loss: base loss not finite");
    probe.hessian_trace = hessian_trace(f, theta, trace_h);
    probe.analytic_expected_val_loss =
        probe.base_loss + 0.5 * sigma * sigma * probe.hessian_trace;

    double sum = 0.0, sum_sq = 0.0;
    std::vector<double> p(theta.size());
    for (std::size_t i = 0; i < samples; i++) {
        Rng r = rng.fork(i);
        for (std::size_t j = 0; j < p.size(); j++) p[j] = theta[j] + sigma * r.gauss();
        double v = f(p);
        if (!std::isfinite(v))
            throw NumericError("expected_val_loss: non-finite sample at index " +
                               std::to_string(i));
        sum += v;
        sum_sq += v * v;
    }
    double n = static_cast<double>(samples);
    probe.mc_expected_val_loss = sum / n;
    double var = std::max(0.0, sum_sq / n - probe.mc_expected_val_loss * probe.mc_expected_val_loss);
    probe.mc_standard_error = std::sqrt(var / n);
    return probe;
}

enum class Sharper { first, second, tie };

// Among points of (near-)equal base loss, the one with the larger Hessian
// trace is the sharper minimum.
inline Sharper sharpness_compare(const ScalarField& f, const std::vector<double>& theta1,
                                 const std::vector<double>& theta2, double loss_tol = 1e-9,
                                 double trace_h = 1e-4) {
    double f1 = f(theta1), f2 = f(theta2);
    double scale = std::max({1.0, std::fabs(f1), std::fabs(f2)});
    if (std::fabs(f1 - f2) > loss_tol * scale)
        throw PreconditionError("sharpness_compare: base losses differ beyond tolerance (" +
                                std::to_string(f1) + " vs " + std::to_string(f2) + ")");
    double t1 = hessian_trace(f, theta1, trace_h);
    double t2 = hessian_trace(f, theta2, trace_h);
    double tie_band = 1e-6 * std::max({1.0, std::fabs(t1), std::fabs(t2)});
    if (std::fabs(t1 - t2) <= tie_band) return Sharper::tie;
    return t1 > t2 ? Sharper::first : Sharper::second;
}

} // namespace wisca
