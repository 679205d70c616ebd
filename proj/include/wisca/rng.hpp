// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "wisca/errors.hpp"
#include "wisca/matrix.hpp"

// Deterministic cross-platform sampling: xoshiro256++ streams seeded through
// splitmix64, Gaussian draws via a 256-layer ziggurat. Same seed => same
// stream, bit for bit, on every platform (integer state, f64 table math).
namespace wisca {

inline std::uint64_t splitmix64(std::uint64_t& z) {
    z += 0x9e3779b97f4a7c15ULL;
    std::uint64_t t = z;
    t = (t ^ (t >> 30)) * 0xbf58476d1ce4e5b9ULL;
    t = (t ^ (t >> 27)) * 0x94d049bb133111ebULL;
    return t ^ (t >> 31);
}

namespace detail {

inline std::uint64_t rotl64(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

// ziggurat layer tables; built once, thread-safe magic static
struct ZigTables {
    static constexpr double r = 3.6541528853610087963519472518;
    std::uint64_t k[256];
    double w[256];
    double f[256];
    ZigTables() {
        const double m = 4503599627370496.0; // 2^52: span of the magnitude draw
        const double fr = std::exp(-0.5 * r * r);
        const double v = r * fr + std::sqrt(M_PI / 2.0) * std::erfc(r / std::sqrt(2.0));
        double dn = r, tn = r;
        const double q = v / fr;
        k[0] = static_cast<std::uint64_t>((dn / q) * m);
        k[1] = 0;
        w[0] = q / m;
        w[255] = dn / m;
        f[0] = 1.0;
        f[255] = fr;
        for (int i = 254; i >= 1; i--) {
            dn = std::sqrt(-2.0 * std::log(v / dn + std::exp(-0.5 * dn * dn)));
            k[i + 1] = static_cast<std::uint64_t>((dn / tn) * m);
            tn = dn;
            f[i] = std::exp(-0.5 * dn * dn);
            w[i] = dn / m;
        }
    }
};

// load-time init: no per-call guard check in the sampling hot path
inline const ZigTables zig_tables{};

} // namespace detail

struct Rng {
    static constexpr const char* algorithm = "xoshiro256++ / ziggurat-256";

    std::uint64_t seed = 0;
    std::uint64_t s[4] = {};

    explicit Rng(std::uint64_t seed_value = 0) : seed(seed_value) {
        std::uint64_t z = seed_value;
        for (auto& word : s) word = splitmix64(z);
    }

    std::uint64_t next() {
        std::uint64_t r = detail::rotl64(s[0] + s[3], 23) + s[0];
        std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = detail::rotl64(s[3], 45);
        return r;
    }

    // uniform in [0, 1), 53-bit resolution
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Derived stream keyed by up to two salts and the *original* seed, so
    // fork(i) yields the same child no matter how much the parent has been
    // consumed. Used to pre-assign per-trial / per-sample streams that stay
    // reproducible at any worker count.
    Rng fork(std::uint64_t a, std::uint64_t b = 0) const {
        std::uint64_t z = seed;
        std::uint64_t h = splitmix64(z);
        z ^= a * 0x9e3779b97f4a7c15ULL;
        h ^= splitmix64(z);
        z ^= b * 0xbf58476d1ce4e5b9ULL;
        h ^= splitmix64(z);
        return Rng(h);
    }

    // standard normal draw; the sign bit is independent of the magnitude
    double gauss() {
        const auto& t = detail::zig_tables;
        std::uint64_t u = next();
        int idx = static_cast<int>(u & 0xff);
        std::uint64_t rabs = (u >> 9) & ((1ULL << 52) - 1);
        double x = static_cast<double>(rabs) * t.w[idx];
        if (rabs >= t.k[idx]) [[unlikely]]
            x = gauss_abs_continue(idx, x);
        return (u & 0x100) ? -x : x;
    }

    // Continuation after a layer reject: base layer falls through to the
    // exponential tail, other layers run the wedge test; a wedge reject
    // redraws and loops. Returns the accepted magnitude.
    double gauss_abs_continue(int idx, double x) {
        const auto& t = detail::zig_tables;
        for (;;) {
            if (idx == 0) {
                double xx, yy;
                do {
                    xx = -std::log1p(-u01()) / detail::ZigTables::r;
                    yy = -std::log1p(-u01());
                } while (yy + yy <= xx * xx);
                return detail::ZigTables::r + xx;
            }
            if ((t.f[idx - 1] - t.f[idx]) * u01() + t.f[idx] < std::exp(-0.5 * x * x))
                return x;
            std::uint64_t u = next();
            idx = static_cast<int>(u & 0xff);
            std::uint64_t rabs = (u >> 9) & ((1ULL << 52) - 1);
            x = static_cast<double>(rabs) * t.w[idx];
            if (rabs < t.k[idx]) return x;
        }
    }
};

inline Matrix gaussian_fill(std::size_t rows, std::size_t cols, double sigma, Rng& rng) {
    if (!(sigma > 0.0)) throw DomainError("gaussian_fill: sigma must be > 0");
    if (rows == 0 || cols == 0) throw DomainError("gaussian_fill: empty shape");
    Matrix m(rows, cols);
    for (double& v : m.data) v = sigma * rng.gauss();
    return m;
}

} // namespace wisca
