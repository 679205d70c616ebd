// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <utility>
#include <vector>

#include <gtest/gtest.h>

#include "wisca/matrix.hpp"
#include "wisca/stats.hpp"

using namespace wisca;

TEST(ChebyshevBound, AnalyticValues) {
    // (1 - 2/pi) / (eps^2 mn) at eps = 0.05
    EXPECT_NEAR(chebyshev_bound(64, 64), (1.0 - 2.0 / M_PI) / (0.0025 * 4096.0), 1e-15);
    EXPECT_NEAR(chebyshev_bound(64, 64), 0.035486, 1e-5);
    EXPECT_NEAR(chebyshev_bound(16, 16), 0.5678, 1e-3);
    EXPECT_EQ(chebyshev_bound(1, 1), 1.0); // capped
}

TEST(NormRatioTrial, DegenerateAndGuards) {
    Rng rng(61);
    auto [r1, r2] = norm_ratio_trial(1, 1, 1.0, rng);
    EXPECT_TRUE(std::isfinite(r1)); // |x|/|y| is heavy-tailed; only well-definedness
    EXPECT_GT(r1, 0.0);
    EXPECT_GT(r2, 0.0);
    EXPECT_THROW(norm_ratio_trial(0, 4, 1.0, rng), DomainError);
    EXPECT_THROW(norm_ratio_trial(4, 4, 0.0, rng), DomainError);
}

TEST(NormRatioTrial, DeterministicAndSigmaFree) {
    Rng rng(62);
    auto a = norm_ratio_trial(32, 32, 1.0, rng);
    auto b = norm_ratio_trial(32, 32, 1.0, rng);
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
    auto c = norm_ratio_trial(32, 32, 0.01, rng);
    EXPECT_NEAR(c.first, a.first, 1e-10 * a.first);
    EXPECT_NEAR(c.second, a.second, 1e-10 * a.second);
}

TEST(ConvergenceExperiment, MeansConcentrateAndStdShrinks) {
    Rng rng(63);
    auto table = convergence_experiment({{16, 16}, {64, 64}, {256, 256}}, 1000, 1.0, rng);
    ASSERT_EQ(table.rows.size(), 3u);
    for (const auto& r : table.rows) {
        EXPECT_EQ(r.trials, 1000u);
        if (r.m * r.n >= 4096) {
            EXPECT_NEAR(r.mean_ratio_l1, 1.0, 0.01);
            EXPECT_NEAR(r.mean_ratio_l2, 1.0, 0.01);
        }
        EXPECT_NEAR(r.chebyshev_bound, chebyshev_bound(r.m, r.n), 0.0);
    }
    EXPECT_GT(table.rows[0].std_ratio_l1, table.rows[1].std_ratio_l1);
    EXPECT_GT(table.rows[1].std_ratio_l1, table.rows[2].std_ratio_l1);
    EXPECT_GT(table.rows[0].std_ratio_l2, table.rows[1].std_ratio_l2);
    EXPECT_GT(table.rows[1].std_ratio_l2, table.rows[2].std_ratio_l2);
    // delta-method std for the L1 ratio: sqrt((pi - 2)/mn)
    double analytic = std::sqrt((M_PI - 2.0) / 4096.0);
    EXPECT_NEAR(table.rows[1].std_ratio_l1, analytic, 0.25 * analytic);
}

TEST(ConvergenceExperiment, WorkerCountDoesNotChangeResults) {
    Rng rng(64);
    auto one = convergence_experiment({{32, 32}, {8, 64}}, 60, 1.0, rng, 1);
    auto three = convergence_experiment({{32, 32}, {8, 64}}, 60, 1.0, rng, 3);
    ASSERT_EQ(one.rows.size(), three.rows.size());
    for (std::size_t i = 0; i < one.rows.size(); i++) {
        EXPECT_EQ(one.rows[i].mean_ratio_l1, three.rows[i].mean_ratio_l1);
        EXPECT_EQ(one.rows[i].std_ratio_l1, three.rows[i].std_ratio_l1);
        EXPECT_EQ(one.rows[i].mean_ratio_l2, three.rows[i].mean_ratio_l2);
        EXPECT_EQ(one.rows[i].std_ratio_l2, three.rows[i].std_ratio_l2);
    }
    EXPECT_THROW(convergence_experiment({{4, 4}}, 0, 1.0, rng), DomainError);
}

TEST(ConvergenceExperiment, EnvelopeFrequencyAt64) {
    Rng rng(65);
    std::size_t inside = 0, trials = 10000;
    for (std::size_t i = 0; i < trials; i++) {
        auto [r1, r2] = norm_ratio_trial(64, 64, 1.0, rng.fork(0, i));
        if (std::fabs(r1 - 1.0) < 0.07) inside++;
        (void)r2;
    }
    double freq = static_cast<double>(inside) / static_cast<double>(trials);
    EXPECT_GE(freq, 0.99);
}

TEST(ConvergenceExperiment, TailFrequencyRespectsChebyshev) {
    Rng rng(66);
    std::size_t outside = 0, trials = 1000;
    for (std::size_t i = 0; i < trials; i++) {
        auto [r1, r2] = norm_ratio_trial(64, 64, 1.0, rng.fork(0, i));
        if (std::fabs(r1 - 1.0) > kChebyshevEps) outside++;
        (void)r2;
    }
    double freq = static_cast<double>(outside) / static_cast<double>(trials);
    EXPECT_LE(freq, chebyshev_bound(64, 64));
}

TEST(SquaredNormVariance, MatchesGaussianMoments) {
    // ||W||_2^2 ~ sum of mn chi-square(1): mean mn, variance 2mn
    Rng base(67);
    const std::size_t mn = 4096, trials = 2000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < trials; i++) {
        Rng r = base.fork(i);
        Matrix w = gaussian_fill(64, 64, 1.0, r);
        double s = l2_norm_sq(w);
        sum += s;
        sum_sq += s * s;
    }
    double mean = sum / trials;
    double var = sum_sq / trials - mean * mean;
    EXPECT_NEAR(mean / static_cast<double>(mn), 1.0, 0.01);
    EXPECT_NEAR(var / static_cast<double>(mn), 2.0, 0.2);
}

TEST(ConvergenceCsv, HeaderAndDeterminism) {
    Rng rng(68);
    auto t1 = convergence_experiment({{8, 8}, {16, 16}}, 50, 1.0, rng);
    auto t2 = convergence_experiment({{8, 8}, {16, 16}}, 50, 1.0, rng);
    std::string c1 = convergence_csv(t1), c2 = convergence_csv(t2);
    EXPECT_EQ(c1, c2);
    ASSERT_EQ(
        c1.rfind("m,n,trials,mean_ratio_l1,std_ratio_l1,mean_ratio_l2,std_ratio_l2,"
                 "chebyshev_bound\n",
                 0),
        0u);
    // one header + one line per size
    std::size_t lines = 0;
    for (char ch : c1)
        if (ch == '\n') lines++;
    EXPECT_EQ(lines, 3u);
}
