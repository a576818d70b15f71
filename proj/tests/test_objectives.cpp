#include "nfwbo/objectives.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace nfwbo;

namespace {

Vector random_x(std::mt19937_64& rng, Eigen::Index d) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector x(d);
    for (auto& v : x) v = u(rng);
    return x;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(CostModel, Examples) {
    const CostModel cm;
    EXPECT_DOUBLE_EQ(cost_eval(cm, Eigen::Vector2d(0.3, 1.0)), 1.0);
    EXPECT_DOUBLE_EQ(cost_eval(cm, Eigen::Vector2d(0.7, 0.0)), 0.2);
    EXPECT_DOUBLE_EQ(cost_eval(cm, Eigen::Vector2d(0.0, 0.5)), 0.6);
}

TEST(CostModel, AffineInEpsIndependentOfTau) {
    const CostModel cm;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const double e = u(rng);
        EXPECT_NEAR(cm(Eigen::Vector2d(u(rng), e)), 0.2 + 0.8 * e, 1e-15);
    }
    EXPECT_THROW((CostModel{0.0, 1.0, 1.0}).validate(), std::invalid_argument);
    EXPECT_THROW((CostModel{1.0, 1.0, 0.0}).validate(), std::invalid_argument);
}

TEST(MfBranin, GlobalValueMatchesGrid) {
    const ObjectiveSpec s = make_mf_branin();
    const double v = s(s.known_optimum->x, target_fidelity(), 0).y;
    EXPECT_NEAR(v, -0.397887, 1e-6);
    EXPECT_NEAR(s.known_optimum->value, -0.397887, 1e-6);
    EXPECT_NEAR(-oracle::branin_grid_min(400), -0.397887, 2e-3);
    EXPECT_LE(-oracle::branin_grid_min(400), v);
}

TEST(MfBranin, BiasTerms) {
    Vector x(2);
    x << 0.3, 0.6;
    const double x1 = -5.0 + 15.0 * 0.3, x2 = 9.0;
    EXPECT_DOUBLE_EQ(mf_branin(x, target_fidelity()), -oracle::branin(x1, x2));
    x[0] = 1.0 / 3.0;  // maps to x1 = 0
    EXPECT_NEAR(mf_branin(x, Eigen::Vector2d(0.0, 0.0)) - mf_branin(x, target_fidelity()), 1.5 * std::cos(9.0), 1e-12);
}

TEST(MfPark4, Examples) {
    Vector x = Vector::Zero(4);
    // x1 floored at 1e-6; with x2 = x3 = x4 = 0 only the exponential term survives.
    EXPECT_NEAR(mf_park4(x, target_fidelity()), 1e-6 * std::exp(1.0), 1e-18);
    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i) {
        x = random_x(rng, 4);
        const double p = park(x);
        const double y0 = mf_park4(x, Eigen::Vector2d(1.0, 0.0)), y1 = mf_park4(x, Eigen::Vector2d(1.0, 1.0));
        EXPECT_NEAR(y1 - y0, 0.1 * p, 1e-12);
        EXPECT_NEAR(mf_park4(x, Eigen::Vector2d(1.0, 0.5)), 0.5 * (y0 + y1), 1e-12);
    }
}

TEST(MfPark4, OptimumBeatsRandomSearch) {
    const ObjectiveSpec s = make_mf_park4();
    std::mt19937_64 rng(3);
    double best = -1e300;
    for (int i = 0; i < 1000000; ++i) best = std::max(best, park(random_x(rng, 4)));
    EXPECT_GE(s.known_optimum->value, best);
    EXPECT_LT(s.known_optimum->value - best, 0.5);
}

TEST(MfCurve, Examples) {
    Vector x(3);
    x << 0.7, 0.2, 0.5;
    const double s1 = 1.0 - std::exp(-5.0);
    EXPECT_NEAR(s1, 0.99326, 1e-5);
    const double f0 = 0.5 * std::exp(-(0.25 + 0.36) / 0.2);
    EXPECT_NEAR(mf_curve(x, target_fidelity()), s1 + (1.0 - s1) * f0, 1e-15);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 20; ++i) {
        x = random_x(rng, 3);
        const double tau = static_cast<double>(i) / 19.0;
        const Eigen::Vector3d b(0.2, 0.8, 0.5);
        const double f0x = 0.5 * std::exp(-(x - b).squaredNorm() / 0.2);
        EXPECT_NEAR(mf_curve(x, Eigen::Vector2d(tau, 0.0)), f0x * (1.0 - 0.3 * (1.0 - tau)), 1e-15);
    }
}

TEST(MfCurve, OptimumMatchesDenseSearch) {
    const ObjectiveSpec s = make_mf_curve();
    // Coarse grid over the full cube, then a fine grid around the best cell.
    Vector x(3), best_x(3);
    double best = -1.0;
    const int n = 100;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            for (int k = 0; k <= n; ++k) {
                x << i / double(n), j / double(n), k / double(n);
                const double v = mf_curve(x, target_fidelity());
                if (v > best) best = v, best_x = x;
            }
    const Vector centre = best_x;
    for (int i = -50; i <= 50; ++i)
        for (int j = -50; j <= 50; ++j)
            for (int k = -50; k <= 50; ++k) {
                x = centre + Eigen::Vector3d(i, j, k) * 2e-4;
                const double v = mf_curve(x, target_fidelity());
                if (v > best) best = v, best_x = x;
            }
    EXPECT_NEAR(s.known_optimum->value, best, 1e-6);
    EXPECT_GE(s.known_optimum->value, best - 1e-12);
    EXPECT_LT((s.known_optimum->x - best_x).norm(), 1e-3);
    EXPECT_NEAR(mf_curve(s.known_optimum->x, target_fidelity()), s.known_optimum->value, 1e-12);
}

TEST(MfCurve, HighEpochSlicesMoreCorrelated) {
    std::mt19937_64 rng(5);
    std::vector<double> a, b, c, d;
    for (int i = 0; i < 500; ++i) {
        const Vector x = random_x(rng, 3);
        a.push_back(mf_curve(x, Eigen::Vector2d(1.0, 0.9)));
        b.push_back(mf_curve(x, Eigen::Vector2d(1.0, 1.0)));
        c.push_back(mf_curve(x, Eigen::Vector2d(1.0, 0.1)));
        d.push_back(mf_curve(x, Eigen::Vector2d(1.0, 0.2)));
    }
    EXPECT_GE(correlation(a, b) - correlation(c, d), 0.1);
}

TEST(Synthetic, TargetFidelityIsGroundTruth) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 1000; ++i) {
        Vector x2 = random_x(rng, 2), x3 = random_x(rng, 3), x4 = random_x(rng, 4);
        EXPECT_EQ(mf_branin(x2, target_fidelity()), -oracle::branin(-5.0 + 15.0 * x2[0], 15.0 * x2[1]));
        EXPECT_EQ(mf_park4(x4, target_fidelity()), park(x4));
        const Eigen::Vector3d a(0.7, 0.2, 0.5), b(0.2, 0.8, 0.5);
        const double s = 1.0 - std::exp(-5.0);
        EXPECT_NEAR(mf_curve(x3, target_fidelity()),
                    std::exp(-(x3 - a).squaredNorm() / 0.08) * s + 0.5 * std::exp(-(x3 - b).squaredNorm() / 0.2) * (1 - s),
                    1e-15);
    }
}

TEST(Synthetic, RegistryAndCosts) {
    for (const auto& [name, desc] : synthetic_objectives()) {
        const ObjectiveSpec s = make_synthetic(name);
        EXPECT_EQ(s.name, name);
        EXPECT_FALSE(desc.empty());
        ASSERT_TRUE(s.known_optimum);
        const Vector x = Vector::Constant(s.design_box.dim(), 0.4);
        EXPECT_DOUBLE_EQ(s(x, Eigen::Vector2d(0.2, 0.5), 0).cost, 0.6);
    }
    EXPECT_THROW(make_synthetic("nope"), std::invalid_argument);
}

TEST(NoisyWrap, ZeroNoiseIsIdentity) {
    const ObjectiveSpec base = make_mf_curve();
    const ObjectiveSpec s = noisy_wrap(base, 0.0, 7);
    std::mt19937_64 rng(7);
    for (int i = 0; i < 50; ++i) {
        const Vector x = random_x(rng, 3);
        EXPECT_EQ(s(x, Eigen::Vector2d(0.5, 0.5), i).y, base(x, Eigen::Vector2d(0.5, 0.5), i).y);
    }
    EXPECT_THROW(noisy_wrap(base, -1.0, 0), std::invalid_argument);
}

TEST(NoisyWrap, NoiseStatisticsAndDeterminism) {
    const ObjectiveSpec base = make_mf_branin();
    const double sd = 0.3;
    const ObjectiveSpec s = noisy_wrap(base, sd, 11);
    EXPECT_DOUBLE_EQ(s.noise_sd, sd);
    const Vector x = Vector::Constant(2, 0.25);
    const Eigen::Vector2d z(0.4, 0.6);
    const double truth = base(x, z, 0).y;
    double sum = 0, sq = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const double e = s(x, z, static_cast<std::uint64_t>(i)).y - truth;
        sum += e;
        sq += e * e;
    }
    const double mean = sum / n;
    const double sample_sd = std::sqrt((sq - n * mean * mean) / (n - 1));
    EXPECT_NEAR(sample_sd, sd, 0.05 * sd);
    EXPECT_EQ(s(x, z, 42).y, s(x, z, 42).y);
    EXPECT_NE(s(x, z, 42).y, s(x, z, 43).y);
    EXPECT_NE(s(x, z, 42).y, noisy_wrap(base, sd, 12)(x, z, 42).y);
}
