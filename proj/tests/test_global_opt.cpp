#include "nfwbo/global_opt.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace nfwbo;

namespace {

bool stratified(const Matrix& pts, const Box& box) {
    const int n = static_cast<int>(pts.rows());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        std::set<int> seen;
        for (int i = 0; i < n; ++i) {
            const double u = (pts(i, j) - box.lower()[j]) / (box.upper()[j] - box.lower()[j]);
            if (u < 0.0 || u > 1.0) return false;
            seen.insert(std::min(static_cast<int>(u * n), n - 1));
        }
        if (static_cast<int>(seen.size()) != n) return false;
    }
    return true;
}

}  // namespace

TEST(Lhs, OnePointPerStratum) {
    const Matrix p = lhs_sample(4, Box::unit(1), 3);
    std::vector<double> xs(p.data(), p.data() + 4);
    std::sort(xs.begin(), xs.end());
    for (int i = 0; i < 4; ++i) {
        EXPECT_GE(xs[static_cast<std::size_t>(i)], 0.25 * i);
        EXPECT_LE(xs[static_cast<std::size_t>(i)], 0.25 * (i + 1));
    }
}

TEST(Lhs, StratificationAcrossSizes) {
    for (int n : {1, 4, 17, 100})
        for (int d : {1, 2, 25}) {
            Vector lo = Vector::LinSpaced(d, -2.0, 1.0);
            Box box(lo, lo + Vector::Constant(d, 3.5));
            EXPECT_TRUE(stratified(lhs_sample(n, box, static_cast<std::uint64_t>(n * 31 + d)), box));
        }
}

TEST(Lhs, SinglePointInsideBox) {
    Vector lo(2), hi(2);
    lo << -1, 5;
    hi << 1, 6;
    const Matrix p = lhs_sample(1, Box(lo, hi), 0);
    ASSERT_EQ(p.rows(), 1);
    EXPECT_TRUE(Box(lo, hi).contains(p.row(0).transpose()));
}

TEST(Lhs, MarginalsCloseToUniform) {
    const Matrix p = lhs_sample(100, Box::unit(2), 7);
    for (int j = 0; j < 2; ++j) {
        std::vector<double> xs(100);
        for (int i = 0; i < 100; ++i) xs[static_cast<std::size_t>(i)] = p(i, j);
        std::sort(xs.begin(), xs.end());
        double ks = 0.0;
        for (int i = 0; i < 100; ++i) {
            const double x = xs[static_cast<std::size_t>(i)];
            ks = std::max({ks, std::abs((i + 1) / 100.0 - x), std::abs(i / 100.0 - x)});
        }
        EXPECT_LT(ks, 0.05);
    }
}

TEST(Lhs, DeterministicAndValidated) {
    EXPECT_EQ(lhs_sample(10, Box::unit(3), 5), lhs_sample(10, Box::unit(3), 5));
    EXPECT_NE(lhs_sample(10, Box::unit(3), 5), lhs_sample(10, Box::unit(3), 6));
    EXPECT_THROW(lhs_sample(0, Box::unit(3), 5), std::invalid_argument);
}

TEST(Direct, QuadraticPeak) {
    auto f = [](const Vector& v) { return -(v.array() - 0.3).square().sum(); };
    DirectOptions opts;
    opts.max_evals = 200;
    MaximizeResult r = direct_maximize(f, Box::unit(2), opts);
    EXPECT_LT((r.point.array() - 0.3).abs().maxCoeff(), 0.02);
    EXPECT_LE(r.evaluations, 200);
}

TEST(Direct, ConstantReturnsCenter) {
    Vector lo(2), hi(2);
    lo << -1, 2;
    hi << 3, 4;
    MaximizeResult r = direct_maximize([](const Vector&) { return 2.5; }, Box(lo, hi));
    EXPECT_EQ(r.value, 2.5);
    EXPECT_DOUBLE_EQ(r.point[0], 1.0);
    EXPECT_DOUBLE_EQ(r.point[1], 3.0);
}

TEST(Direct, NegatedBranin) {
    const double grid_min = oracle::branin_grid_min(400);
    EXPECT_NEAR(grid_min, 0.397887, 2e-3);
    Vector lo(2), hi(2);
    lo << -5, 0;
    hi << 10, 15;
    DirectOptions opts;
    opts.max_evals = 500;
    MaximizeResult r = direct_maximize([](const Vector& v) { return -oracle::branin(v[0], v[1]); }, Box(lo, hi), opts);
    EXPECT_NEAR(r.value, -0.397887, 0.05);
}

TEST(Direct, StaysInBoxAndValueMatchesPoint) {
    Vector lo(3), hi(3);
    lo << -2, 0, 10;
    hi << -1, 5, 11;
    Box box(lo, hi);
    bool inside = true;
    auto f = [&](const Vector& v) {
        inside = inside && box.contains(v);
        return std::sin(3 * v[0]) * std::cos(v[1]) - 0.1 * (v[2] - 10.3) * (v[2] - 10.3);
    };
    MaximizeResult r = direct_maximize(f, box, {300});
    EXPECT_TRUE(inside);
    EXPECT_EQ(r.value, f(r.point));
}

TEST(Direct, NestedBudgetsMonotone) {
    auto f = [](const Vector& v) { return std::sin(5 * v[0]) + std::cos(7 * v[1]) * v[0]; };
    double prev = -1e300;
    for (int budget : {1, 10, 50, 120, 400, 1000}) {
        DirectOptions opts;
        opts.max_evals = budget;
        const double v = direct_maximize(f, Box::unit(2), opts).value;
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(Direct, RectanglesPartitionTheBox) {
    Vector lo(3), hi(3);
    lo << 0, -1, 2;
    hi << 2, 1, 2.5;
    Box box(lo, hi);
    int rounds = 0;
    DirectOptions opts;
    opts.max_evals = 600;
    opts.observer = [&](const std::vector<DirectRect>& rects) {
        ++rounds;
        double vol = 0.0;
        for (const auto& r : rects) vol += r.unit_volume() * box.volume();
        EXPECT_NEAR(vol / box.volume(), 1.0, 1e-9);
    };
    direct_maximize([](const Vector& v) { return -v.squaredNorm(); }, box, opts);
    EXPECT_GT(rounds, 3);
}

TEST(Direct, NonFiniteCenterThrows) {
    EXPECT_THROW(direct_maximize([](const Vector&) { return std::nan(""); }, Box::unit(1)), std::invalid_argument);
    EXPECT_THROW(direct_maximize([](const Vector&) { return 0.0; }, Box::unit(1), {0}), std::invalid_argument);
}

TEST(RandomSearch, Basics) {
    auto f = [](const Vector& v) { return v[0]; };
    MaximizeResult one = random_maximize(f, Box::unit(1), 1, 4);
    EXPECT_EQ(one.value, one.point[0]);
    MaximizeResult many = random_maximize(f, Box::unit(1), 5000, 4);
    EXPECT_GT(many.point[0], 0.999);
    EXPECT_EQ(random_maximize(f, Box::unit(1), 50, 9).point, random_maximize(f, Box::unit(1), 50, 9).point);
    EXPECT_THROW(random_maximize(f, Box::unit(1), 0, 1), std::invalid_argument);
}
