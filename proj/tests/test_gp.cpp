#include "nfwbo/gp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace nfwbo;

namespace {

TrainingSet random_training(int t, Eigen::Index dx, std::mt19937_64& rng) {
    TrainingSet ts{Matrix(t, dx), Matrix(t, 2), Vector(t)};
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < t; ++i) {
        for (Eigen::Index j = 0; j < dx; ++j) ts.X(i, j) = u(rng);
        ts.Z(i, 0) = u(rng);
        ts.Z(i, 1) = u(rng);
        ts.y[i] = std::sin(4 * ts.X(i, 0)) + ts.Z(i, 1) + 0.1 * n(rng);
    }
    return ts;
}

ModelParams random_params(FidelityKernel kind, Eigen::Index dx, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ModelParams p = ModelParams::defaults(kind, dx);
    p.design.signal_variance = 0.5 + u(rng);
    for (Eigen::Index i = 0; i < dx; ++i) p.design.length_scales[i] = 0.2 + 0.6 * u(rng);
    p.fidelity_length_scales = Vector::Constant(2, 0.3) + 0.5 * Vector::Constant(2, u(rng));
    p.noise_variance = 0.01 + 0.05 * u(rng);
    p.warp = warp_init(rng(), 1.0);
    p.warp.enabled = kind == FidelityKernel::warped_arbf;
    p.finite_rank_factors = {Eigen::Matrix2d::Random(), Eigen::Matrix2d::Random()};
    return p;
}

}  // namespace

TEST(Fit, ScalarCholesky) {
    TrainingSet ts{Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 2, 0.5), Vector::Constant(1, 0.7)};
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 1);
    p.noise_variance = 0.01;
    ModelState m = fit(ts, p);
    EXPECT_NEAR(m.chol(0, 0), std::sqrt(1.01), 1e-15);
    EXPECT_EQ(m.jitter_used, 0.0);
}

TEST(Fit, ReconstructionAndResidual) {
    std::mt19937_64 rng(2);
    for (auto kind : {FidelityKernel::warped_arbf, FidelityKernel::arbf, FidelityKernel::finite_rank}) {
        TrainingSet ts = random_training(15, 3, rng);
        ModelParams p = random_params(kind, 3, rng);
        ModelState m = fit(ts, p);
        Matrix Kn = gram_matrix(ts, p);
        Kn.diagonal().array() += p.noise_variance + m.jitter_used;
        EXPECT_LT((m.chol * m.chol.transpose() - Kn).norm() / Kn.norm(), 1e-8);
        EXPECT_LT((Kn * m.alpha - ts.y).norm(), 1e-8 * ts.y.norm());
    }
}

TEST(Fit, DuplicatePointsNeedJitter) {
    TrainingSet ts{Matrix(3, 1), Matrix(3, 2), Vector(3)};
    ts.X << 0.5, 0.5, 0.5;
    ts.Z << 0.2, 0.2, 0.2, 0.2, 0.2, 0.2;
    ts.y << 1.0, 1.1, 0.9;
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 1);
    p.noise_variance = 1e-12;
    ModelState m = fit(ts, p);
    EXPECT_LE(m.jitter_used, 1e-4);
    Matrix Kn = gram_matrix(ts, p);
    Kn.diagonal().array() += p.noise_variance + m.jitter_used;
    EXPECT_LT((m.chol * m.chol.transpose() - Kn).norm() / Kn.norm(), 1e-8);

    // Slightly indefinite from rounding: the ladder has to kick in.
    Matrix almost(2, 2);
    almost << 1.0, 1.0, 1.0, 1.0 - 1e-15;
    JitteredCholesky c = cholesky_with_jitter(almost);
    EXPECT_GE(c.jitter, 1e-10);
    EXPECT_LE(c.jitter, 1e-4);
}

TEST(Fit, FailureCarriesJitterLadder) {
    TrainingSet ts{Matrix(2, 1), Matrix(2, 2), Vector(2)};
    ts.X << 0.0, 1.0;
    ts.Z << 0.5, 0.5, 0.5, 0.5;
    ts.y << 0.0, 1.0;
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    try {
        cholesky_with_jitter(bad);
        FAIL() << "expected NumericalFailure";
    } catch (const NumericalFailure& e) {
        const auto& j = e.attempted_jitters();
        ASSERT_EQ(j.size(), 8u);
        EXPECT_EQ(j.front(), 0.0);
        EXPECT_NEAR(j[1], 1e-10, 1e-25);
        EXPECT_NEAR(j.back(), 1e-4, 1e-18);
    }
}

TEST(Posterior, InterpolatesSinglePointWithoutNoise) {
    TrainingSet ts{Matrix::Constant(1, 2, 0.4), Matrix::Constant(1, 2, 0.6), Vector::Constant(1, 1.7)};
    ModelParams p = ModelParams::defaults(FidelityKernel::warped_arbf, 2);
    p.noise_variance = 1e-12;
    ModelState m = fit(ts, p);
    PosteriorGaussian g = posterior(ts.X.row(0).transpose(), ts.Z.row(0).transpose(), m);
    EXPECT_NEAR(g.mean, 1.7, 1e-5);
    EXPECT_LE(g.variance, 1e-6);
}

TEST(Posterior, RevertsToPriorFarAway) {
    std::mt19937_64 rng(3);
    TrainingSet ts = random_training(6, 2, rng);
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 2);
    p.design = ArbfParams(1.3, Vector::Constant(2, 0.05));
    ModelState m = fit(ts, p);
    Vector far(2);
    far << 50.0, -40.0;
    PosteriorGaussian g = posterior(far, Eigen::Vector2d(0.5, 0.5), m);
    EXPECT_NEAR(g.mean, 0.0, 1e-12);
    EXPECT_NEAR(g.variance, 1.3, 1e-12);
}

TEST(Posterior, MatchesDenseInverseOracle) {
    std::mt19937_64 rng(4);
    for (auto kind : {FidelityKernel::warped_arbf, FidelityKernel::arbf, FidelityKernel::finite_rank}) {
        TrainingSet ts = random_training(5, 2, rng);
        ModelParams p = random_params(kind, 2, rng);
        ModelState m = fit(ts, p);
        oracle::DenseGp dense(gram_matrix(ts, p), p.noise_variance, ts.y);
        const CovarianceEvaluator cov(p);
        for (int q = 0; q < 5; ++q) {
            TrainingSet probe = random_training(1, 2, rng);
            TrainingSet joint = ts;
            joint.X.conservativeResize(6, Eigen::NoChange);
            joint.Z.conservativeResize(6, Eigen::NoChange);
            joint.y.conservativeResize(6);
            joint.X.row(5) = probe.X.row(0);
            joint.Z.row(5) = probe.Z.row(0);
            const Matrix Kall = gram_matrix(joint, p);
            const Vector k = Kall.col(5).head(5);
            PosteriorGaussian g = posterior(probe.X.row(0).transpose(), probe.Z.row(0).transpose(), m);
            EXPECT_NEAR(g.mean, dense.mean(k), 1e-8);
            EXPECT_NEAR(g.variance, dense.variance(k, Kall(5, 5)), 1e-8);
        }
    }
}

TEST(Posterior, StandardizationRoundTrip) {
    std::mt19937_64 rng(5);
    TrainingSet ts = random_training(8, 2, rng);
    ts.y = ts.y * 40.0 + Vector::Constant(8, 100.0);
    TrainingSet scaled = ts;
    OutputScaling s = standardize(scaled);
    EXPECT_NEAR(scaled.y.mean(), 0.0, 1e-12);
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 2);
    p.noise_variance = 1e-10;
    ModelState m = fit(scaled, p, s);
    for (int i = 0; i < 8; ++i)
        EXPECT_NEAR(posterior(ts.X.row(i).transpose(), ts.Z.row(i).transpose(), m).mean, ts.y[i], 1e-3);
}

TEST(Posterior, VarianceBoundsAndMonotoneInData) {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        TrainingSet ts = random_training(10, 2, rng);
        ModelParams p = random_params(FidelityKernel::warped_arbf, 2, rng);
        ModelState m = fit(ts, p);
        TrainingSet more = ts;
        TrainingSet extra = random_training(1, 2, rng);
        more.X.conservativeResize(11, Eigen::NoChange);
        more.Z.conservativeResize(11, Eigen::NoChange);
        more.y.conservativeResize(11);
        more.X.row(10) = extra.X.row(0);
        more.Z.row(10) = extra.Z.row(0);
        more.y[10] = extra.y[0];
        ModelState m2 = fit(more, p);
        for (int q = 0; q < 10; ++q) {
            TrainingSet probe = random_training(1, 2, rng);
            const double v1 = posterior(probe.X.row(0).transpose(), probe.Z.row(0).transpose(), m).variance;
            const double v2 = posterior(probe.X.row(0).transpose(), probe.Z.row(0).transpose(), m2).variance;
            EXPECT_GE(v1, 0.0);
            EXPECT_LE(v1, p.design.signal_variance + 1e-8);
            EXPECT_LE(v2, v1 + 1e-8);
        }
    }
}

TEST(Posterior, InterpolatesWellSeparatedPoints) {
    TrainingSet ts{Matrix(4, 1), Matrix(4, 2), Vector(4)};
    ts.X << 0.0, 0.3, 0.6, 0.9;
    ts.Z << 1, 1, 1, 1, 1, 1, 1, 1;
    ts.y << 0.2, -1.0, 0.5, 2.0;
    ModelParams p = ModelParams::defaults(FidelityKernel::warped_arbf, 1);
    p.design.length_scales[0] = 0.1;
    p.noise_variance = 1e-12;
    ModelState m = fit(ts, p);
    for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(posterior(ts.X.row(i).transpose(), ts.Z.row(i).transpose(), m).mean, ts.y[i], 1e-5);
}

TEST(Nlml, ScalarExamples) {
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 1);
    p.design.signal_variance = 0.75;
    p.noise_variance = 0.25;
    TrainingSet ts{Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 2, 0.5), Vector::Zero(1)};
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(nlml(ts, p), half_log_2pi, 1e-15);
    EXPECT_NEAR(nlml(ts, p), 0.918939, 1e-6);
    ts.y[0] = 1.0;
    EXPECT_NEAR(nlml(ts, p), 0.5 + half_log_2pi, 1e-15);
    EXPECT_NEAR(nlml(ts, p), 1.418939, 1e-6);
}

TEST(Nlml, ZeroTargetsLeaveComplexityTerm) {
    std::mt19937_64 rng(7);
    TrainingSet ts = random_training(6, 2, rng);
    ModelParams p = random_params(FidelityKernel::warped_arbf, 2, rng);
    ts.y.setZero();
    Matrix Kn = gram_matrix(ts, p);
    Kn.diagonal().array() += p.noise_variance;
    const double expected = 0.5 * std::log(Kn.determinant()) + 3.0 * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(nlml(ts, p), expected, 1e-10);
}

TEST(Nlml, MatchesDenseOracle) {
    std::mt19937_64 rng(8);
    for (int t = 1; t <= 20; t += 3) {
        for (auto kind : {FidelityKernel::warped_arbf, FidelityKernel::arbf, FidelityKernel::finite_rank}) {
            TrainingSet ts = random_training(t, 3, rng);
            ModelParams p = random_params(kind, 3, rng);
            EXPECT_NEAR(nlml(ts, p), oracle::dense_nlml(gram_matrix(ts, p), p.noise_variance, ts.y), 1e-8);
        }
    }
}

TEST(NlmlGrad, WarpDisabledBlockIsZero) {
    std::mt19937_64 rng(9);
    TrainingSet ts = random_training(8, 2, rng);
    ModelParams p = random_params(FidelityKernel::warped_arbf, 2, rng);
    p.warp.enabled = false;
    NlmlResult r = nlml_grad(ts, p);
    const ParamLayout lay = layout_of(p);
    EXPECT_TRUE(r.gradient.segment(lay.warp(), lay.warp_size()).isZero(0.0));
}

TEST(NlmlGrad, ScalarNoiseDerivative) {
    ModelParams p = ModelParams::defaults(FidelityKernel::arbf, 1);
    p.design.signal_variance = 0.6;
    p.noise_variance = 0.15;
    TrainingSet ts{Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 2, 0.5), Vector::Zero(1)};
    NlmlResult r = nlml_grad(ts, p);
    EXPECT_NEAR(r.gradient[layout_of(p).noise()], 0.5 * 0.15 / 0.75, 1e-14);
}

TEST(NlmlGrad, MatchesFiniteDifferences) {
    std::mt19937_64 rng(10);
    for (int seed = 0; seed < 20; ++seed) {
        for (auto kind : {FidelityKernel::warped_arbf, FidelityKernel::arbf, FidelityKernel::finite_rank}) {
            TrainingSet ts = random_training(12, 3, rng);
            ModelParams p = random_params(kind, 3, rng);
            const Vector theta = pack(p);
            auto f = [&](const oracle::Vec& th) { return nlml(ts, unpack(th, p)); };
            NlmlResult r = nlml_grad(ts, p);
            EXPECT_NEAR(r.value, nlml(ts, p), 1e-12);
            const Vector fd = oracle::central_diff(f, theta, 1e-5);
            EXPECT_LT(oracle::max_rel_err(r.gradient, fd), 1e-4) << to_string(kind) << " seed " << seed;
        }
    }
}

TEST(PackUnpack, RoundTrip) {
    std::mt19937_64 rng(11);
    for (auto kind : {FidelityKernel::warped_arbf, FidelityKernel::arbf, FidelityKernel::finite_rank}) {
        ModelParams p = random_params(kind, 4, rng);
        for (auto& l : p.finite_rank_factors) l(0, 1) = 0.0;
        const Vector v = pack(p);
        EXPECT_EQ(v.size(), layout_of(p).size());
        EXPECT_LT((pack(unpack(v, p)) - v).cwiseAbs().maxCoeff(), 1e-14);
    }
    EXPECT_EQ(layout_of(ModelParams::defaults(FidelityKernel::warped_arbf, 3)).size(), 1 + 3 + 2 + 1 + 32);
    EXPECT_EQ(layout_of(ModelParams::defaults(FidelityKernel::finite_rank, 3)).size(), 1 + 3 + 6 + 1);
}

TEST(SampleJoint, MomentsMatchPosterior) {
    std::mt19937_64 rng(12);
    TrainingSet ts = random_training(6, 1, rng);
    ModelParams p = random_params(FidelityKernel::warped_arbf, 1, rng);
    ModelState m = fit(ts, p);
    QueryPoints q{Matrix::Constant(1, 1, 0.37), Matrix::Constant(1, 2, 0.8)};
    const int n = 100000;
    const Matrix draws = sample_joint(q, m, n, 42);
    const PosteriorGaussian g = posterior(q.X.row(0).transpose(), q.Z.row(0).transpose(), m);
    const double mean = draws.col(0).mean();
    const double var = (draws.col(0).array() - mean).square().sum() / (n - 1);
    const double se_mean = std::sqrt(g.variance / n);
    EXPECT_LT(std::abs(mean - g.mean), 3.0 * se_mean);
    // Var of the sample variance for a Gaussian is 2 sigma^4 / (n - 1).
    EXPECT_LT(std::abs(var - g.variance), 3.0 * g.variance * std::sqrt(2.0 / (n - 1)));
}

TEST(SampleJoint, Deterministic) {
    std::mt19937_64 rng(13);
    TrainingSet ts = random_training(6, 2, rng);
    ModelState m = fit(ts, random_params(FidelityKernel::arbf, 2, rng));
    QueryPoints q{Matrix::Random(4, 2).cwiseAbs(), Matrix::Random(4, 2).cwiseAbs()};
    EXPECT_EQ(sample_joint(q, m, 10, 3), sample_joint(q, m, 10, 3));
    EXPECT_NE(sample_joint(q, m, 10, 3), sample_joint(q, m, 10, 4));
    EXPECT_THROW(sample_joint(QueryPoints{Matrix(0, 2), Matrix(0, 2)}, m, 10, 3), std::invalid_argument);
}
