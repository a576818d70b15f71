// Brute-force entropy-search reference for a tiny 1-D warped model.
#pragma once

#include "nfwbo/acquisition.hpp"
#include "oracles.hpp"

namespace oracle {

using nfwbo::Matrix;
using nfwbo::ModelParams;
using nfwbo::TrainingSet;


struct ToyProblem {
    TrainingSet ts;
    ModelParams p;
    Matrix reps;
    nfwbo::Vector x;
    Eigen::Vector2d z;
};

inline ToyProblem toy() {
    ToyProblem t;
    t.ts = TrainingSet{Matrix(4, 1), Matrix(4, 2), nfwbo::Vector(4)};
    t.ts.X << 0.1, 0.35, 0.6, 0.85;
    t.ts.Z << 1.0, 1.0, 0.4, 0.2, 0.7, 0.9, 1.0, 1.0;
    t.ts.y << 0.2, 0.8, 0.5, 0.1;
    t.p = ModelParams::defaults(nfwbo::FidelityKernel::warped_arbf, 1);
    t.p.design = nfwbo::ArbfParams(1.0, nfwbo::Vector::Constant(1, 0.25));
    t.p.fidelity_length_scales = nfwbo::Vector::Constant(2, 0.4);
    t.p.warp = nfwbo::warp_init(3, 1.0);
    t.p.noise_variance = 0.01;
    t.reps = Matrix(3, 1);
    t.reps << 0.3, 0.5, 0.7;
    t.x = nfwbo::Vector::Constant(1, 0.45);
    t.z = Eigen::Vector2d(0.6, 0.5);
    return t;
}

// Full covariance over arbitrary (x, z) rows with explicit formulas.
inline Mat oracle_cov(const Mat& X, const Mat& Z, const ModelParams& p) {
    const nfwbo::Vector w = p.warp.flat();
    Mat K(X.rows(), X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.rows(); ++j) {
            const Eigen::Vector2d ri = mlp_forward(w, Z.row(i).transpose());
            const Eigen::Vector2d rj = mlp_forward(w, Z.row(j).transpose());
            K(i, j) = se(X.row(i).transpose(), X.row(j).transpose(), p.design.signal_variance,
                                 p.design.length_scales) *
                      se(ri, rj, 1.0, p.fidelity_length_scales);
        }
    return K;
}

// Exact maximizer entropy over the representers given training data, by quadrature.
inline double oracle_entropy(const Mat& X, const Mat& Z, const Vec& y, const Matrix& reps,
                           const ModelParams& p) {
    const Eigen::Index t = X.rows();
    Mat AX(t + 3, 1), AZ(t + 3, 2);
    AX << X, reps;
    AZ << Z, Mat::Constant(3, 2, 1.0);
    const Mat K = oracle_cov(AX, AZ, p);
    DenseGp gp(K.topLeftCorner(t, t), p.noise_variance, y);
    Eigen::Vector3d mu;
    Eigen::Matrix3d S;
    for (int i = 0; i < 3; ++i) {
        mu[i] = gp.mean(K.col(t + i).head(t));
        for (int j = 0; j < 3; ++j)
            S(i, j) = K(t + i, t + j) - K.col(t + i).head(t).dot(gp.Kinv * K.col(t + j).head(t));
    }
    return entropy(argmax_probs3(mu, S));
}

inline double toy_entropy_before(const ToyProblem& t) { return oracle_entropy(t.ts.X, t.ts.Z, t.ts.y, t.reps, t.p); }

/// H(before) - E_y[H(after)], with the expectation by 64-node Gauss-Hermite over the predictive.
inline double toy_quadrature_gain(const ToyProblem& t) {
    const double h0 = oracle_entropy(t.ts.X, t.ts.Z, t.ts.y, t.reps, t.p);
    Mat AX(5, 1), AZ(5, 2);
    AX << t.ts.X, t.x.transpose();
    AZ << t.ts.Z, t.z.transpose();
    const Mat K = oracle_cov(AX, AZ, t.p);
    DenseGp gp(K.topLeftCorner(4, 4), t.p.noise_variance, t.ts.y);
    const double mu = gp.mean(K.col(4).head(4));
    const double sd = std::sqrt(gp.variance(K.col(4).head(4), K(4, 4)) + t.p.noise_variance);
    const auto [nodes, weights] = gauss_hermite(64);
    double expected_after = 0.0;
    for (int k = 0; k < 64; ++k) {
        Vec y(5);
        y << t.ts.y, mu + std::sqrt(2.0) * sd * nodes[k];
        expected_after += weights[k] * oracle_entropy(AX, AZ, y, t.reps, t.p);
    }
    expected_after /= std::sqrt(std::numbers::pi);
    return h0 - expected_after;
}

}  // namespace oracle
