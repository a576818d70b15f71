#pragma once

#include "nfwbo/common.hpp"

#include <cmath>
#include <stdexcept>

namespace nfwbo {

/// Weights of the 2 -> 6 -> 2 sigmoid network that embeds fidelity vectors.
struct WarpParams {
    static constexpr int kIn = 2;
    static constexpr int kHidden = 6;
    static constexpr int kOut = 2;
    static constexpr int kNumWeights = kHidden * kIn + kHidden + kOut * kHidden + kOut;  // 32

    Eigen::Matrix<double, kHidden, kIn> w1 = Eigen::Matrix<double, kHidden, kIn>::Zero();
    Eigen::Matrix<double, kHidden, 1> b1 = Eigen::Matrix<double, kHidden, 1>::Zero();
    Eigen::Matrix<double, kOut, kHidden> w2 = Eigen::Matrix<double, kOut, kHidden>::Zero();
    Eigen::Matrix<double, kOut, 1> b2 = Eigen::Matrix<double, kOut, 1>::Zero();
    bool enabled = true;

    /// Layer order: W1 row-major, b1, W2 row-major, b2.
    Vector flat() const {
        Vector v(kNumWeights);
        int k = 0;
        for (int i = 0; i < kHidden; ++i)
            for (int j = 0; j < kIn; ++j) v[k++] = w1(i, j);
        for (int i = 0; i < kHidden; ++i) v[k++] = b1[i];
        for (int i = 0; i < kOut; ++i)
            for (int j = 0; j < kHidden; ++j) v[k++] = w2(i, j);
        for (int i = 0; i < kOut; ++i) v[k++] = b2[i];
        return v;
    }

    static WarpParams from_flat(const Eigen::Ref<const Vector>& v, bool enabled = true) {
        if (v.size() != kNumWeights)
            throw std::invalid_argument("WarpParams: expected 32 weights, got " + std::to_string(v.size()));
        if (!v.allFinite()) throw std::invalid_argument("WarpParams: non-finite weight");
        WarpParams p;
        p.enabled = enabled;
        int k = 0;
        for (int i = 0; i < kHidden; ++i)
            for (int j = 0; j < kIn; ++j) p.w1(i, j) = v[k++];
        for (int i = 0; i < kHidden; ++i) p.b1[i] = v[k++];
        for (int i = 0; i < kOut; ++i)
            for (int j = 0; j < kHidden; ++j) p.w2(i, j) = v[k++];
        for (int i = 0; i < kOut; ++i) p.b2[i] = v[k++];
        return p;
    }

    // Offsets of each block inside flat().
    static constexpr int kW1Offset = 0;
    static constexpr int kB1Offset = kHidden * kIn;
    static constexpr int kW2Offset = kB1Offset + kHidden;
    static constexpr int kB2Offset = kW2Offset + kOut * kHidden;
};

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

inline Eigen::Vector2d warp_forward(const Eigen::Ref<const Vector>& z, const WarpParams& w) {
    if (z.size() != WarpParams::kIn) throw std::invalid_argument("warp_forward: fidelity must be 2-D");
    if (!w.enabled) return Eigen::Vector2d(z[0], z[1]);
    const Eigen::Matrix<double, 6, 1> h = (w.w1 * z + w.b1).unaryExpr([](double a) { return sigmoid(a); });
    return (w.w2 * h + w.b2).unaryExpr([](double a) { return sigmoid(a); });
}

struct WarpJacobian {
    Eigen::Matrix<double, 2, WarpParams::kNumWeights> d_weights;
    Eigen::Matrix2d d_input;
};

/// Backpropagated Jacobians of the warped output with respect to the 32 weights and to z.
inline WarpJacobian warp_jacobian(const Eigen::Ref<const Vector>& z, const WarpParams& w) {
    if (z.size() != WarpParams::kIn) throw std::invalid_argument("warp_jacobian: fidelity must be 2-D");
    WarpJacobian jac;
    jac.d_weights.setZero();
    if (!w.enabled) {
        jac.d_input.setIdentity();
        return jac;
    }
    using H = Eigen::Matrix<double, 6, 1>;
    const H h = (w.w1 * z + w.b1).unaryExpr([](double a) { return sigmoid(a); });
    const Eigen::Vector2d r = (w.w2 * h + w.b2).unaryExpr([](double a) { return sigmoid(a); });
    const H dh = h.cwiseProduct(H::Ones() - h);
    const Eigen::Vector2d dr = r.cwiseProduct(Eigen::Vector2d::Ones() - r);

    for (int o = 0; o < WarpParams::kOut; ++o) {
        // d r_o / d a2_o = dr[o]; only row o of W2 and b2[o] touch output o.
        for (int j = 0; j < WarpParams::kHidden; ++j)
            jac.d_weights(o, WarpParams::kW2Offset + o * WarpParams::kHidden + j) = dr[o] * h[j];
        jac.d_weights(o, WarpParams::kB2Offset + o) = dr[o];
        // Back through the hidden layer.
        const H back = dr[o] * w.w2.row(o).transpose().cwiseProduct(dh);
        for (int i = 0; i < WarpParams::kHidden; ++i) {
            for (int j = 0; j < WarpParams::kIn; ++j)
                jac.d_weights(o, WarpParams::kW1Offset + i * WarpParams::kIn + j) = back[i] * z[j];
            jac.d_weights(o, WarpParams::kB1Offset + i) = back[i];
        }
        jac.d_input.row(o) = back.transpose() * w.w1;
    }
    return jac;
}

/// Weights i.i.d. uniform in [-scale, scale]; deterministic per seed.
/// Near-affine embedding: hidden units 0 and 1 carry tau and eps through the linear part of the
/// sigmoid, so r spans roughly [0.29, 0.71] per component; the other units are off.
inline WarpParams warp_near_affine() {
    WarpParams w;
    for (int k = 0; k < WarpParams::kOut; ++k) {
        w.w1(k, k) = 2.0;
        w.b1[k] = -1.0;
        w.w2(k, k) = 4.0;
        w.b2[k] = -2.0;
    }
    return w;
}

inline WarpParams warp_init(std::uint64_t seed, double scale = 0.5) {
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw std::invalid_argument("warp_init: scale must be >= 0");
    Rng rng(mix_seed(seed, 0x3a7f));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Vector v(WarpParams::kNumWeights);
    for (int i = 0; i < v.size(); ++i) v[i] = scale * unif(rng);
    return WarpParams::from_flat(v, true);
}

}  // namespace nfwbo
