#pragma once

#include "nfwbo/common.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nfwbo {

/// Anisotropic squared-exponential kernel parameters:
/// k(a, b) = signal_variance * exp(-0.5 * sum_i ((a_i - b_i) / l_i)^2).
struct ArbfParams {
    double signal_variance = 1.0;
    Vector length_scales;

    ArbfParams() = default;
    ArbfParams(double sv, Vector ls) : signal_variance(sv), length_scales(std::move(ls)) { validate(); }

    Eigen::Index dim() const { return length_scales.size(); }

    void validate() const {
        if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
            throw std::invalid_argument("ArbfParams: signal_variance must be positive");
        if (length_scales.size() == 0) throw std::invalid_argument("ArbfParams: empty length_scales");
        for (Eigen::Index i = 0; i < length_scales.size(); ++i)
            if (!(length_scales[i] > 0.0) || !std::isfinite(length_scales[i]))
                throw std::invalid_argument("ArbfParams: length_scales must be positive");
    }
};

namespace detail {
inline void check_dims(Eigen::Index a, Eigen::Index b, Eigen::Index p) {
    if (a != p || b != p)
        throw std::invalid_argument("kernel: input dimension " + std::to_string(a) + "/" + std::to_string(b) +
                                    " does not match parameter dimension " + std::to_string(p));
}
}  // namespace detail

inline double arbf_eval(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b, const ArbfParams& p) {
    detail::check_dims(a.size(), b.size(), p.dim());
    const double r2 = (a - b).cwiseQuotient(p.length_scales).squaredNorm();
    return p.signal_variance * std::exp(-0.5 * r2);
}

/// Gradient with respect to (log signal_variance, log l_1, ..., log l_d).
inline Vector arbf_grad_params(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                               const ArbfParams& p) {
    detail::check_dims(a.size(), b.size(), p.dim());
    const Vector scaled2 = (a - b).cwiseQuotient(p.length_scales).array().square();
    const double k = p.signal_variance * std::exp(-0.5 * scaled2.sum());
    Vector g(1 + p.dim());
    g[0] = k;
    g.tail(p.dim()) = k * scaled2;
    return g;
}

/// Gradient with respect to the first argument.
inline Vector arbf_grad_input(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                              const ArbfParams& p) {
    detail::check_dims(a.size(), b.size(), p.dim());
    const double k = arbf_eval(a, b, p);
    return -k * (a - b).cwiseQuotient(p.length_scales.cwiseAbs2());
}

/// Product kernel k_x(x, x') * k_z(r, r') over design points and (warped) fidelities.
/// The fidelity factor has unit magnitude.
struct FactorizedKernelParams {
    ArbfParams design;
    ArbfParams fidelity;

    FactorizedKernelParams() = default;
    FactorizedKernelParams(ArbfParams d, Vector fidelity_length_scales)
        : design(std::move(d)), fidelity(1.0, std::move(fidelity_length_scales)) {}

    void validate() const {
        design.validate();
        fidelity.validate();
        if (fidelity.signal_variance != 1.0)
            throw std::invalid_argument("FactorizedKernelParams: fidelity signal_variance must be exactly 1");
    }
};

inline double factorized_eval(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& r,
                              const Eigen::Ref<const Vector>& x2, const Eigen::Ref<const Vector>& r2,
                              const FactorizedKernelParams& p) {
    return arbf_eval(x, x2, p.design) * arbf_eval(r, r2, p.fidelity);
}

/// Finite-rank fidelity kernel: sum_d phi(z_d)^T W_d phi(z'_d) with phi(s) = (1, s).
struct FiniteRankParams {
    std::vector<Eigen::Matrix2d> basis_weights;

    FiniteRankParams() = default;
    explicit FiniteRankParams(std::vector<Eigen::Matrix2d> w) : basis_weights(std::move(w)) { validate(); }

    /// W_d = L_d L_d^T from lower-triangular factors; PSD by construction.
    static FiniteRankParams from_factors(const std::vector<Eigen::Matrix2d>& factors) {
        std::vector<Eigen::Matrix2d> w;
        for (const auto& l : factors) {
            Eigen::Matrix2d lower = l.triangularView<Eigen::Lower>();
            w.push_back(lower * lower.transpose());
        }
        return FiniteRankParams(std::move(w));
    }

    void validate() const {
        for (const auto& w : basis_weights) {
            if (!w.allFinite()) throw std::invalid_argument("FiniteRankParams: non-finite weights");
            if (std::abs(w(0, 1) - w(1, 0)) > 1e-12 * (1.0 + w.cwiseAbs().maxCoeff()))
                throw std::invalid_argument("FiniteRankParams: basis_weights must be symmetric");
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(w);
            if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + w.cwiseAbs().maxCoeff()))
                throw std::invalid_argument("FiniteRankParams: basis_weights must be positive semidefinite");
        }
    }
};

inline double finite_rank_eval(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& z2,
                               const FiniteRankParams& p) {
    const auto n = static_cast<Eigen::Index>(p.basis_weights.size());
    detail::check_dims(z.size(), z2.size(), n);
    double k = 0.0;
    for (Eigen::Index d = 0; d < n; ++d) {
        const Eigen::Vector2d a(1.0, z[d]);
        const Eigen::Vector2d b(1.0, z2[d]);
        k += a.dot(p.basis_weights[static_cast<std::size_t>(d)] * b);
    }
    return k;
}

}  // namespace nfwbo
