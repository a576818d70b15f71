#pragma once

#include "nfwbo/common.hpp"
#include "nfwbo/dataset.hpp"
#include "nfwbo/kernels.hpp"
#include "nfwbo/warp.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfwbo {

/// Which covariance acts on the fidelity coordinates.
enum class FidelityKernel {
    warped_arbf,  // ARBF on warp_forward(z)
    arbf,         // ARBF on raw z
    finite_rank,  // linear-basis finite-rank kernel on raw z
};

inline const char* to_string(FidelityKernel k) {
    switch (k) {
        case FidelityKernel::warped_arbf: return "warped_arbf";
        case FidelityKernel::arbf: return "arbf";
        case FidelityKernel::finite_rank: return "finite_rank";
    }
    return "?";
}

struct ModelParams {
    FidelityKernel fidelity_kind = FidelityKernel::warped_arbf;
    ArbfParams design;
    Vector fidelity_length_scales = Vector::Ones(2);
    std::vector<Eigen::Matrix2d> finite_rank_factors;
    WarpParams warp;
    double noise_variance = 1e-2;

    static ModelParams defaults(FidelityKernel kind, Eigen::Index design_dim) {
        ModelParams p;
        p.fidelity_kind = kind;
        p.design = ArbfParams(1.0, Vector::Constant(design_dim, 0.3));
        p.fidelity_length_scales = Vector::Constant(2, 0.5);
        p.finite_rank_factors.assign(2, Eigen::Matrix2d::Identity() * std::sqrt(0.5));
        p.warp = warp_near_affine();
        p.warp.enabled = kind == FidelityKernel::warped_arbf;
        p.noise_variance = 1e-2;
        return p;
    }

    Eigen::Index design_dim() const { return design.dim(); }

    bool uses_warp() const { return fidelity_kind == FidelityKernel::warped_arbf && warp.enabled; }

    ArbfParams fidelity_arbf() const { return ArbfParams(1.0, fidelity_length_scales); }

    FiniteRankParams finite_rank() const { return FiniteRankParams::from_factors(finite_rank_factors); }

    FactorizedKernelParams factorized() const { return FactorizedKernelParams(design, fidelity_length_scales); }

    void validate() const {
        design.validate();
        if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
            throw std::invalid_argument("ModelParams: noise_variance must be positive");
        if (fidelity_kind == FidelityKernel::finite_rank) {
            if (finite_rank_factors.size() != 2) throw std::invalid_argument("ModelParams: need 2 finite-rank factors");
        } else {
            fidelity_arbf().validate();
        }
    }
};

/// Positions of each parameter block inside the flat parameter vector.
///
/// Layout: [log signal_variance, log design length scales, fidelity block, log noise, warp weights].
/// The fidelity block holds log length scales (2) for ARBF kinds or the lower-triangular
/// entries (l00, l10, l11) of each finite-rank factor (6). Warp weights appear only for warped_arbf.
struct ParamLayout {
    FidelityKernel kind;
    Eigen::Index design_dim;

    Eigen::Index signal() const { return 0; }
    Eigen::Index design_scales() const { return 1; }
    Eigen::Index fidelity() const { return 1 + design_dim; }
    Eigen::Index fidelity_size() const { return kind == FidelityKernel::finite_rank ? 6 : 2; }
    Eigen::Index noise() const { return fidelity() + fidelity_size(); }
    Eigen::Index warp() const { return noise() + 1; }
    Eigen::Index warp_size() const { return kind == FidelityKernel::warped_arbf ? WarpParams::kNumWeights : 0; }
    Eigen::Index size() const { return warp() + warp_size(); }
    /// Count of kernel/noise entries that live in log space (or are box-bounded).
    Eigen::Index kernel_size() const { return warp(); }
};

inline ParamLayout layout_of(const ModelParams& p) { return {p.fidelity_kind, p.design_dim()}; }

inline Vector pack(const ModelParams& p) {
    const ParamLayout lay = layout_of(p);
    Vector v(lay.size());
    v[lay.signal()] = std::log(p.design.signal_variance);
    v.segment(lay.design_scales(), lay.design_dim) = p.design.length_scales.array().log();
    if (p.fidelity_kind == FidelityKernel::finite_rank) {
        for (int d = 0; d < 2; ++d) {
            const auto& l = p.finite_rank_factors[static_cast<std::size_t>(d)];
            v[lay.fidelity() + 3 * d + 0] = l(0, 0);
            v[lay.fidelity() + 3 * d + 1] = l(1, 0);
            v[lay.fidelity() + 3 * d + 2] = l(1, 1);
        }
    } else {
        v.segment(lay.fidelity(), 2) = p.fidelity_length_scales.array().log();
    }
    v[lay.noise()] = std::log(p.noise_variance);
    if (lay.warp_size() > 0) v.segment(lay.warp(), lay.warp_size()) = p.warp.flat();
    return v;
}

/// Inverse of pack; `like` supplies the kind and the warp enabled flag.
inline ModelParams unpack(const Eigen::Ref<const Vector>& v, const ModelParams& like) {
    const ParamLayout lay = layout_of(like);
    if (v.size() != lay.size()) throw std::invalid_argument("unpack: parameter vector has wrong size");
    ModelParams p = like;
    p.design = ArbfParams(std::exp(v[lay.signal()]), v.segment(lay.design_scales(), lay.design_dim).array().exp());
    if (p.fidelity_kind == FidelityKernel::finite_rank) {
        for (int d = 0; d < 2; ++d) {
            Eigen::Matrix2d l = Eigen::Matrix2d::Zero();
            l(0, 0) = v[lay.fidelity() + 3 * d + 0];
            l(1, 0) = v[lay.fidelity() + 3 * d + 1];
            l(1, 1) = v[lay.fidelity() + 3 * d + 2];
            p.finite_rank_factors[static_cast<std::size_t>(d)] = l;
        }
    } else {
        p.fidelity_length_scales = v.segment(lay.fidelity(), 2).array().exp();
    }
    p.noise_variance = std::exp(v[lay.noise()]);
    if (lay.warp_size() > 0) p.warp = WarpParams::from_flat(v.segment(lay.warp(), lay.warp_size()), like.warp.enabled);
    return p;
}

/// Fidelity features fed to the fidelity kernel: warped z for warped_arbf, raw z otherwise.
inline Matrix fidelity_features(const Matrix& Z, const ModelParams& p) {
    if (p.fidelity_kind != FidelityKernel::warped_arbf) return Z;
    Matrix R(Z.rows(), 2);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) R.row(i) = warp_forward(Z.row(i).transpose(), p.warp).transpose();
    return R;
}

/// Evaluates k([x, r], [x', r']) for a fixed parameter set, with fidelity features precomputed.
class CovarianceEvaluator {
public:
    explicit CovarianceEvaluator(const ModelParams& p)
        : kind_(p.fidelity_kind),
          inv_design_(p.design.length_scales.cwiseInverse()),
          signal_(p.design.signal_variance),
          inv_fid_(p.fidelity_length_scales.cwiseInverse()) {
        if (kind_ == FidelityKernel::finite_rank) fr_ = p.finite_rank();
    }

    double design(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) const {
        return signal_ * std::exp(-0.5 * (a - b).cwiseProduct(inv_design_).squaredNorm());
    }

    double fidelity(const Eigen::Ref<const Vector>& r, const Eigen::Ref<const Vector>& r2) const {
        if (kind_ == FidelityKernel::finite_rank) return finite_rank_eval(r, r2, fr_);
        return std::exp(-0.5 * (r - r2).cwiseProduct(inv_fid_).squaredNorm());
    }

    double operator()(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& r,
                      const Eigen::Ref<const Vector>& x2, const Eigen::Ref<const Vector>& r2) const {
        return design(x, x2) * fidelity(r, r2);
    }

    /// Cross-covariance between rows of (XA, RA) and rows of (XB, RB).
    Matrix cross(const Matrix& XA, const Matrix& RA, const Matrix& XB, const Matrix& RB) const {
        Matrix K(XA.rows(), XB.rows());
        for (Eigen::Index j = 0; j < XB.rows(); ++j)
            for (Eigen::Index i = 0; i < XA.rows(); ++i)
                K(i, j) = (*this)(XA.row(i).transpose(), RA.row(i).transpose(), XB.row(j).transpose(),
                                  RB.row(j).transpose());
        return K;
    }

    Matrix gram(const Matrix& X, const Matrix& R) const {
        const Eigen::Index t = X.rows();
        Matrix K(t, t);
        for (Eigen::Index j = 0; j < t; ++j) {
            K(j, j) = (*this)(X.row(j).transpose(), R.row(j).transpose(), X.row(j).transpose(), R.row(j).transpose());
            for (Eigen::Index i = j + 1; i < t; ++i) {
                K(i, j) = (*this)(X.row(i).transpose(), R.row(i).transpose(), X.row(j).transpose(),
                                  R.row(j).transpose());
                K(j, i) = K(i, j);
            }
        }
        return K;
    }

private:
    FidelityKernel kind_;
    Vector inv_design_;
    double signal_;
    Vector inv_fid_;
    FiniteRankParams fr_;
};

inline Matrix gram_matrix(const TrainingSet& data, const ModelParams& params) {
    if (data.size() == 0) throw std::invalid_argument("gram_matrix: empty dataset");
    return CovarianceEvaluator(params).gram(data.X, fidelity_features(data.Z, params));
}

inline Matrix gram_matrix(const Dataset& data, const ModelParams& params) {
    return gram_matrix(to_training_set(data), params);
}

struct JitteredCholesky {
    Matrix lower;
    double jitter = 0.0;
};

/// Cholesky of A (+ jitter I), escalating jitter 1e-10, 1e-9, ..., 1e-4 (times `scale`) on failure.
inline JitteredCholesky cholesky_with_jitter(const Matrix& A, double scale = 1.0) {
    std::vector<double> tried;
    double jitter = 0.0;
    while (true) {
        tried.push_back(jitter);
        Matrix M = A;
        M.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(M);
        if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().allFinite()) {
            Matrix L = llt.matrixL();
            if ((L.diagonal().array() > 0.0).all()) return {std::move(L), jitter};
        }
        if (jitter == 0.0)
            jitter = 1e-10 * scale;
        else if (jitter < 1e-4 * scale * (1.0 - 1e-9))
            jitter *= 10.0;
        else
            break;
    }
    std::ostringstream os;
    os << "Cholesky factorization failed; attempted jitters:";
    for (double j : tried) os << ' ' << j;
    throw NumericalFailure(os.str(), tried);
}

/// Fitted GP: factorization of K + noise I and the solved weights.
struct ModelState {
    TrainingSet data;  // targets already scaled
    ModelParams params;
    OutputScaling scaling;
    Matrix features;  // fidelity features of the training rows
    Matrix chol;      // lower Cholesky factor of K + (noise + jitter) I
    Vector alpha;     // (K + noise I + jitter I)^-1 y
    double jitter_used = 0.0;

    Eigen::Index size() const { return data.size(); }
};

inline ModelState fit(TrainingSet data, const ModelParams& params, OutputScaling scaling = {}) {
    if (data.size() < 1) throw std::invalid_argument("fit: dataset must contain at least one evaluation");
    if (data.X.cols() != params.design_dim()) throw std::invalid_argument("fit: design dimension mismatch");
    params.validate();
    ModelState m;
    m.params = params;
    m.scaling = scaling;
    m.features = fidelity_features(data.Z, params);
    Matrix K = CovarianceEvaluator(params).gram(data.X, m.features);
    K.diagonal().array() += params.noise_variance;
    auto ch = cholesky_with_jitter(K);
    m.chol = std::move(ch.lower);
    m.jitter_used = ch.jitter;
    m.alpha = m.chol.triangularView<Eigen::Lower>().solve(data.y);
    m.chol.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha);
    m.data = std::move(data);
    return m;
}

/// Fit on a dataset with standardized targets.
inline ModelState fit(const Dataset& data, const ModelParams& params) {
    TrainingSet ts = to_training_set(data);
    OutputScaling s = standardize(ts);
    return fit(std::move(ts), params, s);
}

struct PosteriorGaussian {
    double mean = 0.0;
    double variance = 0.0;
};

struct PosteriorJoint {
    Vector mean;
    Matrix cov;
};

/// Rows of (X, Z) as query points.
struct QueryPoints {
    Matrix X;
    Matrix Z;

    Eigen::Index size() const { return X.rows(); }
};

inline QueryPoints single_query(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) {
    return {x.transpose(), z.transpose()};
}

/// Joint posterior of the latent function at the query points, in original output units.
inline PosteriorJoint posterior_joint(const QueryPoints& q, const ModelState& m) {
    const CovarianceEvaluator cov(m.params);
    const Matrix Rq = fidelity_features(q.Z, m.params);
    const Matrix Kqx = cov.cross(q.X, Rq, m.data.X, m.features);
    const Matrix V = m.chol.triangularView<Eigen::Lower>().solve(Kqx.transpose());
    PosteriorJoint out;
    out.mean = (Kqx * m.alpha).array() * m.scaling.scale + m.scaling.offset;
    out.cov = (cov.gram(q.X, Rq) - V.transpose() * V) * (m.scaling.scale * m.scaling.scale);
    return out;
}

inline PosteriorGaussian posterior(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z,
                                   const ModelState& m) {
    const CovarianceEvaluator cov(m.params);
    const Vector r = m.params.fidelity_kind == FidelityKernel::warped_arbf ? Vector(warp_forward(z, m.params.warp))
                                                                            : Vector(z);
    Vector k(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i)
        k[i] = cov(x, r, m.data.X.row(i).transpose(), m.features.row(i).transpose());
    const Vector v = m.chol.triangularView<Eigen::Lower>().solve(k);
    const double s2 = m.scaling.scale * m.scaling.scale;
    PosteriorGaussian out;
    out.mean = k.dot(m.alpha) * m.scaling.scale + m.scaling.offset;
    out.variance = std::max(0.0, cov(x, r, x, r) - v.squaredNorm()) * s2;
    return out;
}

/// Observation noise variance in original output units.
inline double noise_variance_scaled(const ModelState& m) {
    return m.params.noise_variance * m.scaling.scale * m.scaling.scale;
}

struct NlmlResult {
    double value = 0.0;
    Vector gradient;  // in ParamLayout order
};

namespace detail {

struct Factorized {
    Matrix Kx, Kz, K, R, L;
    Vector alpha;
};

inline Factorized factorize(const TrainingSet& data, const ModelParams& params) {
    params.validate();
    if (data.size() < 1) throw std::invalid_argument("nlml: dataset must be non-empty");
    if (data.X.cols() != params.design_dim()) throw std::invalid_argument("nlml: design dimension mismatch");
    Factorized f;
    const CovarianceEvaluator cov(params);
    const Eigen::Index t = data.size();
    f.R = fidelity_features(data.Z, params);
    f.Kx.resize(t, t);
    f.Kz.resize(t, t);
    for (Eigen::Index j = 0; j < t; ++j) {
        for (Eigen::Index i = j; i < t; ++i) {
            f.Kx(i, j) = f.Kx(j, i) = cov.design(data.X.row(i).transpose(), data.X.row(j).transpose());
            f.Kz(i, j) = f.Kz(j, i) = cov.fidelity(f.R.row(i).transpose(), f.R.row(j).transpose());
        }
    }
    f.K = f.Kx.cwiseProduct(f.Kz);
    Matrix Kn = f.K;
    Kn.diagonal().array() += params.noise_variance;
    f.L = cholesky_with_jitter(Kn).lower;
    f.alpha = f.L.triangularView<Eigen::Lower>().solve(data.y);
    f.L.triangularView<Eigen::Lower>().transpose().solveInPlace(f.alpha);
    return f;
}

inline double nlml_value(const TrainingSet& data, const Factorized& f) {
    const double t = static_cast<double>(data.size());
    return 0.5 * data.y.dot(f.alpha) + f.L.diagonal().array().log().sum() + 0.5 * t * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

/// Negative log marginal likelihood of the (already scaled) targets, including the (T/2) log 2 pi constant.
inline double nlml(const TrainingSet& data, const ModelParams& params) {
    return detail::nlml_value(data, detail::factorize(data, params));
}

/// NLML and its analytic gradient over the full ParamLayout (warp block is zero when the warp is bypassed).
inline NlmlResult nlml_grad(const TrainingSet& data, const ModelParams& params) {
    const detail::Factorized f = detail::factorize(data, params);
    const ParamLayout lay = layout_of(params);
    const Eigen::Index t = data.size();
    NlmlResult out;
    out.value = detail::nlml_value(data, f);
    out.gradient = Vector::Zero(lay.size());

    // A = Kn^-1 - alpha alpha^T; dNLML/dtheta = 0.5 * sum(A .* dK/dtheta).
    Matrix A = Matrix::Identity(t, t);
    f.L.triangularView<Eigen::Lower>().solveInPlace(A);
    f.L.triangularView<Eigen::Lower>().transpose().solveInPlace(A);
    A.noalias() -= f.alpha * f.alpha.transpose();

    const Matrix AK = A.cwiseProduct(f.K);
    out.gradient[lay.signal()] = 0.5 * AK.sum();

    const Vector inv_l2 = params.design.length_scales.cwiseAbs2().cwiseInverse();
    for (Eigen::Index d = 0; d < lay.design_dim; ++d) {
        double g = 0.0;
        for (Eigen::Index j = 0; j < t; ++j)
            for (Eigen::Index i = j + 1; i < t; ++i) {
                const double diff = data.X(i, d) - data.X(j, d);
                g += AK(i, j) * diff * diff;
            }
        out.gradient[lay.design_scales() + d] = g * inv_l2[d];  // 0.5 * 2 (symmetric pairs)
    }

    if (params.fidelity_kind == FidelityKernel::finite_rank) {
        // dKz_ij/dL_ab = b_i[a] (L^T b_j)[b] + b_j[a] (L^T b_i)[b]  =>  grad = (Phi^T B Phi L)_ab with B = A.*Kx.
        const Matrix B = A.cwiseProduct(f.Kx);
        for (int d = 0; d < 2; ++d) {
            Matrix phi(t, 2);
            phi.col(0).setOnes();
            phi.col(1) = data.Z.col(d);
            Eigen::Matrix2d l = params.finite_rank_factors[static_cast<std::size_t>(d)].triangularView<Eigen::Lower>();
            const Eigen::Matrix2d g = phi.transpose() * B * phi * l;
            out.gradient[lay.fidelity() + 3 * d + 0] = g(0, 0);
            out.gradient[lay.fidelity() + 3 * d + 1] = g(1, 0);
            out.gradient[lay.fidelity() + 3 * d + 2] = g(1, 1);
        }
    } else {
        const Vector inv_lz2 = params.fidelity_length_scales.cwiseAbs2().cwiseInverse();
        for (Eigen::Index d = 0; d < 2; ++d) {
            double g = 0.0;
            for (Eigen::Index j = 0; j < t; ++j)
                for (Eigen::Index i = j + 1; i < t; ++i) {
                    const double diff = f.R(i, d) - f.R(j, d);
                    g += AK(i, j) * diff * diff;
                }
            out.gradient[lay.fidelity() + d] = g * inv_lz2[d];
        }
        if (params.uses_warp()) {
            // dNLML/dr_i = sum_j A_ij dK_ij/dr_i, then chain through the warp Jacobian.
            Vector gw = Vector::Zero(WarpParams::kNumWeights);
            for (Eigen::Index i = 0; i < t; ++i) {
                Eigen::Vector2d gr = Eigen::Vector2d::Zero();
                for (Eigen::Index j = 0; j < t; ++j) {
                    if (i == j) continue;
                    gr -= AK(i, j) * (f.R.row(i) - f.R.row(j)).transpose().cwiseProduct(inv_lz2);
                }
                const WarpJacobian jac = warp_jacobian(data.Z.row(i).transpose(), params.warp);
                gw.noalias() += jac.d_weights.transpose() * gr;
            }
            out.gradient.segment(lay.warp(), lay.warp_size()) = gw;
        }
    }
    out.gradient[lay.noise()] = 0.5 * params.noise_variance * A.trace();
    return out;
}

/// Exact joint posterior draws (rows = samples, cols = query points), deterministic per seed.
inline Matrix sample_joint(const QueryPoints& q, const ModelState& m, int n_samples, std::uint64_t seed) {
    if (q.size() < 1) throw std::invalid_argument("sample_joint: need at least one query point");
    if (n_samples < 1) throw std::invalid_argument("sample_joint: n_samples must be >= 1");
    const PosteriorJoint post = posterior_joint(q, m);
    const double scale = std::max(1e-300, post.cov.diagonal().cwiseAbs().mean());
    const Matrix L = cholesky_with_jitter(post.cov, scale).lower;
    Rng rng(mix_seed(seed, 0x5a3b1e));
    const Matrix eps = standard_normal(q.size(), n_samples, rng);
    Matrix draws = (L * eps).transpose();
    draws.rowwise() += post.mean.transpose();
    return draws;
}

}  // namespace nfwbo
