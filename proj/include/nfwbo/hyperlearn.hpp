#pragma once

#include "nfwbo/common.hpp"
#include "nfwbo/gp.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfwbo {

/// Objective returning the value and writing the gradient into its second argument.
using DifferentiableObjective = std::function<double(const Vector&, Vector&)>;

struct LbfgsConfig {
    int max_iters = 200;
    double grad_tolerance = 1e-5;
    int memory = 10;
    int max_backtracks = 40;
};

struct MinimizeResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline Vector project(const Vector& x, const Vector& lo, const Vector& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

// Gradient with components that push against an active bound removed.
inline Vector projected_gradient(const Vector& x, const Vector& g, const Vector& lo, const Vector& hi) {
    Vector pg = g;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
    return pg;
}

}  // namespace detail

/// Limited-memory BFGS with backtracking (sufficient decrease) line search and optional box projection.
/// The returned value never exceeds the value at the (projected) start.
inline MinimizeResult quasi_newton_minimize(const DifferentiableObjective& f, const Vector& start,
                                            const LbfgsConfig& cfg = {}, std::optional<Vector> lower = std::nullopt,
                                            std::optional<Vector> upper = std::nullopt) {
    const Eigen::Index n = start.size();
    const Vector lo = lower.value_or(Vector::Constant(n, -std::numeric_limits<double>::infinity()));
    const Vector hi = upper.value_or(Vector::Constant(n, std::numeric_limits<double>::infinity()));
    if (lo.size() != n || hi.size() != n) throw std::invalid_argument("quasi_newton_minimize: bounds size mismatch");

    MinimizeResult res;
    res.x = detail::project(start, lo, hi);
    Vector g(n);
    res.value = f(res.x, g);
    if (!std::isfinite(res.value) || !g.allFinite())
        throw std::invalid_argument("quasi_newton_minimize: objective not finite at the starting point");

    std::deque<std::pair<Vector, Vector>> history;  // (s, y)
    constexpr double c1 = 1e-4;

    for (res.iterations = 0; res.iterations < cfg.max_iters; ++res.iterations) {
        const Vector pg = detail::projected_gradient(res.x, g, lo, hi);
        if (pg.lpNorm<Eigen::Infinity>() < cfg.grad_tolerance) {
            res.converged = true;
            break;
        }

        bool stepped = false;
        for (int attempt = 0; attempt < 2 && !stepped; ++attempt) {
            // Two-loop recursion.
            Vector d = -pg;
            if (!history.empty()) {
                std::vector<double> alphas(history.size());
                Vector q = pg;
                for (std::size_t k = history.size(); k-- > 0;) {
                    const auto& [s, y] = history[k];
                    alphas[k] = s.dot(q) / y.dot(s);
                    q -= alphas[k] * y;
                }
                const auto& [s_last, y_last] = history.back();
                q *= s_last.dot(y_last) / y_last.squaredNorm();
                for (std::size_t k = 0; k < history.size(); ++k) {
                    const auto& [s, y] = history[k];
                    const double beta = y.dot(q) / y.dot(s);
                    q += (alphas[k] - beta) * s;
                }
                d = -q;
                for (Eigen::Index i = 0; i < n; ++i)
                    if ((res.x[i] <= lo[i] && d[i] < 0.0) || (res.x[i] >= hi[i] && d[i] > 0.0)) d[i] = 0.0;
                if (!(d.dot(pg) < 0.0)) {
                    history.clear();
                    d = -pg;
                }
            }

            double step = history.empty() ? std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>()) : 1.0;
            for (int bt = 0; bt < cfg.max_backtracks; ++bt, step *= 0.5) {
                const Vector trial = detail::project(res.x + step * d, lo, hi);
                const Vector delta = trial - res.x;
                if (delta.lpNorm<Eigen::Infinity>() == 0.0) break;
                Vector g_new(n);
                const double v = f(trial, g_new);
                if (!std::isfinite(v) || !g_new.allFinite()) continue;
                const double slope = g.dot(delta);
                if (v < res.value && v <= res.value + c1 * std::min(slope, 0.0)) {
                    const Vector y = g_new - g;
                    if (delta.dot(y) > 1e-12 * delta.norm() * y.norm()) {
                        history.emplace_back(delta, y);
                        if (static_cast<int>(history.size()) > cfg.memory) history.pop_front();
                    }
                    res.x = trial;
                    res.value = v;
                    g = g_new;
                    stepped = true;
                    break;
                }
            }
            if (!stepped) {
                if (history.empty()) break;
                history.clear();
            }
        }
        if (!stepped) break;
    }
    return res;
}

struct LearnConfig {
    int n_restarts = 3;
    int max_iters = 200;
    double grad_tolerance = 1e-5;
    double log_signal_min = -6.0, log_signal_max = 6.0;
    double log_length_min = -6.0, log_length_max = 6.0;
    double log_fidelity_length_min = -6.0, log_fidelity_length_max = 6.0;
    double log_noise_min = -12.0, log_noise_max = 2.0;
    double finite_rank_bound = 5.0;
    double warp_init_scale = 0.5;
    // Standard deviation of an isotropic Gaussian prior on warp weights centred on the near-affine
    // warp; 0 disables it.
    double warp_prior_sd = 0.5;

    void validate() const {
        if (n_restarts < 1) throw std::invalid_argument("LearnConfig: n_restarts must be >= 1");
        if (max_iters < 1) throw std::invalid_argument("LearnConfig: max_iters must be >= 1");
        if (!(grad_tolerance > 0.0)) throw std::invalid_argument("LearnConfig: grad_tolerance must be > 0");
        if (!(warp_init_scale > 0.0)) throw std::invalid_argument("LearnConfig: warp_init_scale must be > 0");
        if (!(warp_prior_sd >= 0.0)) throw std::invalid_argument("LearnConfig: warp_prior_sd must be >= 0");
        for (double b : {log_signal_min, log_signal_max, log_length_min, log_length_max, log_fidelity_length_min,
                         log_fidelity_length_max, log_noise_min, log_noise_max, finite_rank_bound})
            if (!std::isfinite(b)) throw std::invalid_argument("LearnConfig: bounds must be finite");
    }
};

struct RestartDiagnostics {
    double initial_nlml = std::numeric_limits<double>::quiet_NaN();
    double final_nlml = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
    std::string error;
};

struct LearnResult {
    ModelParams params;
    double nlml = 0.0;
    // Minimized value: nlml plus the warp prior penalty when one is active.
    double objective = 0.0;
    std::vector<RestartDiagnostics> restarts;
};

class LearnFailure : public std::runtime_error {
public:
    LearnFailure(const std::string& what, std::vector<RestartDiagnostics> diag)
        : std::runtime_error(what), diagnostics(std::move(diag)) {}
    std::vector<RestartDiagnostics> diagnostics;
};

/// Bounds over the full ParamLayout; the warp block is unbounded.
inline std::pair<Vector, Vector> param_bounds(const ParamLayout& lay, const LearnConfig& cfg) {
    const double inf = std::numeric_limits<double>::infinity();
    Vector lo = Vector::Constant(lay.size(), -inf), hi = Vector::Constant(lay.size(), inf);
    lo[lay.signal()] = cfg.log_signal_min;
    hi[lay.signal()] = cfg.log_signal_max;
    lo.segment(lay.design_scales(), lay.design_dim).setConstant(cfg.log_length_min);
    hi.segment(lay.design_scales(), lay.design_dim).setConstant(cfg.log_length_max);
    if (lay.kind == FidelityKernel::finite_rank) {
        lo.segment(lay.fidelity(), lay.fidelity_size()).setConstant(-cfg.finite_rank_bound);
        hi.segment(lay.fidelity(), lay.fidelity_size()).setConstant(cfg.finite_rank_bound);
    } else {
        lo.segment(lay.fidelity(), 2).setConstant(cfg.log_fidelity_length_min);
        hi.segment(lay.fidelity(), 2).setConstant(cfg.log_fidelity_length_max);
    }
    lo[lay.noise()] = cfg.log_noise_min;
    hi[lay.noise()] = cfg.log_noise_max;
    return {lo, hi};
}

/// Random starting point for a restart. Kernel and warp draws use separate streams, so the kernel
/// part of a start does not depend on whether the model carries a warp.
inline ModelParams random_start(const ModelParams& like, const LearnConfig& cfg, std::uint64_t seed, int restart) {
    Rng krng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(restart)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto between = [&](double a, double b) { return a + (b - a) * u(krng); };
    ModelParams p = like;
    p.design.signal_variance = std::exp(between(-1.0, 1.0));
    for (Eigen::Index i = 0; i < p.design.length_scales.size(); ++i)
        p.design.length_scales[i] = std::exp(between(std::log(0.05), 0.0));
    for (Eigen::Index i = 0; i < 2; ++i) p.fidelity_length_scales[i] = std::exp(between(std::log(0.1), 0.0));
    for (auto& l : p.finite_rank_factors) {
        l.setZero();
        l(0, 0) = between(0.2, 1.0);
        l(1, 0) = between(-1.0, 1.0);
        l(1, 1) = between(0.2, 1.0);
    }
    p.noise_variance = std::exp(between(-8.0, -3.0));
    if (like.fidelity_kind == FidelityKernel::warped_arbf) {
        const bool enabled = like.warp.enabled;
        const Vector w = warp_near_affine().flat() +
                         warp_init(mix_seed(seed, 2000 + static_cast<std::uint64_t>(restart)), cfg.warp_init_scale).flat();
        p.warp = WarpParams::from_flat(w, enabled);
    }
    return p;
}

/// Jointly fits kernel hyperparameters and warp weights by NLML minimization with random restarts.
/// Restart 0 starts from `warm_start` when given, otherwise from `like`.
inline LearnResult learn_hyperparameters(const TrainingSet& data, const ModelParams& like, const LearnConfig& cfg,
                                         std::uint64_t seed, const std::optional<ModelParams>& warm_start = {}) {
    cfg.validate();
    if (data.size() < 2) throw std::invalid_argument("learn_hyperparameters: need at least 2 evaluations");
    const ParamLayout lay = layout_of(like);
    const auto [lo_full, hi_full] = param_bounds(lay, cfg);
    // Frozen warp (bypassed) stays out of the optimization vector.
    const Eigen::Index n_active = like.uses_warp() ? lay.size() : lay.kernel_size();
    const Vector lo = lo_full.head(n_active), hi = hi_full.head(n_active);
    const bool penalized = like.uses_warp() && cfg.warp_prior_sd > 0.0;
    const Vector prior_mean = warp_near_affine().flat();

    LbfgsConfig qn;
    qn.max_iters = cfg.max_iters;
    qn.grad_tolerance = cfg.grad_tolerance;

    LearnResult best;
    best.objective = std::numeric_limits<double>::infinity();
    bool have = false;
    for (int r = 0; r < cfg.n_restarts; ++r) {
        ModelParams init = r == 0 ? warm_start.value_or(like) : random_start(like, cfg, seed, r);
        init.fidelity_kind = like.fidelity_kind;
        init.warp.enabled = like.warp.enabled;
        const Vector full0 = pack(init);
        const Vector frozen_tail = full0.tail(lay.size() - n_active);

        auto expand = [&](const Vector& active) {
            Vector full(lay.size());
            full << active, frozen_tail;
            return unpack(full, init);
        };
        auto objective = [&](const Vector& active, Vector& grad) {
            try {
                NlmlResult nr = nlml_grad(data, expand(active));
                grad = nr.gradient.head(n_active);
                if (penalized) {
                    const Vector dw = active.tail(WarpParams::kNumWeights) - prior_mean;
                    const double prec = 1.0 / (cfg.warp_prior_sd * cfg.warp_prior_sd);
                    grad.tail(WarpParams::kNumWeights) += prec * dw;
                    return nr.value + 0.5 * prec * dw.squaredNorm();
                }
                return nr.value;
            } catch (const std::exception&) {
                grad = Vector::Zero(active.size());
                return std::numeric_limits<double>::quiet_NaN();
            }
        };

        RestartDiagnostics diag;
        try {
            const Vector start = detail::project(full0.head(n_active), lo, hi);
            Vector g0(n_active);
            diag.initial_nlml = objective(start, g0);
            MinimizeResult mr = quasi_newton_minimize(objective, start, qn, lo, hi);
            diag.final_nlml = mr.value;
            diag.iterations = mr.iterations;
            diag.converged = mr.converged;
            if (!have || mr.value < best.objective) {
                best.params = expand(mr.x);
                best.objective = mr.value;
                have = true;
            }
        } catch (const std::exception& e) {
            diag.error = e.what();
        }
        best.restarts.push_back(diag);
    }
    if (!have) {
        std::ostringstream os;
        os << "learn_hyperparameters: all " << cfg.n_restarts << " restarts failed";
        for (std::size_t i = 0; i < best.restarts.size(); ++i) os << "; restart " << i << ": " << best.restarts[i].error;
        throw LearnFailure(os.str(), best.restarts);
    }
    best.nlml = penalized ? nlml(data, best.params) : best.objective;
    return best;
}

}  // namespace nfwbo
