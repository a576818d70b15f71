#pragma once

#include "nfwbo/box.hpp"
#include "nfwbo/common.hpp"
#include "nfwbo/cost.hpp"
#include "nfwbo/global_opt.hpp"
#include "nfwbo/gp.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace nfwbo {

enum class RepresenterStrategy { lhs, posterior_weighted };

struct AcqConfig {
    int n_representers = 20;
    int n_mc = 128;
    int n_fantasies = 10;
    RepresenterStrategy representer_strategy = RepresenterStrategy::posterior_weighted;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_representers < 1 || n_mc < 1 || n_fantasies < 0)
            throw std::invalid_argument("AcqConfig: n_representers and n_mc must be >= 1, n_fantasies >= 0");
    }
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_quantile(double p) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p); }

/// Candidate locations of the target-fidelity maximizer (rows), deterministic per cfg.seed.
inline Matrix sample_representers(const ModelState& m, const FidelityVector& target, const Box& design_box,
                                  const AcqConfig& cfg) {
    cfg.validate();
    if (cfg.representer_strategy == RepresenterStrategy::lhs)
        return lhs_sample(cfg.n_representers, design_box, mix_seed(cfg.seed, 0x4e9));
    const int n_cand = 10 * cfg.n_representers;
    const Matrix cand = lhs_sample(n_cand, design_box, mix_seed(cfg.seed, 0x4ea));
    const QueryPoints q{cand, target.transpose().replicate(n_cand, 1)};
    const PosteriorJoint post = posterior_joint(q, m);
    std::vector<double> score(static_cast<std::size_t>(n_cand));
    for (int i = 0; i < n_cand; ++i)
        score[static_cast<std::size_t>(i)] = post.mean[i] + std::sqrt(std::max(0.0, post.cov(i, i)));
    std::vector<int> order(static_cast<std::size_t>(n_cand));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
    });
    Matrix reps(cfg.n_representers, design_box.dim());
    for (int i = 0; i < cfg.n_representers; ++i) reps.row(i) = cand.row(order[static_cast<std::size_t>(i)]);
    return reps;
}

/// Shannon entropy (nats) of the empirical argmax distribution; samples are columns of `f` (rows = representers).
inline double argmax_entropy(const Matrix& f) {
    std::vector<int> counts(static_cast<std::size_t>(f.rows()), 0);
    for (Eigen::Index s = 0; s < f.cols(); ++s) {
        Eigen::Index arg;
        f.col(s).maxCoeff(&arg);
        ++counts[static_cast<std::size_t>(arg)];
    }
    double h = 0.0;
    const double n = static_cast<double>(f.cols());
    for (int c : counts)
        if (c > 0) h -= (c / n) * std::log(c / n);
    return h;
}

/// Entropy of the posterior distribution of the maximizer over the representers at the target fidelity.
inline double pmin_entropy(const ModelState& m, const Matrix& representers, const FidelityVector& target, int n_mc,
                           std::uint64_t seed) {
    if (representers.rows() < 2) throw std::invalid_argument("pmin_entropy: need at least 2 representers");
    const QueryPoints q{representers, target.transpose().replicate(representers.rows(), 1)};
    return argmax_entropy(sample_joint(q, m, n_mc, seed).transpose());
}

/// Posterior over a set of points after conditioning on one noisy observation y at another point.
/// `cross` is the posterior covariance between the set and the observed point, `var` the latent
/// variance there, `mean` its latent mean.
inline PosteriorJoint condition_on_observation(const PosteriorJoint& prior, const Vector& cross, double mean,
                                               double var, double noise, double y) {
    const double denom = var + noise;
    PosteriorJoint out;
    out.mean = prior.mean + cross * ((y - mean) / denom);
    out.cov = prior.cov - cross * cross.transpose() / denom;
    return out;
}

/// Entropy search over a fixed representer set. Monte Carlo draws are shared by all candidates,
/// so the acquisition surface is a deterministic function of (model, seed).
class EntropySearch {
public:
    EntropySearch(const ModelState& m, Matrix representers, const FidelityVector& target, const AcqConfig& cfg)
        : model_(m), target_(target), cfg_(cfg) {
        cfg.validate();
        if (representers.rows() < 2) throw std::invalid_argument("EntropySearch: need at least 2 representers");
        // Canonical lexicographic order, so results do not depend on how representers were listed.
        std::vector<Eigen::Index> order(static_cast<std::size_t>(representers.rows()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            for (Eigen::Index j = 0; j < representers.cols(); ++j) {
                if (representers(a, j) < representers(b, j)) return true;
                if (representers(a, j) > representers(b, j)) return false;
            }
            return false;
        });
        reps_.resize(representers.rows(), representers.cols());
        for (std::size_t i = 0; i < order.size(); ++i) reps_.row(static_cast<Eigen::Index>(i)) = representers.row(order[i]);

        const Eigen::Index n = reps_.rows();
        cov_ = std::make_unique<CovarianceEvaluator>(m.params);
        rep_features_ = fidelity_features(target.transpose().replicate(n, 1), m.params);
        target_feature_ = rep_features_.row(0).transpose();
        const Matrix k_xr = cov_->cross(m.data.X, m.features, reps_, rep_features_);
        v_r_ = m.chol.triangularView<Eigen::Lower>().solve(k_xr);
        mean_r_ = k_xr.transpose() * m.alpha;
        cov_r_ = cov_->gram(reps_, rep_features_) - v_r_.transpose() * v_r_;
        const double scale = std::max(1e-300, cov_r_.diagonal().cwiseAbs().mean());
        chol_r_ = cholesky_with_jitter(cov_r_, scale).lower;

        Rng rng(mix_seed(cfg.seed, 0xe5));
        const Matrix eps = standard_normal(n, cfg.n_mc, rng);
        extra_ = standard_normal(1, cfg.n_mc, rng).row(0).transpose();
        noise_ = standard_normal(1, cfg.n_mc, rng).row(0).transpose();
        base_ = chol_r_ * eps;
        base_.colwise() += mean_r_;
        eps_ = eps;
        // Stratified draws from the standard normal for the fantasy outcomes.
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        quantiles_.resize(cfg.n_fantasies);
        for (int j = 0; j < cfg.n_fantasies; ++j) {
            double u = (j + unif(rng)) / cfg.n_fantasies;
            u = std::clamp(u, 1e-12, 1.0 - 1e-12);
            quantiles_[j] = normal_quantile(u);
        }
        baseline_ = argmax_entropy(base_);
    }

    const Matrix& representers() const { return reps_; }
    double baseline_entropy() const { return baseline_; }
    const Vector& representer_mean() const { return mean_r_; }
    const Matrix& representer_cov() const { return cov_r_; }

    /// Posterior (scaled units) at a candidate: latent mean, latent variance and covariance with the representers.
    struct CandidateMoments {
        double mean;
        double var;
        Vector cross;
    };

    CandidateMoments moments(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) const {
        const Vector r = model_.params.fidelity_kind == FidelityKernel::warped_arbf
                             ? Vector(warp_forward(z, model_.params.warp))
                             : Vector(z);
        const Eigen::Index t = model_.size();
        Vector k_x(t);
        for (Eigen::Index i = 0; i < t; ++i)
            k_x[i] = (*cov_)(x, r, model_.data.X.row(i).transpose(), model_.features.row(i).transpose());
        Vector k_r(reps_.rows());
        for (Eigen::Index i = 0; i < reps_.rows(); ++i) k_r[i] = (*cov_)(x, r, reps_.row(i).transpose(), target_feature_);
        const Vector v = model_.chol.triangularView<Eigen::Lower>().solve(k_x);
        CandidateMoments out;
        out.mean = k_x.dot(model_.alpha);
        out.var = std::max(0.0, (*cov_)(x, r, x, r) - v.squaredNorm());
        out.cross = k_r - v_r_.transpose() * v;
        return out;
    }

    /// Expected reduction of the maximizer entropy from observing y at (x, z). With n_fantasies = 0 the
    /// expectation over y is integrated exactly instead of averaged over stratified fantasies.
    double information_gain(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) const {
        if (quantiles_.size() == 0) return information_gain_integrated(x, z);
        const CandidateMoments cm = moments(x, z);
        const double noise = model_.params.noise_variance;
        // Joint sample of the candidate latent value consistent with the shared representer draws.
        const Vector w = chol_r_.triangularView<Eigen::Lower>().solve(cm.cross);
        const double resid = std::sqrt(std::max(0.0, cm.var - w.squaredNorm()));
        const Vector f_x = (eps_.transpose() * w).array() + cm.mean + resid * extra_.array();
        const double pred_sd = std::sqrt(cm.var + noise);
        const Vector gain = cm.cross / (cm.var + noise);
        const double noise_sd = std::sqrt(noise);

        const Eigen::Index n = reps_.rows();
        std::vector<int> counts(static_cast<std::size_t>(n));
        double h_after = 0.0;
        for (Eigen::Index j = 0; j < quantiles_.size(); ++j) {
            const double y = cm.mean + pred_sd * quantiles_[j];
            std::fill(counts.begin(), counts.end(), 0);
            for (Eigen::Index s = 0; s < base_.cols(); ++s) {
                const double innov = y - f_x[s] - noise_sd * noise_[s];
                Eigen::Index best = 0;
                double best_v = base_(0, s) + gain[0] * innov;
                for (Eigen::Index i = 1; i < n; ++i) {
                    const double v = base_(i, s) + gain[i] * innov;
                    if (v > best_v) {
                        best_v = v;
                        best = i;
                    }
                }
                ++counts[static_cast<std::size_t>(best)];
            }
            double h = 0.0;
            const double total = static_cast<double>(base_.cols());
            for (int c : counts)
                if (c > 0) h -= (c / total) * std::log(c / total);
            h_after += h;
        }
        return baseline_ - h_after / static_cast<double>(quantiles_.size());
    }

    /// Same quantity with the fantasy outcome integrated exactly: for each joint draw the conditioned
    /// representer values are lines in y, so the argmax changes only at the breakpoints of their upper envelope.
    double information_gain_integrated(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z) const {
        const CandidateMoments cm = moments(x, z);
        const double noise = model_.params.noise_variance;
        const Vector w = chol_r_.triangularView<Eigen::Lower>().solve(cm.cross);
        const double resid = std::sqrt(std::max(0.0, cm.var - w.squaredNorm()));
        const Vector u = (eps_.transpose() * w).array() + cm.mean + resid * extra_.array() + std::sqrt(noise) * noise_.array();
        const double pred_sd = std::sqrt(cm.var + noise);
        const Vector g = cm.cross / (cm.var + noise);

        const Eigen::Index n = reps_.rows();
        const Eigen::Index n_s = base_.cols();
        std::vector<Eigen::Index> by_slope(static_cast<std::size_t>(n));
        std::iota(by_slope.begin(), by_slope.end(), 0);
        std::stable_sort(by_slope.begin(), by_slope.end(), [&](Eigen::Index a, Eigen::Index b) { return g[a] < g[b]; });

        struct Event {
            double y;
            Eigen::Index from, to;
        };
        std::vector<Event> events;
        std::vector<Eigen::Index> counts(static_cast<std::size_t>(n), 0);
        std::vector<Eigen::Index> hull;
        std::vector<double> starts;
        for (Eigen::Index s = 0; s < n_s; ++s) {
            const auto icpt = [&](Eigen::Index i) { return base_(i, s) - g[i] * u[s]; };
            hull.clear();
            starts.clear();
            for (Eigen::Index i : by_slope) {
                if (!hull.empty() && g[hull.back()] == g[i]) {
                    if (icpt(i) <= icpt(hull.back())) continue;
                    hull.pop_back();
                    starts.pop_back();
                }
                double y0 = -std::numeric_limits<double>::infinity();
                while (!hull.empty()) {
                    const Eigen::Index k = hull.back();
                    y0 = (icpt(k) - icpt(i)) / (g[i] - g[k]);
                    if (y0 <= starts.back()) {
                        hull.pop_back();
                        starts.pop_back();
                        y0 = -std::numeric_limits<double>::infinity();
                    } else {
                        break;
                    }
                }
                hull.push_back(i);
                starts.push_back(y0);
            }
            ++counts[static_cast<std::size_t>(hull.front())];
            for (std::size_t k = 1; k < hull.size(); ++k) events.push_back({starts[k], hull[k - 1], hull[k]});
        }
        std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.y < b.y; });

        const auto clogc = [](Eigen::Index c) { return c > 0 ? static_cast<double>(c) * std::log(static_cast<double>(c)) : 0.0; };
        double sum_clogc = 0.0;
        for (Eigen::Index c : counts) sum_clogc += clogc(c);
        const double total = static_cast<double>(n_s);
        const auto entropy = [&] { return std::log(total) - sum_clogc / total; };
        double h_after = 0.0;
        double prev_cdf = 0.0;
        for (const Event& e : events) {
            const double cdf = normal_cdf((e.y - cm.mean) / pred_sd);
            h_after += (cdf - prev_cdf) * entropy();
            prev_cdf = cdf;
            auto& cf = counts[static_cast<std::size_t>(e.from)];
            auto& ct = counts[static_cast<std::size_t>(e.to)];
            sum_clogc -= clogc(cf) + clogc(ct);
            --cf;
            ++ct;
            sum_clogc += clogc(cf) + clogc(ct);
        }
        h_after += (1.0 - prev_cdf) * entropy();
        return baseline_ - h_after;
    }

    double per_cost(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z, double cost) const {
        if (!(cost > 0.0)) throw std::invalid_argument("entropy search: cost must be positive");
        return information_gain(x, z) / cost;
    }

private:
    const ModelState& model_;
    FidelityVector target_;
    AcqConfig cfg_;
    Matrix reps_;
    std::unique_ptr<CovarianceEvaluator> cov_;
    Matrix rep_features_;
    Vector target_feature_;
    Matrix v_r_;
    Vector mean_r_;
    Matrix cov_r_;
    Matrix chol_r_;
    Matrix eps_;
    Vector extra_;
    Vector noise_;
    Matrix base_;
    Vector quantiles_;
    double baseline_ = 0.0;
};

/// Entropy-search-per-cost at one candidate with freshly sampled representers.
inline double es_per_cost(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z, const ModelState& m,
                          const CostModel& cost_model, const AcqConfig& cfg, const Box& design_box,
                          const FidelityVector& target = target_fidelity()) {
    const double c = cost_model(z);
    if (!(c > 0.0)) throw std::invalid_argument("es_per_cost: cost must be positive");
    EntropySearch es(m, sample_representers(m, target, design_box, cfg), target, cfg);
    return es.information_gain(x, z) / c;
}

/// Closed-form expected improvement over best_y under the posterior at (x, z).
inline double expected_improvement(const Eigen::Ref<const Vector>& x, const ModelState& m, double best_y,
                                   const FidelityVector& z = target_fidelity()) {
    const PosteriorGaussian g = posterior(x, z, m);
    const double sd = std::sqrt(g.variance);
    if (sd <= 0.0) return std::max(0.0, g.mean - best_y);
    const double u = (g.mean - best_y) / sd;
    return std::max(0.0, (g.mean - best_y) * normal_cdf(u) + sd * normal_pdf(u));
}

}  // namespace nfwbo
