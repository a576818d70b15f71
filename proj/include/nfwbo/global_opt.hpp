#pragma once

#include "nfwbo/box.hpp"
#include "nfwbo/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace nfwbo {

using ScalarField = std::function<double(const Vector&)>;

/// Latin hypercube design: n points (rows) with exactly one point per stratum in every dimension.
inline Matrix lhs_sample(int n, const Box& box, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("lhs_sample: n must be >= 1");
    Rng rng(mix_seed(seed, 0x1a5));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Eigen::Index d = box.dim();
    Matrix out(n, d);
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (int i = 0; i < n; ++i) {
            double u = (perm[static_cast<std::size_t>(i)] + unif(rng)) / n;
            out(i, j) = box.lower()[j] + std::min(u, 1.0) * (box.upper()[j] - box.lower()[j]);
        }
    }
    return out;
}

struct MaximizeResult {
    Vector point;
    double value = -std::numeric_limits<double>::infinity();
    int evaluations = 0;
};

inline Vector uniform_in_box(const Box& box, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector u(box.dim());
    for (Eigen::Index j = 0; j < u.size(); ++j) u[j] = unif(rng);
    return box.from_unit(u);
}

/// Best of n uniform samples.
inline MaximizeResult random_maximize(const ScalarField& f, const Box& box, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("random_maximize: n must be >= 1");
    Rng rng(mix_seed(seed, 0x7a9d));
    MaximizeResult best;
    for (int i = 0; i < n; ++i) {
        Vector p = uniform_in_box(box, rng);
        double v = f(p);
        ++best.evaluations;
        if (best.point.size() == 0 || v > best.value) {
            best.point = std::move(p);
            best.value = v;
        }
    }
    return best;
}

/// One hyperrectangle of the DIRECT partition, in unit coordinates of the search box.
struct DirectRect {
    Vector center;
    std::vector<int> levels;  // side length along dimension i is 3^-levels[i]
    double value;             // objective (maximization sense) at the center

    double unit_volume() const {
        double v = 1.0;
        for (int k : levels) v *= std::pow(3.0, -k);
        return v;
    }
};

struct DirectOptions {
    int max_evals = 2000;
    double epsilon = 1e-4;
    int max_level = 30;
    /// Called after every completed round with the current partition.
    std::function<void(const std::vector<DirectRect>&)> observer = nullptr;
};

namespace detail {

inline double half_diagonal(const std::vector<int>& levels) {
    std::vector<int> sorted = levels;
    std::sort(sorted.begin(), sorted.end());
    double s = 0.0;
    for (int k : sorted) s += std::pow(9.0, -k);
    return 0.5 * std::sqrt(s);
}

// Indices of potentially optimal rectangles (minimization of g = -value).
inline std::vector<std::size_t> potentially_optimal(const std::vector<DirectRect>& rects, double epsilon,
                                                    int max_level) {
    struct Group {
        double size;
        std::size_t best;
    };
    std::vector<Group> groups;
    double g_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rects.size(); ++i) {
        const double g = -rects[i].value;
        g_min = std::min(g_min, g);
        if (*std::min_element(rects[i].levels.begin(), rects[i].levels.end()) >= max_level) continue;
        const double d = half_diagonal(rects[i].levels);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Group& gr) { return std::abs(gr.size - d) <= 1e-13 * d; });
        if (it == groups.end())
            groups.push_back({d, i});
        else if (g < -rects[it->best].value)
            it->best = i;
    }
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.size < b.size; });

    std::vector<std::size_t> selected;
    for (std::size_t j = 0; j < groups.size(); ++j) {
        const double gj = -rects[groups[j].best].value;
        const double dj = groups[j].size;
        double k_low = 0.0;
        double k_high = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (i == j) continue;
            const double gi = -rects[groups[i].best].value;
            const double di = groups[i].size;
            if (di < dj)
                k_low = std::max(k_low, (gj - gi) / (dj - di));
            else
                k_high = std::min(k_high, (gi - gj) / (di - dj));
        }
        if (k_low > k_high) continue;
        if (std::isfinite(k_high) && gj - k_high * dj > g_min - epsilon * std::abs(g_min)) continue;
        selected.push_back(groups[j].best);
    }
    return selected;
}

}  // namespace detail

/// Dividing-rectangles global maximization of f over box. Deterministic.
inline MaximizeResult direct_maximize(const ScalarField& f, const Box& box, const DirectOptions& opts = {}) {
    if (opts.max_evals < 1) throw std::invalid_argument("direct_maximize: max_evals must be >= 1");
    const auto d = static_cast<std::size_t>(box.dim());
    MaximizeResult best;

    auto evaluate = [&](const Vector& unit) {
        Vector p = box.clamp(box.from_unit(unit));
        double v = f(p);
        ++best.evaluations;
        if (!std::isfinite(v)) v = -std::numeric_limits<double>::infinity();
        if (v > best.value) {
            best.value = v;
            best.point = p;
        }
        return v;
    };

    std::vector<DirectRect> rects;
    {
        Vector c = Vector::Constant(box.dim(), 0.5);
        Vector p = box.center();
        double v = f(p);
        ++best.evaluations;
        if (!std::isfinite(v)) throw std::invalid_argument("direct_maximize: objective not finite at box center");
        best.value = v;
        best.point = p;
        rects.push_back({c, std::vector<int>(d, 0), v});
    }

    bool exhausted = false;
    while (!exhausted) {
        auto selected = detail::potentially_optimal(rects, opts.epsilon, opts.max_level);
        if (selected.empty()) break;
        for (std::size_t idx : selected) {
            const std::vector<int> levels = rects[idx].levels;
            const int kmin = *std::min_element(levels.begin(), levels.end());
            std::vector<std::size_t> long_dims;
            for (std::size_t i = 0; i < d; ++i)
                if (levels[i] == kmin) long_dims.push_back(i);
            if (best.evaluations + 2 * static_cast<int>(long_dims.size()) > opts.max_evals) {
                exhausted = true;
                break;
            }
            const double delta = std::pow(3.0, -(kmin + 1));
            const Vector center = rects[idx].center;
            struct Probe {
                std::size_t dim;
                Vector plus, minus;
                double vplus, vminus;
            };
            std::vector<Probe> probes;
            for (std::size_t i : long_dims) {
                Probe pr{i, center, center, 0.0, 0.0};
                pr.plus[static_cast<Eigen::Index>(i)] += delta;
                pr.minus[static_cast<Eigen::Index>(i)] -= delta;
                pr.vplus = evaluate(pr.plus);
                pr.vminus = evaluate(pr.minus);
                probes.push_back(std::move(pr));
            }
            // Split first along the dimension whose better probe is best.
            std::stable_sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) {
                return std::max(a.vplus, a.vminus) > std::max(b.vplus, b.vminus);
            });
            std::vector<int> child_levels = levels;
            for (const Probe& pr : probes) {
                ++child_levels[pr.dim];
                rects.push_back({pr.plus, child_levels, pr.vplus});
                rects.push_back({pr.minus, child_levels, pr.vminus});
            }
            rects[idx].levels = child_levels;
        }
        if (opts.observer) opts.observer(rects);
        if (best.evaluations >= opts.max_evals) break;
    }
    return best;
}

}  // namespace nfwbo
