#pragma once

#include "nfwbo/box.hpp"
#include "nfwbo/common.hpp"
#include "nfwbo/cost.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfwbo {

struct Observation {
    double y = 0.0;
    double cost = 0.0;
};

struct KnownOptimum {
    Vector x;
    double value = 0.0;
};

using EvaluateFn = std::function<Observation(const Vector& x, const FidelityVector& z, std::uint64_t seed)>;

/// A maximization problem over a unit design box and the fidelity box [0,1]^2.
struct ObjectiveSpec {
    std::string name;
    Box design_box = Box::unit(1);
    EvaluateFn evaluate;
    std::optional<KnownOptimum> known_optimum;
    double noise_sd = 0.0;

    Observation operator()(const Vector& x, const FidelityVector& z, std::uint64_t seed) const {
        return evaluate(x, z, seed);
    }
};

inline double branin(double x1, double x2) {
    constexpr double pi = std::numbers::pi;
    const double b = 5.1 / (4.0 * pi * pi), c = 5.0 / pi, t = 1.0 / (8.0 * pi);
    const double u = x2 - b * x1 * x1 + c * x1 - 6.0;
    return u * u + 10.0 * (1.0 - t) * std::cos(x1) + 10.0;
}

/// Negated Branin with fidelity bias; x is in the unit square, mapped to [-5,10] x [0,15].
inline double mf_branin(const Vector& x, const FidelityVector& z) {
    if (x.size() != 2) throw std::invalid_argument("mf_branin: x must be 2-D");
    const double x1 = -5.0 + 15.0 * x[0], x2 = 15.0 * x[1];
    return -branin(x1, x2) + 2.0 * (1.0 - z[0]) * std::sin(x1) + 1.5 * (1.0 - z[1]) * std::cos(x2);
}

inline double park(const Vector& x) {
    const double x1 = std::max(x[0], 1e-6), x2 = x[1], x3 = x[2], x4 = x[3];
    return 0.5 * x1 * (std::sqrt(1.0 + (x2 + x3 * x3) * x4 / (x1 * x1)) - 1.0) +
           (x1 + 3.0 * x4) * std::exp(1.0 + std::sin(x3));
}

inline double mf_park4(const Vector& x, const FidelityVector& z) {
    if (x.size() != 4) throw std::invalid_argument("mf_park4: x must be 4-D");
    return park(x) * (0.9 + 0.1 * z[1]) - (1.0 - z[0]) * 0.5 * x.cwiseAbs().sum();
}

inline double curve_saturation(double eps) { return 1.0 - std::exp(-5.0 * eps); }

/// Learning-curve objective whose low-fidelity optimum sits away from the target optimum.
inline double mf_curve(const Vector& x, const FidelityVector& z) {
    if (x.size() != 3) throw std::invalid_argument("mf_curve: x must be 3-D");
    const Eigen::Vector3d a(0.7, 0.2, 0.5), b(0.2, 0.8, 0.5);
    const double f_inf = std::exp(-(x - a).squaredNorm() / 0.08);
    const double f_0 = 0.5 * std::exp(-(x - b).squaredNorm() / 0.2);
    const double s = curve_saturation(z[1]);
    return f_inf * s + f_0 * (1.0 - s) - 0.3 * (1.0 - z[0]) * f_0;
}

namespace detail {

inline ObjectiveSpec synthetic(std::string name, Eigen::Index dim, double (*f)(const Vector&, const FidelityVector&),
                               const CostModel& cm, std::optional<KnownOptimum> opt) {
    cm.validate();
    ObjectiveSpec spec;
    spec.name = std::move(name);
    spec.design_box = Box::unit(dim);
    spec.known_optimum = std::move(opt);
    spec.evaluate = [f, cm](const Vector& x, const FidelityVector& z, std::uint64_t) {
        return Observation{f(x, z), cm(z)};
    };
    return spec;
}

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double e : v) out[i++] = e;
    return out;
}

}  // namespace detail

inline ObjectiveSpec make_mf_branin(const CostModel& cm = {}) {
    // Three global minimizers of Branin; the first, (pi, 2.275), is reported.
    const double x0 = (std::numbers::pi + 5.0) / 15.0, x1 = 2.275 / 15.0;
    return detail::synthetic("mf_branin", 2, &mf_branin, cm,
                             KnownOptimum{detail::vec({x0, x1}), -5.0 / (4.0 * std::numbers::pi)});
}

inline ObjectiveSpec make_mf_park4(const CostModel& cm = {}) {
    const Vector ones = Vector::Ones(4);
    return detail::synthetic("mf_park4", 4, &mf_park4, cm, KnownOptimum{ones, park(ones)});
}

inline ObjectiveSpec make_mf_curve(const CostModel& cm = {}) {
    return detail::synthetic("mf_curve", 3, &mf_curve, cm,
                             KnownOptimum{detail::vec({0.699967865, 0.200038563, 0.5}), 0.9934216352400258});
}

/// Adds N(0, noise_sd^2) observation noise, reproducible per (x, z, evaluation seed).
inline ObjectiveSpec noisy_wrap(ObjectiveSpec spec, double noise_sd, std::uint64_t seed) {
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw std::invalid_argument("noisy_wrap: noise_sd must be >= 0");
    spec.noise_sd = std::sqrt(spec.noise_sd * spec.noise_sd + noise_sd * noise_sd);
    if (noise_sd == 0.0) return spec;
    EvaluateFn inner = std::move(spec.evaluate);
    spec.evaluate = [inner, noise_sd, seed](const Vector& x, const FidelityVector& z, std::uint64_t s) {
        Observation obs = inner(x, z, s);
        std::uint64_t h = hash_doubles(x.data(), static_cast<std::size_t>(x.size()), mix_seed(seed, s));
        h = hash_doubles(z.data(), 2, h);
        Rng rng(h);
        std::normal_distribution<double> normal(0.0, 1.0);
        obs.y += noise_sd * normal(rng);
        return obs;
    };
    return spec;
}

inline const std::vector<std::pair<std::string, std::string>>& synthetic_objectives() {
    static const std::vector<std::pair<std::string, std::string>> names = {
        {"mf_branin", "2-D negated Branin with sin/cos fidelity bias"},
        {"mf_park4", "4-D Park function scaled by epochs, penalized by task difficulty"},
        {"mf_curve", "3-D learning-curve objective with a moving low-fidelity optimum"},
    };
    return names;
}

inline ObjectiveSpec make_synthetic(const std::string& name, const CostModel& cm = {}) {
    if (name == "mf_branin") return make_mf_branin(cm);
    if (name == "mf_park4") return make_mf_park4(cm);
    if (name == "mf_curve") return make_mf_curve(cm);
    throw std::invalid_argument("unknown objective: " + name);
}

}  // namespace nfwbo
