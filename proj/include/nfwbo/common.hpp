#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfwbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using DesignPoint = Eigen::VectorXd;
/// Fidelity vector z = [tau, eps] in [0,1]^2.
using FidelityVector = Eigen::Vector2d;

inline constexpr int kFidelityDim = 2;

inline FidelityVector target_fidelity() { return FidelityVector(1.0, 1.0); }

/// Raised when a factorization fails after the full jitter ladder.
class NumericalFailure : public std::runtime_error {
public:
    NumericalFailure(const std::string& what, std::vector<double> jitters)
        : std::runtime_error(what), jitters_(std::move(jitters)) {}

    const std::vector<double>& attempted_jitters() const { return jitters_; }

private:
    std::vector<double> jitters_;
};

/// Raised when an objective cannot produce a value.
class EvaluationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// splitmix64 finalizer; used to derive independent RNG streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_doubles(const double* data, std::size_t n, std::uint64_t h = 0x2545f4914f6cdd1dULL) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        static_assert(sizeof(bits) == sizeof(double));
        std::memcpy(&bits, data + i, sizeof(bits));
        h = mix_seed(h, bits);
    }
    return h;
}

using Rng = std::mt19937_64;

/// Fill a matrix with i.i.d. standard normals.
inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
    return out;
}

}  // namespace nfwbo
