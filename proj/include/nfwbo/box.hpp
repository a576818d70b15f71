#pragma once

#include "nfwbo/common.hpp"

#include <cmath>
#include <stdexcept>

namespace nfwbo {

/// Axis-aligned box with lower < upper in every coordinate.
class Box {
public:
    Box() = default;

    Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() != upper_.size() || lower_.size() == 0)
            throw std::invalid_argument("Box: lower/upper dimension mismatch");
        for (Eigen::Index i = 0; i < lower_.size(); ++i) {
            if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i]))
                throw std::invalid_argument("Box: require finite lower < upper in dimension " + std::to_string(i));
        }
    }

    static Box unit(Eigen::Index dim) { return Box(Vector::Zero(dim), Vector::Ones(dim)); }

    Eigen::Index dim() const { return lower_.size(); }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }
    Vector width() const { return upper_ - lower_; }
    Vector center() const { return 0.5 * (lower_ + upper_); }
    double volume() const { return width().prod(); }

    bool contains(const Eigen::Ref<const Vector>& p, double tol = 0.0) const {
        if (p.size() != dim()) return false;
        return ((p - lower_).array() >= -tol).all() && ((upper_ - p).array() >= -tol).all();
    }

    /// Map a point of [0,1]^d into the box.
    Vector from_unit(const Eigen::Ref<const Vector>& u) const { return lower_ + u.cwiseProduct(width()); }
    Vector to_unit(const Eigen::Ref<const Vector>& p) const { return (p - lower_).cwiseQuotient(width()); }
    Vector clamp(const Eigen::Ref<const Vector>& p) const { return p.cwiseMax(lower_).cwiseMin(upper_); }

    /// Cartesian product with another box.
    Box concat(const Box& other) const {
        Vector lo(dim() + other.dim()), hi(dim() + other.dim());
        lo << lower_, other.lower_;
        hi << upper_, other.upper_;
        return Box(lo, hi);
    }

private:
    Vector lower_;
    Vector upper_;
};

inline Box fidelity_box() { return Box::unit(kFidelityDim); }

}  // namespace nfwbo
