#pragma once

#include "nfwbo/common.hpp"

#include <stdexcept>

namespace nfwbo {

/// Evaluation cost c(z) = (c0 + c1 * eps) / c_norm, where eps = z[1]. Defaults charge
/// training epochs 50 + 200 * eps normalized by the 250-epoch target run.
struct CostModel {
    double c0 = 50.0;
    double c1 = 200.0;
    double c_norm = 250.0;

    void validate() const {
        if (!(c0 >= 0.0) || !(c1 >= 0.0) || !(c_norm > 0.0))
            throw std::invalid_argument("CostModel: require c0 >= 0, c1 >= 0, c_norm > 0");
        if (!(c0 > 0.0)) throw std::invalid_argument("CostModel: c0 must be positive so that every cost is positive");
    }

    double operator()(const Eigen::Ref<const Vector>& z) const { return (c0 + c1 * z[1]) / c_norm; }

    /// Smallest eps in [0,1] whose cost reaches `floor` (0 if the floor is already met).
    double eps_for_cost(double floor) const {
        if (c1 <= 0.0) return 0.0;
        const double eps = (floor * c_norm - c0) / c1;
        return eps < 0.0 ? 0.0 : (eps > 1.0 ? 1.0 : eps);
    }
};

inline double cost_eval(const CostModel& cm, const Eigen::Ref<const Vector>& z) { return cm(z); }

}  // namespace nfwbo
