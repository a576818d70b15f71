#pragma once

#include "nfwbo/box.hpp"
#include "nfwbo/common.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace nfwbo {

struct EvaluationRecord {
    DesignPoint x;
    FidelityVector z;
    double y = 0.0;
    double cost = 0.0;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;
};

/// Evaluation history plus the boxes and target fidelity it lives in.
class Dataset {
public:
    Dataset() = default;
    Dataset(Box design_box, FidelityVector target = target_fidelity())
        : design_box_(std::move(design_box)), fidelity_box_(nfwbo::fidelity_box()), target_(target) {}

    void append(EvaluationRecord rec) {
        if (!design_box_.contains(rec.x, 1e-12)) throw std::invalid_argument("Dataset: design point outside box");
        if (!fidelity_box_.contains(rec.z, 1e-12)) throw std::invalid_argument("Dataset: fidelity outside [0,1]^2");
        if (!(rec.cost > 0.0)) throw std::invalid_argument("Dataset: cost must be positive");
        if (!std::isfinite(rec.y)) throw std::invalid_argument("Dataset: observation must be finite");
        records_.push_back(std::move(rec));
    }

    const std::vector<EvaluationRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const Box& design_box() const { return design_box_; }
    const Box& fidelity_box() const { return fidelity_box_; }
    const FidelityVector& target() const { return target_; }
    Eigen::Index design_dim() const { return design_box_.dim(); }

    bool is_target(const FidelityVector& z) const { return ((z - target_).array().abs() <= 1e-9).all(); }

private:
    Box design_box_;
    Box fidelity_box_;
    FidelityVector target_ = target_fidelity();
    std::vector<EvaluationRecord> records_;
};

/// Affine map applied to observations before fitting: y_fit = (y - offset) / scale.
struct OutputScaling {
    double offset = 0.0;
    double scale = 1.0;
};

/// Dense training inputs: design rows X, fidelity rows Z, targets y.
struct TrainingSet {
    Matrix X;
    Matrix Z;
    Vector y;

    Eigen::Index size() const { return y.size(); }
    Eigen::Index design_dim() const { return X.cols(); }
};

inline TrainingSet to_training_set(const Dataset& data) {
    const auto t = static_cast<Eigen::Index>(data.size());
    TrainingSet ts{Matrix(t, data.design_dim()), Matrix(t, kFidelityDim), Vector(t)};
    for (Eigen::Index i = 0; i < t; ++i) {
        const auto& r = data.records()[static_cast<std::size_t>(i)];
        ts.X.row(i) = r.x.transpose();
        ts.Z.row(i) = r.z.transpose();
        ts.y[i] = r.y;
    }
    return ts;
}

/// Standardize targets to zero mean and unit standard deviation.
inline OutputScaling standardize(TrainingSet& ts) {
    OutputScaling s;
    if (ts.size() == 0) return s;
    s.offset = ts.y.mean();
    const double var = ts.size() > 1 ? (ts.y.array() - s.offset).square().sum() / static_cast<double>(ts.size()) : 0.0;
    s.scale = var > 1e-24 ? std::sqrt(var) : 1.0;
    ts.y = (ts.y.array() - s.offset) / s.scale;
    return s;
}

/// Best observation recorded at the target fidelity.
inline std::optional<EvaluationRecord> best_at_target(const Dataset& data) {
    std::optional<EvaluationRecord> best;
    for (const auto& r : data.records())
        if (data.is_target(r.z) && (!best || r.y > best->y)) best = r;
    return best;
}

}  // namespace nfwbo
