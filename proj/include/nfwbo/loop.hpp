#pragma once

#include "nfwbo/acquisition.hpp"
#include "nfwbo/dataset.hpp"
#include "nfwbo/global_opt.hpp"
#include "nfwbo/hyperlearn.hpp"
#include "nfwbo/objectives.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace nfwbo {

enum class Method { nfw, boca, fabolas, single_fidelity_bo, random };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::nfw: return "nfw";
        case Method::boca: return "boca";
        case Method::fabolas: return "fabolas";
        case Method::single_fidelity_bo: return "single_fidelity_bo";
        case Method::random: return "random";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::nfw, Method::boca, Method::fabolas, Method::single_fidelity_bo, Method::random})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown method: " + s);
}

inline bool is_multi_fidelity(Method m) { return m == Method::nfw || m == Method::boca || m == Method::fabolas; }

inline FidelityKernel kernel_for(Method m) {
    switch (m) {
        case Method::nfw: return FidelityKernel::warped_arbf;
        case Method::fabolas: return FidelityKernel::finite_rank;
        default: return FidelityKernel::arbf;
    }
}

struct LoopConfig {
    int n_init_multi = 10;
    int n_init_single = 6;
    AcqConfig acq{.n_mc = 1024, .n_fantasies = 0};
    LearnConfig learn;
    DirectOptions direct{.max_evals = 400};
    double cost_floor_fraction = 0.05;
    bool warp_enabled = true;
    // Hard cap on outer iterations; 0 means none beyond the budget.
    int max_iterations = 0;
    std::string checkpoint_path;

    int n_init(Method m) const { return is_multi_fidelity(m) ? n_init_multi : n_init_single; }

    void validate() const {
        if (n_init_multi < 1 || n_init_single < 1) throw std::invalid_argument("LoopConfig: n_init must be >= 1");
        if (!(cost_floor_fraction >= 0.0 && cost_floor_fraction <= 1.0))
            throw std::invalid_argument("LoopConfig: cost_floor_fraction must lie in [0,1]");
        if (direct.max_evals < 1) throw std::invalid_argument("LoopConfig: direct.max_evals must be >= 1");
        if (max_iterations < 0) throw std::invalid_argument("LoopConfig: max_iterations must be >= 0");
        acq.validate();
        learn.validate();
    }
};

struct BudgetLedger {
    double budget = 0.0;
    double spent = 0.0;

    void charge(double c) {
        if (!(c > 0.0)) throw std::invalid_argument("BudgetLedger: cost must be positive");
        spent += c;
    }
    bool exhausted() const { return spent > budget; }
};

/// Seed used for the objective's i-th evaluation within a run.
inline std::uint64_t evaluation_seed(std::uint64_t run_seed, std::size_t index) {
    return mix_seed(run_seed, 0x9000 + index);
}

inline EvaluationRecord evaluate_record(const ObjectiveSpec& obj, const Vector& x, const FidelityVector& z,
                                        std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const Observation o = obj(x, z, seed);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return EvaluationRecord{x, z, o.y, o.cost, seed, wall};
}

struct InitialDesign {
    Matrix X;
    Matrix Z;
};

/// Multi-fidelity: independent LHS over designs and fidelities, randomly paired. Otherwise LHS designs at z*.
inline InitialDesign initial_design(const Box& design_box, int n_init, Method method, std::uint64_t seed,
                                    const FidelityVector& target = target_fidelity()) {
    if (n_init < 1) throw std::invalid_argument("initial_design: n_init must be >= 1");
    InitialDesign d;
    d.X = lhs_sample(n_init, design_box, mix_seed(seed, 0x11));
    if (!is_multi_fidelity(method)) {
        d.Z = target.transpose().replicate(n_init, 1);
        return d;
    }
    const Matrix Zl = lhs_sample(n_init, fidelity_box(), mix_seed(seed, 0x12));
    std::vector<int> perm(static_cast<std::size_t>(n_init));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed, 0x13));
    std::shuffle(perm.begin(), perm.end(), rng);
    d.Z.resize(n_init, kFidelityDim);
    for (int i = 0; i < n_init; ++i) d.Z.row(i) = Zl.row(perm[static_cast<std::size_t>(i)]);
    return d;
}

struct Proposal {
    Vector x;
    FidelityVector z;
    double acquisition = 0.0;
    std::optional<ModelParams> params;
    double nlml = std::numeric_limits<double>::quiet_NaN();
};

inline ModelParams initial_params(Method method, Eigen::Index dim, const LoopConfig& cfg) {
    ModelParams p = ModelParams::defaults(kernel_for(method), dim);
    if (method == Method::nfw) p.warp.enabled = cfg.warp_enabled;
    return p;
}

/// Raise eps until c(z) reaches the floor fraction of the target cost.
inline FidelityVector apply_cost_floor(FidelityVector z, const CostModel& cm, const LoopConfig& cfg,
                                       const FidelityVector& target) {
    const double floor = cfg.cost_floor_fraction * cm(target);
    if (cm(z) < floor) z[1] = std::max(z[1], cm.eps_for_cost(floor));
    return z;
}

/// Learns hyperparameters on the data, then maximizes the method's acquisition.
inline Proposal propose_next(const Dataset& data, Method method, const CostModel& cm, const LoopConfig& cfg,
                             std::uint64_t seed, const std::optional<ModelParams>& warm_start = {}) {
    const Box& box = data.design_box();
    const FidelityVector target = data.target();
    Proposal out;
    if (method == Method::random) {
        Rng rng(mix_seed(seed, 0x21));
        out.x = uniform_in_box(box, rng);
        out.z = target;
        return out;
    }
    if (data.size() < 2) throw std::invalid_argument("propose_next: need at least 2 evaluations");

    TrainingSet ts = to_training_set(data);
    const OutputScaling scaling = standardize(ts);
    const ModelParams like = initial_params(method, box.dim(), cfg);
    std::optional<ModelParams> warm = warm_start;
    if (warm && (warm->fidelity_kind != like.fidelity_kind || warm->design_dim() != like.design_dim())) warm.reset();
    if (warm) warm->warp.enabled = like.warp.enabled;
    const LearnResult learned = learn_hyperparameters(ts, like, cfg.learn, mix_seed(seed, 0x22), warm);
    out.params = learned.params;
    out.nlml = learned.nlml;
    const ModelState m = fit(ts, learned.params, scaling);

    AcqConfig acq = cfg.acq;
    acq.seed = mix_seed(seed, 0x23);
    const EntropySearch es(m, sample_representers(m, target, box, acq), target, acq);

    if (!is_multi_fidelity(method)) {
        const double c = cm(target);
        auto f = [&](const Vector& x) { return es.per_cost(x, target, c); };
        const MaximizeResult r = direct_maximize(f, box, cfg.direct);
        out.x = r.point;
        out.z = target;
        out.acquisition = r.value;
        return out;
    }

    const Eigen::Index d = box.dim();
    auto acq_at = [&](const Vector& x, const FidelityVector& z) {
        const FidelityVector zf = apply_cost_floor(z, cm, cfg, target);
        return es.per_cost(x, zf, cm(zf));
    };
    auto f = [&](const Vector& u) { return acq_at(u.head(d), FidelityVector(u.tail<2>())); };
    const MaximizeResult r = direct_maximize(f, box.concat(fidelity_box()), cfg.direct);
    out.x = r.point.head(d);
    out.z = apply_cost_floor(FidelityVector(r.point.tail<2>()), cm, cfg, target);
    out.acquisition = r.value;
    // Box centres never reach the corner z*, so also score the best design there.
    const double at_target = acq_at(out.x, target);
    if (at_target > out.acquisition) {
        out.z = target;
        out.acquisition = at_target;
    }
    return out;
}

struct TracePoint {
    int iteration = 0;  // 0 for the initial design
    double cum_cost = 0.0;
    double best_at_target = std::numeric_limits<double>::quiet_NaN();
};

struct RunResult {
    Method method = Method::nfw;
    Vector best_x;
    double best_y_target = std::numeric_limits<double>::quiet_NaN();
    bool best_is_estimate = false;
    std::vector<TracePoint> trace;
    Dataset final_dataset;
    BudgetLedger ledger;
    int outer_iterations = 0;
    bool failed = false;
    std::string failure;
    std::optional<ModelParams> final_params;
};

namespace detail {

inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector from_std(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Natural (not log) values, so a restored model is bit-identical to the saved one.
inline nlohmann::json params_to_json(const ModelParams& p) {
    nlohmann::json factors = nlohmann::json::array();
    for (const auto& f : p.finite_rank_factors) factors.push_back({f(0, 0), f(1, 0), f(1, 1)});
    return {{"kind", to_string(p.fidelity_kind)},
            {"signal_variance", p.design.signal_variance},
            {"length_scales", to_std(p.design.length_scales)},
            {"fidelity_length_scales", to_std(p.fidelity_length_scales)},
            {"finite_rank_factors", factors},
            {"noise_variance", p.noise_variance},
            {"warp_enabled", p.warp.enabled},
            {"warp", to_std(p.warp.flat())}};
}

inline ModelParams params_from_json(const nlohmann::json& j, Method method, const LoopConfig& cfg) {
    const Vector ls = from_std(j.at("length_scales").get<std::vector<double>>());
    ModelParams p = initial_params(method, ls.size(), cfg);
    if (j.at("kind").get<std::string>() != to_string(p.fidelity_kind))
        throw std::invalid_argument("checkpoint: kernel kind does not match method");
    p.design = ArbfParams(j.at("signal_variance").get<double>(), ls);
    p.fidelity_length_scales = from_std(j.at("fidelity_length_scales").get<std::vector<double>>());
    p.finite_rank_factors.clear();
    for (const auto& f : j.at("finite_rank_factors")) {
        Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
        m(0, 0) = f.at(0).get<double>();
        m(1, 0) = f.at(1).get<double>();
        m(1, 1) = f.at(2).get<double>();
        p.finite_rank_factors.push_back(m);
    }
    p.noise_variance = j.at("noise_variance").get<double>();
    p.warp = WarpParams::from_flat(from_std(j.at("warp").get<std::vector<double>>()), j.at("warp_enabled").get<bool>());
    p.validate();
    return p;
}

}  // namespace detail

/// Serializes everything a run needs to continue deterministically.
inline nlohmann::json checkpoint_json(const RunResult& r, std::uint64_t seed) {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& rec : r.final_dataset.records())
        recs.push_back({{"x", std::vector<double>(rec.x.data(), rec.x.data() + rec.x.size())},
                        {"z", {rec.z[0], rec.z[1]}},
                        {"y", rec.y},
                        {"cost", rec.cost},
                        {"seed", rec.seed},
                        {"wall_seconds", rec.wall_seconds}});
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& t : r.trace) trace.push_back({t.iteration, t.cum_cost});
    nlohmann::json j = {{"method", to_string(r.method)}, {"seed", seed},
                        {"outer_iterations", r.outer_iterations}, {"spent", r.ledger.spent},
                        {"records", recs}, {"iterations", trace}};
    if (r.final_params) j["params"] = detail::params_to_json(*r.final_params);
    return j;
}

inline void write_checkpoint(const std::string& path, const RunResult& r, std::uint64_t seed) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
        os << checkpoint_json(r, seed).dump() << '\n';
        if (!os) throw std::runtime_error("cannot write checkpoint: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline double best_so_far(const Dataset& data) {
    const auto b = best_at_target(data);
    return b ? b->y : std::numeric_limits<double>::quiet_NaN();
}

inline void record(RunResult& r, EvaluationRecord rec, int iteration) {
    const double cost = rec.cost;
    r.final_dataset.append(std::move(rec));
    r.ledger.charge(cost);
    r.trace.push_back({iteration, r.ledger.spent, best_so_far(r.final_dataset)});
}

inline bool restore(RunResult& r, const nlohmann::json& j, Method method, std::uint64_t seed, const LoopConfig& cfg) {
    if (j.at("method").get<std::string>() != to_string(method) || j.at("seed").get<std::uint64_t>() != seed)
        return false;
    const auto& its = j.at("iterations");
    std::size_t i = 0;
    for (const auto& rec : j.at("records")) {
        const auto x = rec.at("x").get<std::vector<double>>();
        const auto z = rec.at("z").get<std::vector<double>>();
        EvaluationRecord e{Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size())),
                           FidelityVector(z.at(0), z.at(1)),
                           rec.at("y").get<double>(),
                           rec.at("cost").get<double>(),
                           rec.at("seed").get<std::uint64_t>(),
                           rec.at("wall_seconds").get<double>()};
        record(r, std::move(e), its.at(i++).at(0).get<int>());
    }
    r.outer_iterations = j.at("outer_iterations").get<int>();
    if (j.contains("params")) r.final_params = params_from_json(j.at("params"), method, cfg);
    return true;
}

inline void finish(RunResult& r, Method method, const LoopConfig& cfg) {
    if (const auto b = best_at_target(r.final_dataset)) {
        r.best_x = b->x;
        r.best_y_target = b->y;
        return;
    }
    // No target-fidelity evaluation: report the posterior-mean maximizer at z*.
    r.best_is_estimate = true;
    if (r.final_dataset.size() == 0) return;
    try {
        TrainingSet ts = to_training_set(r.final_dataset);
        const OutputScaling s = standardize(ts);
        const ModelParams p = r.final_params ? *r.final_params
                                             : initial_params(method, r.final_dataset.design_dim(), cfg);
        const ModelState m = fit(ts, p, s);
        const FidelityVector target = r.final_dataset.target();
        auto f = [&](const Vector& x) { return posterior(x, target, m).mean; };
        const MaximizeResult mr = direct_maximize(f, r.final_dataset.design_box(), cfg.direct);
        r.best_x = mr.point;
        r.best_y_target = mr.value;
    } catch (const std::exception& e) {
        if (!r.failed) {
            r.failed = true;
            r.failure = std::string("final estimate: ") + e.what();
        }
    }
}

}  // namespace detail

/// Evaluates the initial design into `r`, stopping at the first failure.
inline void initialize(RunResult& r, const ObjectiveSpec& obj, int n_init, Method method, std::uint64_t seed,
                       const FidelityVector& target = target_fidelity()) {
    const InitialDesign d = initial_design(obj.design_box, n_init, method, seed, target);
    for (int i = 0; i < n_init; ++i) {
        const std::uint64_t es = evaluation_seed(seed, r.final_dataset.size());
        detail::record(r, evaluate_record(obj, d.X.row(i).transpose(), d.Z.row(i).transpose(), es), 0);
    }
}

/// Budgeted outer loop: propose, evaluate, append, charge, until spent exceeds the budget.
inline RunResult run(const ObjectiveSpec& obj, const CostModel& cm, double budget, Method method,
                     const LoopConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    cm.validate();
    if (!(budget > 0.0)) throw std::invalid_argument("run: budget must be positive");
    RunResult r;
    r.method = method;
    r.ledger.budget = budget;
    r.final_dataset = Dataset(obj.design_box);

    bool resumed = false;
    if (!cfg.checkpoint_path.empty() && std::filesystem::exists(cfg.checkpoint_path)) {
        std::ifstream is(cfg.checkpoint_path);
        resumed = detail::restore(r, nlohmann::json::parse(is), method, seed, cfg);
        if (!resumed) throw std::invalid_argument("checkpoint belongs to a different run: " + cfg.checkpoint_path);
    }
    auto checkpoint = [&] {
        if (!cfg.checkpoint_path.empty()) write_checkpoint(cfg.checkpoint_path, r, seed);
    };

    try {
        if (!resumed) {
            initialize(r, obj, cfg.n_init(method), method, seed);
            checkpoint();
        }
        while (!r.ledger.exhausted() && (cfg.max_iterations == 0 || r.outer_iterations < cfg.max_iterations)) {
            const int t = r.outer_iterations + 1;
            const Proposal p = propose_next(r.final_dataset, method, cm, cfg, mix_seed(seed, 0x5000 + t), r.final_params);
            if (p.params) r.final_params = p.params;
            const std::uint64_t es = evaluation_seed(seed, r.final_dataset.size());
            detail::record(r, evaluate_record(obj, p.x, p.z, es), t);
            r.outer_iterations = t;
            checkpoint();
        }
    } catch (const std::exception& e) {
        r.failed = true;
        r.failure = e.what();
    }
    detail::finish(r, method, cfg);
    return r;
}

}  // namespace nfwbo
