#pragma once

#include "nfwbo/external.hpp"
#include "nfwbo/loop.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace nfwbo {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ObjectiveConfig {
    std::string name = "mf_branin";
    double noise_sd = 0.0;
    std::uint64_t noise_seed = 0;
    // External objectives only.
    std::string command;
    double timeout_seconds = 60.0;
    int dim = 0;
};

struct ExperimentConfig {
    ObjectiveConfig objective;
    std::vector<Method> methods;
    double budget = 50.0;
    std::vector<std::uint64_t> seeds;
    CostModel cost_model;
    LoopConfig loop;
    std::string output_dir;
    bool checkpoints = false;

    void validate() const {
        if (!(budget > 0.0)) throw ConfigError("budget must be positive");
        if (seeds.empty()) throw ConfigError("seeds must be non-empty");
        if (methods.empty()) throw ConfigError("methods must be non-empty");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw ConfigError("seeds must be distinct");
        if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
            throw ConfigError("methods must be distinct");
        if (!(objective.noise_sd >= 0.0)) throw ConfigError("objective.noise_sd must be >= 0");
        if (objective.name == "external") {
            if (objective.command.empty()) throw ConfigError("external objective needs a command");
            if (objective.dim < 1) throw ConfigError("external objective needs dim >= 1");
            if (!(objective.timeout_seconds > 0.0)) throw ConfigError("objective.timeout_seconds must be positive");
        } else {
            bool known = false;
            for (const auto& [n, d] : synthetic_objectives()) known = known || n == objective.name;
            if (!known) throw ConfigError("unknown objective: " + objective.name);
        }
        try {
            cost_model.validate();
            loop.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
};

namespace detail {

class Reader {
public:
    Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) throw ConfigError("unknown key: " + where_ + k);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("wrong type for " + where_ + key);
        }
    }

    const nlohmann::json* child(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const std::string& key) const { return where_ + key + "."; }

private:
    const nlohmann::json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Parses the JSON config; unknown keys and wrong types are rejected.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    {
        detail::Reader r(j, "");
        if (const auto* o = r.child("objective")) {
            detail::Reader ro(*o, r.path("objective"));
            ro.get("name", cfg.objective.name);
            ro.get("noise_sd", cfg.objective.noise_sd);
            ro.get("noise_seed", cfg.objective.noise_seed);
            ro.get("command", cfg.objective.command);
            ro.get("timeout_seconds", cfg.objective.timeout_seconds);
            ro.get("dim", cfg.objective.dim);
        } else {
            throw ConfigError("missing key: objective");
        }
        std::vector<std::string> methods;
        r.get("methods", methods);
        for (const auto& m : methods) {
            try {
                cfg.methods.push_back(parse_method(m));
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
        r.get("budget", cfg.budget);
        r.get("seeds", cfg.seeds);
        r.get("output_dir", cfg.output_dir);
        r.get("checkpoints", cfg.checkpoints);
        r.get("warp_enabled", cfg.loop.warp_enabled);
        r.get("max_iterations", cfg.loop.max_iterations);
        if (const auto* n = r.child("n_init")) {
            detail::Reader rn(*n, r.path("n_init"));
            rn.get("multi_fidelity", cfg.loop.n_init_multi);
            rn.get("single_fidelity", cfg.loop.n_init_single);
        }
        if (const auto* c = r.child("cost_model")) {
            detail::Reader rc(*c, r.path("cost_model"));
            rc.get("c0", cfg.cost_model.c0);
            rc.get("c1", cfg.cost_model.c1);
            rc.get("c_norm", cfg.cost_model.c_norm);
        }
        if (const auto* a = r.child("acquisition")) {
            detail::Reader ra(*a, r.path("acquisition"));
            ra.get("n_representers", cfg.loop.acq.n_representers);
            ra.get("n_mc", cfg.loop.acq.n_mc);
            ra.get("n_fantasies", cfg.loop.acq.n_fantasies);
            std::string strategy = "posterior_weighted";
            ra.get("representer_strategy", strategy);
            if (strategy == "lhs") cfg.loop.acq.representer_strategy = RepresenterStrategy::lhs;
            else if (strategy == "posterior_weighted") cfg.loop.acq.representer_strategy = RepresenterStrategy::posterior_weighted;
            else throw ConfigError("unknown representer_strategy: " + strategy);
            ra.get("direct_max_evals", cfg.loop.direct.max_evals);
            ra.get("cost_floor_fraction", cfg.loop.cost_floor_fraction);
        }
        if (const auto* l = r.child("learning")) {
            detail::Reader rl(*l, r.path("learning"));
            LearnConfig& lc = cfg.loop.learn;
            rl.get("n_restarts", lc.n_restarts);
            rl.get("max_iters", lc.max_iters);
            rl.get("grad_tolerance", lc.grad_tolerance);
            rl.get("warp_init_scale", lc.warp_init_scale);
            rl.get("log_signal_min", lc.log_signal_min);
            rl.get("log_signal_max", lc.log_signal_max);
            rl.get("log_length_min", lc.log_length_min);
            rl.get("log_length_max", lc.log_length_max);
            rl.get("log_fidelity_length_min", lc.log_fidelity_length_min);
            rl.get("log_fidelity_length_max", lc.log_fidelity_length_max);
            rl.get("warp_prior_sd", lc.warp_prior_sd);
            rl.get("log_noise_min", lc.log_noise_min);
            rl.get("log_noise_max", lc.log_noise_max);
            rl.get("finite_rank_bound", lc.finite_rank_bound);
        }
    }
    cfg.validate();
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config: " + path);
    try {
        return parse_config(nlohmann::json::parse(is));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
}

/// A fresh objective instance; external objectives get their own child process.
inline ObjectiveSpec make_objective(const ObjectiveConfig& oc, const CostModel& cm) {
    ObjectiveSpec spec = oc.name == "external" ? external_objective(oc.command, oc.timeout_seconds, oc.dim, cm)
                                               : make_synthetic(oc.name, cm);
    return noisy_wrap(std::move(spec), oc.noise_sd, oc.noise_seed);
}

inline std::optional<double> known_optimum_value(const ObjectiveConfig& oc) {
    if (oc.name == "external") return std::nullopt;
    const ObjectiveSpec spec = make_synthetic(oc.name);
    if (!spec.known_optimum) return std::nullopt;
    return spec.known_optimum->value;
}

/// Best-at-target reaching 95% of the optimum; for negative optima, within 5% of |f*| below it.
inline double target_threshold(double optimum) { return optimum - 0.05 * std::abs(optimum); }

/// First cumulative cost at which the trace reaches the threshold, +inf if never.
inline double cost_to_threshold(const std::vector<TracePoint>& trace, double threshold) {
    for (const auto& t : trace)
        if (!std::isnan(t.best_at_target) && t.best_at_target >= threshold) return t.cum_cost;
    return std::numeric_limits<double>::infinity();
}

struct RunOutcome {
    Method method = Method::nfw;
    std::uint64_t seed = 0;
    RunResult result;
    std::string trace_file;
};

struct SummaryRow {
    std::string method;
    std::string objective;
    int seeds = 0;
    double mean_best = 0.0;
    double std_best = 0.0;
    double mean_cost_to_95pct = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and sample standard deviation (0 for a single value) of final observed best-at-target values,
/// plus mean cost-to-threshold (+inf if any run never reached it). Runs that never evaluated at the
/// target fidelity count as seeds but do not enter the mean or standard deviation.
inline SummaryRow summarize(const std::string& method, const std::string& objective,
                            const std::vector<std::vector<TracePoint>>& traces, std::optional<double> optimum) {
    SummaryRow row{method, objective, static_cast<int>(traces.size())};
    std::vector<double> finals;
    for (const auto& t : traces)
        if (!t.empty() && !std::isnan(t.back().best_at_target)) finals.push_back(t.back().best_at_target);
    const double n = static_cast<double>(finals.size());
    double sum = 0.0;
    for (double v : finals) sum += v;
    row.mean_best = finals.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / n;
    double ss = 0.0;
    for (double v : finals) ss += (v - row.mean_best) * (v - row.mean_best);
    if (finals.empty()) row.std_best = std::numeric_limits<double>::quiet_NaN();
    else row.std_best = finals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    if (optimum && !traces.empty()) {
        const double thr = target_threshold(*optimum);
        double c = 0.0;
        for (const auto& t : traces) c += cost_to_threshold(t, thr);
        row.mean_cost_to_95pct = c / static_cast<double>(traces.size());
    }
    return row;
}

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_number(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    return std::stod(s);
}

inline std::string trace_header(Eigen::Index dim) {
    std::string h = "iteration,cum_cost";
    for (Eigen::Index i = 0; i < dim; ++i) h += ",x" + std::to_string(i);
    return h + ",tau,eps,y,best_at_target";
}

inline void write_trace(const std::string& path, const RunResult& r) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << trace_header(r.final_dataset.design_dim()) << '\n';
    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        const auto& t = r.trace[i];
        const auto& rec = r.final_dataset.records()[i];
        if (!std::isnan(t.best_at_target)) {
            if (t.best_at_target < prev) throw std::logic_error("trace best_at_target decreased");
            prev = t.best_at_target;
        }
        os << t.iteration << ',' << format_number(t.cum_cost);
        for (double v : rec.x) os << ',' << format_number(v);
        os << ',' << format_number(rec.z[0]) << ',' << format_number(rec.z[1]) << ',' << format_number(rec.y) << ','
           << format_number(t.best_at_target) << '\n';
    }
    if (!os) throw std::runtime_error("cannot write " + path);
}

/// Reads iteration, cum_cost and best_at_target back from a trace file.
inline std::vector<TracePoint> read_trace(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    std::string line;
    std::getline(is, line);
    std::vector<TracePoint> out;
    while (std::getline(is, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (cells.size() < 6) throw std::runtime_error("short trace row in " + path);
        out.push_back({std::stoi(cells[0]), parse_number(cells[1]), parse_number(cells.back())});
    }
    return out;
}

inline std::string summary_header() { return "method,objective,seeds,mean_best,std_best,mean_cost_to_95pct"; }

inline void write_summary(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << summary_header() << '\n';
    for (const auto& r : rows)
        os << r.method << ',' << r.objective << ',' << r.seeds << ',' << format_number(r.mean_best) << ','
           << format_number(r.std_best) << ',' << format_number(r.mean_cost_to_95pct) << '\n';
    if (!os) throw std::runtime_error("cannot write " + path);
}

struct ExperimentResult {
    std::vector<RunOutcome> runs;
    std::vector<SummaryRow> summary;
    std::string output_dir;
    int failures = 0;
};

inline std::string run_stem(const std::string& objective, Method m, std::uint64_t seed) {
    return objective + "_" + to_string(m) + "_seed" + std::to_string(seed);
}

/// Runs every (method, seed) pair on up to `workers` threads and writes traces plus summary.csv.
/// Failed runs are listed in failures.csv and excluded from the summary statistics.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int workers, const std::string& out_dir,
                                       std::ostream* log = nullptr) {
    cfg.validate();
    if (workers < 1) throw ConfigError("workers must be >= 1");
    std::filesystem::create_directories(out_dir);
    ExperimentResult res;
    res.output_dir = out_dir;
    for (Method m : cfg.methods)
        for (std::uint64_t s : cfg.seeds) res.runs.push_back(RunOutcome{m, s, {}, {}});

    const std::optional<double> optimum = known_optimum_value(cfg.objective);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < res.runs.size(); i = next++) {
            RunOutcome& o = res.runs[i];
            const std::string stem = run_stem(cfg.objective.name, o.method, o.seed);
            LoopConfig lc = cfg.loop;
            if (cfg.checkpoints) lc.checkpoint_path = (std::filesystem::path(out_dir) / (stem + ".checkpoint.json")).string();
            try {
                const ObjectiveSpec obj = make_objective(cfg.objective, cfg.cost_model);
                o.result = run(obj, cfg.cost_model, cfg.budget, o.method, lc, o.seed);
            } catch (const std::exception& e) {
                o.result.method = o.method;
                o.result.failed = true;
                o.result.failure = e.what();
            }
            if (!o.result.trace.empty()) {
                o.trace_file = (std::filesystem::path(out_dir) / ("trace_" + stem + ".csv")).string();
                try {
                    write_trace(o.trace_file, o.result);
                } catch (const std::exception& e) {
                    o.result.failed = true;
                    o.result.failure = e.what();
                }
            }
            if (log) {
                std::lock_guard lock(log_mutex);
                *log << to_string(o.method) << " seed " << o.seed << ": "
                     << (o.result.failed ? "FAILED (" + o.result.failure + ")" : "best " + format_number(o.result.best_y_target))
                     << (o.result.best_is_estimate ? " [posterior estimate]" : "") << ", cost "
                     << format_number(o.result.ledger.spent) << ", iterations " << o.result.outer_iterations << '\n';
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min<int>(workers, static_cast<int>(res.runs.size()));
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::ofstream failures((std::filesystem::path(out_dir) / "failures.csv").string());
    failures << "method,seed,message\n";
    for (Method m : cfg.methods) {
        std::vector<std::vector<TracePoint>> traces;
        for (const auto& o : res.runs) {
            if (o.method != m) continue;
            if (o.result.failed) {
                ++res.failures;
                std::string msg = o.result.failure;
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                std::replace(msg.begin(), msg.end(), ',', ';');
                failures << to_string(m) << ',' << o.seed << ',' << msg << '\n';
                continue;
            }
            traces.push_back(o.result.trace);
        }
        res.summary.push_back(summarize(to_string(m), cfg.objective.name, traces,
                                        optimum));
    }
    write_summary((std::filesystem::path(out_dir) / "summary.csv").string(), res.summary);
    return res;
}

/// Recomputes the summary from the trace files written by run_experiment.
inline std::vector<SummaryRow> summary_from_traces(const ExperimentConfig& cfg, const ExperimentResult& res) {
    const std::optional<double> optimum = known_optimum_value(cfg.objective);
    std::vector<SummaryRow> rows;
    for (Method m : cfg.methods) {
        std::vector<std::vector<TracePoint>> traces;
        for (const auto& o : res.runs)
            if (o.method == m && !o.result.failed) traces.push_back(read_trace(o.trace_file));
        rows.push_back(summarize(to_string(m), cfg.objective.name, traces,
                                 optimum));
    }
    return rows;
}

}  // namespace nfwbo
