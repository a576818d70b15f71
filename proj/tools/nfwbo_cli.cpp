#include "nfwbo/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRunFailures = 2;

std::string default_output_dir(const nfwbo::ExperimentConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("NFWBO_OUTPUT_DIR"); env && *env) return env;
    return "nfwbo_results";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-fidelity Bayesian optimization with learned fidelity warping"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int workers = 1;
    auto* run = app.add_subcommand("run", "Run every (method, seed) pair of an experiment config");
    run->add_option("--config", config_path, "Experiment JSON file")->required();
    run->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "Output directory (default: config output_dir, then $NFWBO_OUTPUT_DIR)");

    auto* list = app.add_subcommand("list-objectives", "List the built-in objectives");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", validate_path, "Experiment JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (*list) {
        for (const auto& [name, desc] : nfwbo::synthetic_objectives()) {
            const auto spec = nfwbo::make_synthetic(name);
            std::cout << name << "\t" << spec.design_box.dim() << "-D\toptimum " << nfwbo::format_number(spec.known_optimum->value)
                      << "\t" << desc << '\n';
        }
        std::cout << "external\tn-D\tunknown\tchild process speaking line-delimited JSON (objective.command, objective.dim)\n";
        return kOk;
    }

    if (*validate) {
        try {
            const auto cfg = nfwbo::load_config(validate_path);
            std::cout << "ok: " << cfg.methods.size() << " method(s) x " << cfg.seeds.size() << " seed(s) on "
                      << cfg.objective.name << ", budget " << cfg.budget << '\n';
            return kOk;
        } catch (const nfwbo::ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return kConfigError;
        }
    }

    nfwbo::ExperimentConfig cfg;
    try {
        cfg = nfwbo::load_config(config_path);
    } catch (const nfwbo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    }
    if (out_dir.empty()) out_dir = default_output_dir(cfg);
    try {
        const auto res = nfwbo::run_experiment(cfg, workers, out_dir, &std::cerr);
        std::cout << nfwbo::summary_header() << '\n';
        for (const auto& r : res.summary)
            std::cout << r.method << ',' << r.objective << ',' << r.seeds << ',' << nfwbo::format_number(r.mean_best) << ','
                      << nfwbo::format_number(r.std_best) << ',' << nfwbo::format_number(r.mean_cost_to_95pct) << '\n';
        std::cerr << "wrote " << res.output_dir << "/summary.csv\n";
        return res.failures > 0 ? kRunFailures : kOk;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRunFailures;
    }
}
