#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sparselab/experiment.hpp"

namespace {

// Precedence: --out flag, then SPARSELAB_OUT, then the config's output_dir.
std::string resolve_root(const std::string& flag, const std::string& config_dir) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("SPARSELAB_OUT"); env && *env) return env;
    return config_dir;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparselab: sparse training experiments"};
    app.require_subcommand(1);

    std::string config_path, exp_dir, out_flag;
    int jobs = 1;

    auto* run = app.add_subcommand("run", "train every seed cell of a config");
    run->add_option("config", config_path, "experiment config (json)")->required();
    run->add_option("-j,--jobs", jobs, "parallel cells");
    run->add_option("--out", out_flag, "output root (overrides SPARSELAB_OUT)");

    auto* report = app.add_subcommand("report", "rebuild tables from stored artifacts");
    report->add_option("dir", exp_dir, "experiment directory")->required();

    auto* validate = app.add_subcommand("validate", "dry-run a config: schedule grid and flops");
    validate->add_option("config", config_path, "experiment config (json)")->required();

    auto* probe = app.add_subcommand("probe", "run the plasticity probe sweep of a config");
    probe->add_option("config", config_path, "experiment config (json)")->required();
    probe->add_option("-j,--jobs", jobs, "parallel cells");
    probe->add_option("--out", out_flag, "output root (overrides SPARSELAB_OUT)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            const auto cfg = sparselab::ExperimentConfig::parse_file(config_path);
            return sparselab::run_experiment(cfg, resolve_root(out_flag, cfg.output_dir), jobs,
                                             std::cout);
        }
        if (report->parsed()) {
            return sparselab::report_experiment(exp_dir, std::cout);
        }
        if (validate->parsed()) {
            const auto cfg = sparselab::ExperimentConfig::parse_file(config_path);
            return sparselab::validate_experiment(cfg, std::cout);
        }
        const auto cfg = sparselab::ExperimentConfig::parse_file(config_path);
        return sparselab::probe_experiment(cfg, resolve_root(out_flag, cfg.output_dir), jobs,
                                           std::cout);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
