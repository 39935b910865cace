#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acrl/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitDivergence = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ACRL benchmark harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::uint64_t seed_override = 0;
    bool has_seed = false;

    CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
    run->add_option("--config", config_path, "config file (JSON)")->required();
    run->add_option("--seed", seed_override, "override the run seed")
        ->each([&](const std::string&) { has_seed = true; });
    run->add_option("--out", out_override, "override the output directory");

    CLI::App* validate = app.add_subcommand("validate", "validate a config and echo it with defaults filled");
    validate->add_option("--config", config_path, "config file (JSON)")->required();

    std::vector<std::string> report_inputs;
    std::string report_out;
    CLI::App* report = app.add_subcommand("report", "summarize metrics files into one table");
    report->add_option("--inputs", report_inputs, "metrics.csv files")->required()->expected(-1);
    report->add_option("--out", report_out, "summary output path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            acrl::ExperimentConfig cfg = acrl::load_config(config_path);
            if (has_seed) cfg.seed_run = seed_override;
            if (!out_override.empty()) cfg.output_dir = out_override;
            acrl::validate_config(cfg);
            const acrl::RunResult result = acrl::run_experiment(cfg);
            std::cout << "run " << cfg.label << " seed=" << cfg.seed_run
                      << " episodes=" << result.episodes_completed
                      << " oracle_queries=" << result.oracle_queries
                      << " model_queries=" << result.model_queries
                      << " metrics=" << result.metrics_path.string() << '\n';
            if (result.diverged) {
                std::cerr << "run aborted: training diverged\n";
                return kExitDivergence;
            }
            return kExitOk;
        }
        if (validate->parsed()) {
            const acrl::ExperimentConfig cfg = acrl::load_config(config_path);
            std::cout << acrl::dump_config(cfg) << '\n';
            return kExitOk;
        }
        if (report->parsed()) {
            std::vector<std::filesystem::path> inputs(report_inputs.begin(), report_inputs.end());
            const std::string table = acrl::compare_report(inputs);
            std::ofstream out(report_out);
            if (!out) {
                std::cerr << "cannot open " << report_out << " for writing\n";
                return kExitConfigError;
            }
            out << table;
            std::cout << table;
            return kExitOk;
        }
    } catch (const acrl::ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfigError;
    }
    return kExitOk;
}
