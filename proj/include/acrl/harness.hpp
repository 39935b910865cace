#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "acrl/active.hpp"
#include "acrl/agent.hpp"
#include "acrl/envs.hpp"
#include "acrl/nn.hpp"
#include "acrl/reward_model.hpp"

namespace acrl {

enum class RunMode { Oracle, Static, Acrl, FullUpdate };

const char* mode_name(RunMode mode);

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& message)
        : std::runtime_error("config error at '" + field + "': " + message), field(field) {}
    std::string field;
};

struct AgentConfig {
    double gamma = 0.95;
    std::size_t buffer_capacity = 20000;
    int batch_size = 32;
    int optimize_every = 1;
    int sync_every = 100;  // optimize steps between target syncs
    std::vector<int> q_hidden = {64, 64};
    double q_learning_rate = 1e-3;
    double eps_start = 1.0;
    double eps_end = 0.01;
    double eps_lambda = 0.0;
    long eps_horizon = 4800;
    // recompute sampled rewards from the current committee instead of using
    // the stored at-visit values
    bool recompute_rewards = false;
};

struct RewardModelConfig {
    int members = 3;
    std::vector<int> hidden = {64, 64};
    double split_fraction = 0.9;
    nn::TrainParams train;
    int retrain_every = 500;
    bool finetune = false;
    AcquisitionStrategy acquisition;
};

struct InitialDatasetConfig {
    int size = 500;
    // profile: random feasible walk away from the uniform start
    int walk_steps = 30;
    double constraint_lo = 0.0;  // 0/0 means "use the env interval"
    double constraint_hi = 0.0;
    // token sequences; the token range narrows the sampled alphabet so runs
    // can start from data that misses part of the space
    int len_min = 1;
    int len_max = 3;
    int token_lo = 0;
    int token_hi = -1;  // -1 means vocab - 1
};

struct ExperimentConfig {
    std::string env_type = "seq";  // profile | seq | improve
    ProfileEnvConfig profile;
    SeqEnvConfig seq;
    ImproveEnvConfig improve;
    int latency_ms = 0;

    AgentConfig agent;
    RewardModelConfig reward_model;
    InitialDatasetConfig initial_dataset;

    RunMode mode = RunMode::Acrl;
    long episodes = 1000;
    std::uint64_t seed_run = 1;
    std::uint64_t seed_oracle = 7;
    std::uint64_t seed_model = 21;

    int spot_check_every = 0;     // 0 disables ground-truth spot checks
    bool spot_check_final = false;  // check the episode's final state instead
                                    // of a random visited one
    std::string output_dir = "out/run";
    std::string label;  // defaults to "<env>-<mode>"
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& json_text);
std::string dump_config(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg);

struct RunResult {
    std::filesystem::path metrics_path;
    std::filesystem::path meta_path;
    std::uint64_t oracle_queries = 0;
    std::uint64_t model_queries = 0;
    std::uint64_t initial_dataset_size = 0;
    std::uint64_t acquisition_oracle_calls = 0;
    std::uint64_t spot_check_misses = 0;
    long episodes_completed = 0;
    bool diverged = false;
};

// Runs the full training loop for the configured mode and writes metrics,
// acquisition log, member datasets, checkpoints and a run_meta.json into the
// output directory. Deterministic given the config seeds.
RunResult run_experiment(const ExperimentConfig& cfg);

// model-to-oracle query ratio
double speedup(std::uint64_t oracle_queries, std::uint64_t model_queries);

// Per-run final-window statistics (median episode return over the last 10% of
// episodes) plus aggregated rows per label, as delimited text.
std::string compare_report(const std::vector<std::filesystem::path>& metrics_files);

// fixed metrics header (RunMetrics field order)
extern const char* const kMetricsHeader;

}  // namespace acrl
