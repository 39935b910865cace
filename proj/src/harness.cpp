#include "acrl/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace acrl {

using nlohmann::json;

const char* const kMetricsHeader =
    "episode,episode_return,model_return,spot_check,epsilon,oracle_queries,"
    "model_queries,buffer_size,retrain";

const char* mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::Oracle: return "oracle";
        case RunMode::Static: return "static";
        case RunMode::Acrl: return "acrl";
        case RunMode::FullUpdate: return "full_update";
    }
    return "unknown";
}

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

RunMode parse_mode(const std::string& s, const std::string& path) {
    if (s == "oracle") return RunMode::Oracle;
    if (s == "static") return RunMode::Static;
    if (s == "acrl") return RunMode::Acrl;
    if (s == "full_update") return RunMode::FullUpdate;
    throw ConfigError(path, "unknown mode '" + s + "'");
}

StrategyKind parse_strategy(const std::string& s, const std::string& path) {
    if (s == "random") return StrategyKind::Random;
    if (s == "committee_std") return StrategyKind::CommitteeStd;
    if (s == "binned") return StrategyKind::Binned;
    if (s == "predicted_value") return StrategyKind::PredictedValue;
    if (s == "grad_norm") return StrategyKind::GradNorm;
    throw ConfigError(path, "unknown acquisition strategy '" + s + "'");
}

// JSON access with field-path error reporting.
struct Cursor {
    const json* node;
    std::string path;

    bool has(const char* key) const { return node && node->contains(key); }

    Cursor child(const char* key) const {
        if (!has(key)) return Cursor{nullptr, path + "." + key};
        return Cursor{&(*node)[key], path.empty() ? key : path + "." + key};
    }

    template <typename T>
    T get(const char* key, T fallback) const {
        if (!has(key)) return fallback;
        try {
            return (*node)[key].get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path.empty() ? key : path + "." + key, e.what());
        }
    }
};

void parse_env(const Cursor& env, ExperimentConfig& cfg) {
    cfg.env_type = env.get<std::string>("type", cfg.env_type);
    cfg.latency_ms = env.get<int>("latency_ms", cfg.latency_ms);

    const Cursor p = env.child("profile");
    if (p.node) {
        cfg.profile.sections_per_side = p.get<int>("sections_per_side", cfg.profile.sections_per_side);
        cfg.profile.step = p.get<double>("step", cfg.profile.step);
        cfg.profile.constraint_lo = p.get<double>("constraint_lo", cfg.profile.constraint_lo);
        cfg.profile.constraint_hi = p.get<double>("constraint_hi", cfg.profile.constraint_hi);
        cfg.profile.horizon = p.get<int>("horizon", cfg.profile.horizon);
        cfg.profile.coeff_bound_dev = p.get<double>("coeff_bound_dev", cfg.profile.coeff_bound_dev);
        const Cursor d = p.child("drag");
        if (d.node) {
            cfg.profile.drag.offset = d.get<double>("offset", cfg.profile.drag.offset);
            cfg.profile.drag.mean_weight = d.get<double>("mean_weight", cfg.profile.drag.mean_weight);
            cfg.profile.drag.linear_scale = d.get<double>("linear_scale", cfg.profile.drag.linear_scale);
            cfg.profile.drag.quad_scale = d.get<double>("quad_scale", cfg.profile.drag.quad_scale);
            cfg.profile.drag.alternation_weight =
                d.get<double>("alternation_weight", cfg.profile.drag.alternation_weight);
        }
    }

    const Cursor s = env.child("seq");
    if (s.node) {
        cfg.seq.vocab = s.get<int>("vocab", cfg.seq.vocab);
        cfg.seq.max_len = s.get<int>("max_len", cfg.seq.max_len);
        cfg.seq.horizon = s.get<int>("horizon", cfg.seq.horizon);
        cfg.seq.feature_width = s.get<int>("feature_width", cfg.seq.feature_width);
        const Cursor q = s.child("property");
        if (q.node) {
            cfg.seq.property.weight_scale = q.get<double>("weight_scale", cfg.seq.property.weight_scale);
            cfg.seq.property.distinct_penalty =
                q.get<double>("distinct_penalty", cfg.seq.property.distinct_penalty);
            cfg.seq.property.run_penalty = q.get<double>("run_penalty", cfg.seq.property.run_penalty);
            cfg.seq.property.run_threshold = q.get<int>("run_threshold", cfg.seq.property.run_threshold);
        }
    }

    const Cursor im = env.child("improve");
    if (im.node) {
        cfg.improve.horizon = im.get<int>("horizon", cfg.improve.horizon);
        cfg.improve.start_len_min = im.get<int>("start_len_min", cfg.improve.start_len_min);
        cfg.improve.start_len_max = im.get<int>("start_len_max", cfg.improve.start_len_max);
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError("<root>", e.what());
    }
    ExperimentConfig cfg;
    const Cursor top{&root, ""};

    parse_env(top.child("env"), cfg);

    const Cursor agent = top.child("agent");
    if (agent.node) {
        cfg.agent.gamma = agent.get<double>("gamma", cfg.agent.gamma);
        cfg.agent.buffer_capacity = agent.get<std::size_t>("buffer_capacity", cfg.agent.buffer_capacity);
        cfg.agent.batch_size = agent.get<int>("batch_size", cfg.agent.batch_size);
        cfg.agent.optimize_every = agent.get<int>("optimize_every", cfg.agent.optimize_every);
        cfg.agent.sync_every = agent.get<int>("sync_every", cfg.agent.sync_every);
        cfg.agent.q_hidden = agent.get<std::vector<int>>("q_hidden", cfg.agent.q_hidden);
        cfg.agent.q_learning_rate = agent.get<double>("q_learning_rate", cfg.agent.q_learning_rate);
        cfg.agent.recompute_rewards = agent.get<bool>("recompute_rewards", cfg.agent.recompute_rewards);
        const Cursor eps = agent.child("epsilon");
        if (eps.node) {
            cfg.agent.eps_start = eps.get<double>("start", cfg.agent.eps_start);
            cfg.agent.eps_end = eps.get<double>("end", cfg.agent.eps_end);
            cfg.agent.eps_lambda = eps.get<double>("lambda", cfg.agent.eps_lambda);
            cfg.agent.eps_horizon = eps.get<long>("horizon", cfg.agent.eps_horizon);
        }
    }

    const Cursor rm = top.child("reward_model");
    if (rm.node) {
        cfg.reward_model.members = rm.get<int>("members", cfg.reward_model.members);
        cfg.reward_model.hidden = rm.get<std::vector<int>>("hidden", cfg.reward_model.hidden);
        cfg.reward_model.split_fraction = rm.get<double>("split_fraction", cfg.reward_model.split_fraction);
        cfg.reward_model.retrain_every = rm.get<int>("retrain_every", cfg.reward_model.retrain_every);
        const std::string retrain_mode = rm.get<std::string>("retrain_mode", "scratch");
        if (retrain_mode != "scratch" && retrain_mode != "finetune")
            throw ConfigError("reward_model.retrain_mode", "must be 'scratch' or 'finetune'");
        cfg.reward_model.finetune = retrain_mode == "finetune";
        const Cursor train = rm.child("train");
        if (train.node) {
            cfg.reward_model.train.epochs = train.get<int>("epochs", cfg.reward_model.train.epochs);
            cfg.reward_model.train.batch_size = train.get<int>("batch_size", cfg.reward_model.train.batch_size);
            cfg.reward_model.train.adam.learning_rate =
                train.get<double>("learning_rate", cfg.reward_model.train.adam.learning_rate);
            cfg.reward_model.train.max_train_rows =
                train.get<int>("max_train_rows", cfg.reward_model.train.max_train_rows);
        }
        const Cursor acq = rm.child("acquisition");
        if (acq.node) {
            cfg.reward_model.acquisition.kind = parse_strategy(
                acq.get<std::string>("strategy", "committee_std"), "reward_model.acquisition.strategy");
            cfg.reward_model.acquisition.num_bins = acq.get<int>("bins", cfg.reward_model.acquisition.num_bins);
            cfg.reward_model.acquisition.budget = acq.get<int>("budget", cfg.reward_model.acquisition.budget);
            cfg.reward_model.acquisition.window_size =
                acq.get<int>("window", cfg.reward_model.acquisition.window_size);
            cfg.reward_model.acquisition.every = acq.get<int>("every", cfg.reward_model.acquisition.every);
        }
    }

    const Cursor init = top.child("initial_dataset");
    if (init.node) {
        cfg.initial_dataset.size = init.get<int>("size", cfg.initial_dataset.size);
        cfg.initial_dataset.walk_steps = init.get<int>("walk_steps", cfg.initial_dataset.walk_steps);
        cfg.initial_dataset.constraint_lo = init.get<double>("constraint_lo", cfg.initial_dataset.constraint_lo);
        cfg.initial_dataset.constraint_hi = init.get<double>("constraint_hi", cfg.initial_dataset.constraint_hi);
        cfg.initial_dataset.len_min = init.get<int>("len_min", cfg.initial_dataset.len_min);
        cfg.initial_dataset.len_max = init.get<int>("len_max", cfg.initial_dataset.len_max);
        cfg.initial_dataset.token_lo = init.get<int>("token_lo", cfg.initial_dataset.token_lo);
        cfg.initial_dataset.token_hi = init.get<int>("token_hi", cfg.initial_dataset.token_hi);
    }

    cfg.mode = parse_mode(top.get<std::string>("mode", "acrl"), "mode");
    // a missing acquisition block means "no acquisition" outside acrl mode
    if (cfg.mode != RunMode::Acrl && !(rm.node && rm.has("acquisition"))) {
        cfg.reward_model.acquisition.budget = 0;
    }
    cfg.episodes = top.get<long>("episodes", cfg.episodes);

    const Cursor seeds = top.child("seeds");
    if (seeds.node) {
        cfg.seed_run = seeds.get<std::uint64_t>("run", cfg.seed_run);
        cfg.seed_oracle = seeds.get<std::uint64_t>("oracle", cfg.seed_oracle);
        cfg.seed_model = seeds.get<std::uint64_t>("model", cfg.seed_model);
    }

    const Cursor spot = top.child("spot_check");
    if (spot.node) {
        cfg.spot_check_every = spot.get<int>("every", cfg.spot_check_every);
        const std::string target = spot.get<std::string>("target", "random");
        if (target != "random" && target != "final")
            throw ConfigError("spot_check.target", "must be 'random' or 'final'");
        cfg.spot_check_final = target == "final";
    }

    cfg.output_dir = top.get<std::string>("output_dir", cfg.output_dir);
    cfg.label = top.get<std::string>("label", cfg.label);
    if (cfg.label.empty()) cfg.label = cfg.env_type + "-" + mode_name(cfg.mode);

    validate_config(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
    json root;
    root["env"]["type"] = cfg.env_type;
    root["env"]["latency_ms"] = cfg.latency_ms;
    root["env"]["profile"] = {
        {"sections_per_side", cfg.profile.sections_per_side},
        {"step", cfg.profile.step},
        {"constraint_lo", cfg.profile.constraint_lo},
        {"constraint_hi", cfg.profile.constraint_hi},
        {"horizon", cfg.profile.horizon},
        {"coeff_bound_dev", cfg.profile.coeff_bound_dev},
        {"drag",
         {{"offset", cfg.profile.drag.offset},
          {"mean_weight", cfg.profile.drag.mean_weight},
          {"linear_scale", cfg.profile.drag.linear_scale},
          {"quad_scale", cfg.profile.drag.quad_scale},
          {"alternation_weight", cfg.profile.drag.alternation_weight}}}};
    root["env"]["seq"] = {
        {"vocab", cfg.seq.vocab},
        {"max_len", cfg.seq.max_len},
        {"horizon", cfg.seq.horizon},
        {"feature_width", cfg.seq.feature_width},
        {"property",
         {{"weight_scale", cfg.seq.property.weight_scale},
          {"distinct_penalty", cfg.seq.property.distinct_penalty},
          {"run_penalty", cfg.seq.property.run_penalty},
          {"run_threshold", cfg.seq.property.run_threshold}}}};
    root["env"]["improve"] = {{"horizon", cfg.improve.horizon},
                              {"start_len_min", cfg.improve.start_len_min},
                              {"start_len_max", cfg.improve.start_len_max}};
    root["agent"] = {{"gamma", cfg.agent.gamma},
                     {"buffer_capacity", cfg.agent.buffer_capacity},
                     {"batch_size", cfg.agent.batch_size},
                     {"optimize_every", cfg.agent.optimize_every},
                     {"sync_every", cfg.agent.sync_every},
                     {"q_hidden", cfg.agent.q_hidden},
                     {"q_learning_rate", cfg.agent.q_learning_rate},
                     {"recompute_rewards", cfg.agent.recompute_rewards},
                     {"epsilon",
                      {{"start", cfg.agent.eps_start},
                       {"end", cfg.agent.eps_end},
                       {"lambda", cfg.agent.eps_lambda},
                       {"horizon", cfg.agent.eps_horizon}}}};
    root["reward_model"] = {
        {"members", cfg.reward_model.members},
        {"hidden", cfg.reward_model.hidden},
        {"split_fraction", cfg.reward_model.split_fraction},
        {"retrain_every", cfg.reward_model.retrain_every},
        {"retrain_mode", cfg.reward_model.finetune ? "finetune" : "scratch"},
        {"train",
         {{"epochs", cfg.reward_model.train.epochs},
          {"batch_size", cfg.reward_model.train.batch_size},
          {"learning_rate", cfg.reward_model.train.adam.learning_rate},
          {"max_train_rows", cfg.reward_model.train.max_train_rows}}},
        {"acquisition",
         {{"strategy", strategy_name(cfg.reward_model.acquisition.kind)},
          {"bins", cfg.reward_model.acquisition.num_bins},
          {"budget", cfg.reward_model.acquisition.budget},
          {"window", cfg.reward_model.acquisition.window_size},
          {"every", cfg.reward_model.acquisition.every}}}};
    root["initial_dataset"] = {{"size", cfg.initial_dataset.size},
                               {"walk_steps", cfg.initial_dataset.walk_steps},
                               {"constraint_lo", cfg.initial_dataset.constraint_lo},
                               {"constraint_hi", cfg.initial_dataset.constraint_hi},
                               {"len_min", cfg.initial_dataset.len_min},
                               {"len_max", cfg.initial_dataset.len_max},
                               {"token_lo", cfg.initial_dataset.token_lo},
                               {"token_hi", cfg.initial_dataset.token_hi}};
    root["mode"] = mode_name(cfg.mode);
    root["episodes"] = cfg.episodes;
    root["seeds"] = {{"run", cfg.seed_run}, {"oracle", cfg.seed_oracle}, {"model", cfg.seed_model}};
    root["spot_check"] = {{"every", cfg.spot_check_every},
                          {"target", cfg.spot_check_final ? "final" : "random"}};
    root["output_dir"] = cfg.output_dir;
    root["label"] = cfg.label;
    return root.dump(2);
}

std::unique_ptr<Environment> make_environment(const ExperimentConfig& cfg) {
    if (cfg.env_type == "profile") {
        ProfileEnvConfig pc = cfg.profile;
        pc.oracle_seed = cfg.seed_oracle;
        return std::make_unique<ProfileEnv>(pc);
    }
    if (cfg.env_type == "seq") {
        SeqEnvConfig sc = cfg.seq;
        sc.oracle_seed = cfg.seed_oracle;
        return std::make_unique<SeqEnv>(sc);
    }
    if (cfg.env_type == "improve") {
        ImproveEnvConfig ic = cfg.improve;
        ic.seq = cfg.seq;
        ic.seq.oracle_seed = cfg.seed_oracle;
        return std::make_unique<ImproveEnv>(ic);
    }
    throw ConfigError("env.type", "unknown environment '" + cfg.env_type + "'");
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.episodes < 1) throw ConfigError("episodes", "must be >= 1");
    if (cfg.agent.gamma < 0.0 || cfg.agent.gamma > 1.0)
        throw ConfigError("agent.gamma", "must be in [0, 1]");
    if (cfg.agent.batch_size < 1) throw ConfigError("agent.batch_size", "must be >= 1");
    if (cfg.agent.buffer_capacity < static_cast<std::size_t>(cfg.agent.batch_size))
        throw ConfigError("agent.buffer_capacity", "must be >= batch_size");
    if (cfg.agent.optimize_every < 1) throw ConfigError("agent.optimize_every", "must be >= 1");
    if (cfg.agent.sync_every < 1) throw ConfigError("agent.sync_every", "must be >= 1");
    if (cfg.agent.q_hidden.empty()) throw ConfigError("agent.q_hidden", "must not be empty");
    for (int h : cfg.agent.q_hidden) {
        if (h < 1) throw ConfigError("agent.q_hidden", "layer widths must be >= 1");
    }
    try {
        EpsilonSchedule::make(cfg.agent.eps_start, cfg.agent.eps_end, cfg.agent.eps_lambda,
                              cfg.agent.eps_horizon);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("agent.epsilon", e.what());
    }
    try {
        make_environment(cfg);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError("env", e.what());
    }

    const bool use_model = cfg.mode != RunMode::Oracle;
    if (use_model) {
        if (cfg.reward_model.members < 1) throw ConfigError("reward_model.members", "must be >= 1");
        if (cfg.reward_model.split_fraction <= 0.0 || cfg.reward_model.split_fraction > 1.0)
            throw ConfigError("reward_model.split_fraction", "must be in (0, 1]");
        if (cfg.reward_model.hidden.empty())
            throw ConfigError("reward_model.hidden", "must not be empty");
        if (cfg.reward_model.train.epochs < 0)
            throw ConfigError("reward_model.train.epochs", "must be >= 0");
        if (cfg.reward_model.train.batch_size < 1)
            throw ConfigError("reward_model.train.batch_size", "must be >= 1");
        if (cfg.initial_dataset.size < 1) throw ConfigError("initial_dataset.size", "must be >= 1");
    }
    if (cfg.mode == RunMode::Acrl) {
        const AcquisitionStrategy& a = cfg.reward_model.acquisition;
        if (a.budget < 1) throw ConfigError("reward_model.acquisition.budget", "must be >= 1 in acrl mode");
        if (a.window_size < a.budget)
            throw ConfigError("reward_model.acquisition.window", "must be >= budget");
        if (a.every < 1) throw ConfigError("reward_model.acquisition.every", "must be >= 1");
        if (a.kind == StrategyKind::Binned && a.num_bins < 1)
            throw ConfigError("reward_model.acquisition.bins", "must be >= 1");
        if (cfg.reward_model.retrain_every < 1)
            throw ConfigError("reward_model.retrain_every", "must be >= 1");
    } else if (cfg.reward_model.acquisition.budget > 0) {
        throw ConfigError("reward_model.acquisition.budget",
                          std::string("mode '") + mode_name(cfg.mode) + "' forbids acquisition");
    }
    if (cfg.agent.recompute_rewards && cfg.env_type == "improve")
        throw ConfigError("agent.recompute_rewards",
                          "reward recomputation needs episode start values and is not "
                          "supported for the improvement environment");
    if (cfg.spot_check_every < 0) throw ConfigError("spot_check.every", "must be >= 0");
    if (cfg.initial_dataset.len_min < 0 || cfg.initial_dataset.len_max < cfg.initial_dataset.len_min)
        throw ConfigError("initial_dataset.len_max", "must be >= len_min >= 0");
    if (cfg.env_type != "profile") {
        const int token_hi = cfg.initial_dataset.token_hi < 0 ? cfg.seq.vocab - 1
                                                              : cfg.initial_dataset.token_hi;
        if (cfg.initial_dataset.token_lo < 0 || token_hi < cfg.initial_dataset.token_lo ||
            token_hi >= cfg.seq.vocab)
            throw ConfigError("initial_dataset.token_hi", "token range must lie inside the vocabulary");
    }
    if (cfg.output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
}

double speedup(std::uint64_t oracle_queries, std::uint64_t model_queries) {
    if (oracle_queries == 0) throw std::invalid_argument("speedup: zero oracle queries");
    return static_cast<double>(model_queries) / static_cast<double>(oracle_queries);
}

namespace {

LabeledDataset build_initial_dataset(const ExperimentConfig& cfg, const Environment& env,
                                     InstrumentedOracle& oracle) {
    Rng rng(derive_seed(cfg.seed_model, "initial-data"));
    LabeledDataset data(env.feature_dim(), env.value_dim());
    const int target_size = cfg.initial_dataset.size;
    const long max_attempts = 200L * target_size + 1000;

    const auto* profile_env = dynamic_cast<const ProfileEnv*>(&env);
    double lo = cfg.initial_dataset.constraint_lo;
    double hi = cfg.initial_dataset.constraint_hi;
    if (profile_env && lo == 0.0 && hi == 0.0) {
        lo = profile_env->config().constraint_lo;
        hi = profile_env->config().constraint_hi;
    }

    for (long attempt = 0; attempt < max_attempts && data.size() < static_cast<std::size_t>(target_size);
         ++attempt) {
        State state;
        if (profile_env) {
            DenseState s;
            const int d = profile_env->config().sections_per_side;
            s.per_side = d;
            s.side_target[0] = rng.uniform(lo, hi);
            s.side_target[1] = rng.uniform(lo, hi);
            s.values.assign(static_cast<std::size_t>(2 * d), 0.0);
            for (int side = 0; side < 2; ++side) {
                for (int i = 0; i < d; ++i) s.values[static_cast<std::size_t>(side * d + i)] = s.side_target[side];
            }
            state = std::move(s);
            for (int w = 0; w < cfg.initial_dataset.walk_steps; ++w) {
                auto succ = env.successors(state);
                state = std::move(succ[rng.below(succ.size())].second);
            }
        } else {
            const int token_lo = cfg.initial_dataset.token_lo;
            const int token_hi = cfg.initial_dataset.token_hi < 0 ? cfg.seq.vocab - 1
                                                                  : cfg.initial_dataset.token_hi;
            const int len = rng.uniform_int(cfg.initial_dataset.len_min,
                                            std::min(cfg.initial_dataset.len_max, cfg.seq.max_len));
            TokenState s;
            s.tokens.reserve(static_cast<std::size_t>(len));
            for (int i = 0; i < len; ++i) s.tokens.push_back(rng.uniform_int(token_lo, token_hi));
            state = std::move(s);
        }
        DatasetRow row{env.features(state), oracle.evaluate(state), Provenance::Initial};
        data.append(std::move(row));
    }
    if (data.size() < static_cast<std::size_t>(target_size)) {
        std::cerr << "initial dataset: only " << data.size() << " distinct states found (requested "
                  << target_size << ")\n";
    }
    if (data.empty()) throw std::runtime_error("initial dataset: no states generated");
    return data;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

struct MetricsSummary {
    std::string label;
    std::string mode;
    std::uint64_t seed = 0;
    long episodes = 0;
    long window = 0;
    double median_return = 0.0;
    double mean_return = 0.0;
    std::uint64_t oracle_queries = 0;
    std::uint64_t model_queries = 0;
};

MetricsSummary summarize_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("compare_report: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw std::runtime_error("compare_report: unexpected columns in " + path.string() +
                                 ": got '" + line + "', expected '" + kMetricsHeader + "'");
    std::vector<double> returns;
    std::uint64_t oracle_q = 0;
    std::uint64_t model_q = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() != 9)
            throw std::runtime_error("compare_report: malformed row in " + path.string());
        returns.push_back(std::strtod(cells[1].c_str(), nullptr));
        oracle_q = std::strtoull(cells[5].c_str(), nullptr, 10);
        model_q = std::strtoull(cells[6].c_str(), nullptr, 10);
    }
    if (returns.empty()) throw std::runtime_error("compare_report: no rows in " + path.string());

    MetricsSummary s;
    s.episodes = static_cast<long>(returns.size());
    s.window = std::max<long>(1, s.episodes / 10);
    std::vector<double> tail(returns.end() - s.window, returns.end());
    s.median_return = median(tail);
    double sum = 0.0;
    for (double v : tail) sum += v;
    s.mean_return = sum / static_cast<double>(s.window);
    s.oracle_queries = oracle_q;
    s.model_queries = model_q;

    const std::filesystem::path meta_path = path.parent_path() / "run_meta.json";
    s.label = path.stem().string();
    if (std::filesystem::exists(meta_path)) {
        std::ifstream meta_in(meta_path);
        try {
            json meta = json::parse(meta_in);
            s.label = meta.value("label", s.label);
            s.mode = meta.value("mode", s.mode);
            s.seed = meta.value("seed_run", s.seed);
        } catch (const json::exception&) {
            // metrics stay authoritative when the sidecar is unreadable
        }
    }
    return s;
}

}  // namespace

std::string compare_report(const std::vector<std::filesystem::path>& metrics_files) {
    if (metrics_files.empty()) throw std::invalid_argument("compare_report: no inputs");
    std::vector<MetricsSummary> runs;
    runs.reserve(metrics_files.size());
    for (const auto& path : metrics_files) runs.push_back(summarize_metrics(path));
    std::stable_sort(runs.begin(), runs.end(), [](const MetricsSummary& a, const MetricsSummary& b) {
        if (a.label != b.label) return a.label < b.label;
        if (a.mode != b.mode) return a.mode < b.mode;
        return a.seed < b.seed;
    });

    std::string out =
        "scope,label,mode,seed,episodes,window_episodes,median_return,mean_return,"
        "oracle_queries,model_queries,speedup\n";
    auto emit = [&](const char* scope, const MetricsSummary& s, const std::string& seed_text) {
        out += scope;
        out += ',' + s.label + ',' + s.mode + ',' + seed_text + ',' + std::to_string(s.episodes) +
               ',' + std::to_string(s.window) + ',' + g17(s.median_return) + ',' +
               g17(s.mean_return) + ',' + std::to_string(s.oracle_queries) + ',' +
               std::to_string(s.model_queries) + ',' +
               (s.oracle_queries ? g17(speedup(s.oracle_queries, s.model_queries)) : "nan") + '\n';
    };
    for (const MetricsSummary& s : runs) emit("run", s, std::to_string(s.seed));

    std::map<std::pair<std::string, std::string>, std::vector<const MetricsSummary*>> groups;
    for (const MetricsSummary& s : runs) groups[{s.label, s.mode}].push_back(&s);
    for (const auto& [key, members] : groups) {
        if (members.size() < 2) continue;
        MetricsSummary agg;
        agg.label = key.first;
        agg.mode = key.second;
        std::vector<double> medians;
        std::vector<double> means;
        for (const MetricsSummary* s : members) {
            medians.push_back(s->median_return);
            means.push_back(s->mean_return);
            agg.episodes += s->episodes;
            agg.window += s->window;
            agg.oracle_queries += s->oracle_queries;
            agg.model_queries += s->model_queries;
        }
        agg.median_return = median(medians);
        double sum = 0.0;
        for (double v : means) sum += v;
        agg.mean_return = sum / static_cast<double>(means.size());
        emit("aggregate", agg, "all");
    }
    return out;
}

// ---------------------------------------------------------------------------
// run_experiment

RunResult run_experiment(const ExperimentConfig& cfg) {
    validate_config(cfg);
    const auto wall_start = std::chrono::steady_clock::now();
    const std::filesystem::path out_dir(cfg.output_dir);
    std::filesystem::create_directories(out_dir);

    const std::unique_ptr<Environment> env = make_environment(cfg);
    InstrumentedOracle oracle([&env](const State& s) { return env->evaluate(s); }, cfg.latency_ms);

    const bool use_model = cfg.mode != RunMode::Oracle;
    CommitteeTrainParams cparams;
    cparams.hidden = cfg.reward_model.hidden;
    cparams.train = cfg.reward_model.train;
    cparams.split_fraction = cfg.reward_model.split_fraction;
    cparams.finetune = cfg.reward_model.finetune;

    RunResult result;
    LabeledDataset initial;
    Committee committee;
    CommitteeData cdata;
    std::vector<std::ofstream> dataset_files;
    if (use_model) {
        initial = build_initial_dataset(cfg, *env, oracle);
        result.initial_dataset_size = initial.size();
        committee = build_committee(initial, cfg.reward_model.members, cparams, cfg.seed_model, &cdata);
        for (int m = 0; m < cfg.reward_model.members; ++m) {
            dataset_files.emplace_back(out_dir / ("dataset_member_" + std::to_string(m) + ".csv"));
            LabeledDataset::write_header(dataset_files.back(), initial.feature_dim(), initial.label_dim());
            for (const DatasetRow& row : initial.rows()) LabeledDataset::write_row(dataset_files.back(), row);
        }
    }

    const std::vector<int>& hidden = cfg.agent.q_hidden;
    std::vector<int> q_sizes;
    q_sizes.push_back(env->feature_dim());
    q_sizes.insert(q_sizes.end(), hidden.begin(), hidden.end());
    q_sizes.push_back(1);
    QFunction q = make_q_function(q_sizes, cfg.agent.gamma, derive_seed(cfg.seed_run, "qnet"));
    nn::AdamParams q_adam;
    q_adam.learning_rate = cfg.agent.q_learning_rate;
    nn::OptimizerState q_opt = nn::make_optimizer(q.online, q_adam);

    ReplayBuffer buffer(cfg.agent.buffer_capacity);
    ExperienceWindow window(static_cast<std::size_t>(
        std::max(1, cfg.reward_model.acquisition.window_size)));
    const EpsilonSchedule schedule = EpsilonSchedule::make(
        cfg.agent.eps_start, cfg.agent.eps_end, cfg.agent.eps_lambda, cfg.agent.eps_horizon);

    Rng env_rng(derive_seed(cfg.seed_run, "env"));
    Rng policy_rng(derive_seed(cfg.seed_run, "policy"));
    Rng spot_rng(derive_seed(cfg.seed_run, "spot"));
    Rng acq_rng(derive_seed(cfg.seed_run, "acquire"));

    std::uint64_t model_queries = 0;
    auto value_of = [&](const State& s) -> std::vector<double> {
        if (use_model) {
            ++model_queries;
            return committee_mean(committee, env->features(s));
        }
        return oracle.evaluate(s);
    };

    const RewardMode reward_mode = env->reward_mode();
    const auto* improvement = std::get_if<ImprovementFromStart>(&reward_mode);

    RewardOverride reward_override;
    if (cfg.agent.recompute_rewards) {
        reward_override = [&](const Transition& t) {
            return delta_reward(value_of(t.state)[0], value_of(t.next_state)[0]);
        };
    }

    result.metrics_path = out_dir / "metrics.csv";
    std::ofstream metrics(result.metrics_path);
    metrics << kMetricsHeader << '\n';
    std::ofstream acq_log(out_dir / "acquisition_log.csv");
    acq_log << "episode,strategy,candidate_count,selected_count,oracle_calls,wall_seconds\n";

    long opt_steps = 0;
    const int horizon = env->horizon();
    std::vector<State> visited;
    std::vector<std::vector<double>> succ_features;

    for (long episode = 1; episode <= cfg.episodes; ++episode) {
        State s = env->reset(env_rng);
        visited.clear();
        visited.push_back(s);
        if (cfg.mode == RunMode::Acrl) window.observe(s, env->features(s));

        bool diverged = false;
        double ep_return = 0.0;
        double model_return = 0.0;
        const double eps = schedule.at(episode - 1);
        std::vector<double> v0;
        std::vector<double> v_prev;
        try {
            v0 = value_of(s);
            v_prev = v0;
            double r_total_prev = 0.0;
            for (int step = 1; step <= horizon; ++step) {
                const auto successors = env->successors(s);
                succ_features.clear();
                succ_features.reserve(successors.size());
                for (const auto& [aid, next] : successors) succ_features.push_back(env->features(next));
                const std::size_t pick = select_action(q, succ_features, eps, policy_rng);
                const ActionId action = successors[pick].first;
                State s_next = successors[pick].second;

                const std::vector<double> v_next = value_of(s_next);
                double r = 0.0;
                if (improvement) {
                    const double r_total = improvement_reward(
                        v_next[static_cast<std::size_t>(improvement->primary_index)],
                        v0[static_cast<std::size_t>(improvement->primary_index)],
                        v_next[static_cast<std::size_t>(improvement->secondary_index)],
                        v0[static_cast<std::size_t>(improvement->secondary_index)]);
                    r = r_total - r_total_prev;
                    r_total_prev = r_total;
                } else {
                    r = delta_reward(v_prev[0], v_next[0]);
                }
                const bool terminal = step == horizon;
                buffer.add(Transition{s, action, r, s_next, terminal});
                if (cfg.mode == RunMode::Acrl) window.observe(s_next, succ_features[pick]);
                visited.push_back(s_next);
                ep_return += r;

                if (step % cfg.agent.optimize_every == 0) {
                    const OptimizeResult res =
                        optimize_step(q, buffer, static_cast<std::size_t>(cfg.agent.batch_size),
                                      policy_rng, q_opt, *env,
                                      reward_override ? &reward_override : nullptr);
                    if (!res.skipped && ++opt_steps % cfg.agent.sync_every == 0) sync_target(q);
                }
                s = std::move(s_next);
                v_prev = v_next;
            }
            model_return = improvement ? r_total_prev : delta_reward(v0[0], v_prev[0]);
        } catch (const DivergenceError& e) {
            std::cerr << "episode " << episode << ": " << e.what() << '\n';
            diverged = true;
            ep_return = std::numeric_limits<double>::quiet_NaN();
            model_return = std::numeric_limits<double>::quiet_NaN();
        }

        double spot = std::numeric_limits<double>::quiet_NaN();
        if (!diverged && cfg.spot_check_every > 0 && episode % cfg.spot_check_every == 0) {
            const State& probe =
                cfg.spot_check_final ? visited.back()
                                     : visited[static_cast<std::size_t>(spot_rng.below(visited.size()))];
            const std::uint64_t before = oracle.call_count();
            spot = oracle.evaluate(probe)[0];
            if (oracle.call_count() > before) ++result.spot_check_misses;
        }

        bool retrained = false;
        if (!diverged && cfg.mode == RunMode::Acrl) {
            if (episode % cfg.reward_model.acquisition.every == 0 && window.size() > 0) {
                const auto acq_start = std::chrono::steady_clock::now();
                const AcquisitionOutcome outcome = acquisition_round(
                    window, committee, cdata, oracle, cfg.reward_model.acquisition, acq_rng);
                for (int m = 0; m < cfg.reward_model.members; ++m) {
                    const auto& rows = outcome.rows_per_member[static_cast<std::size_t>(m)];
                    // mirror only rows that actually extend the dataset
                    for (const DatasetRow& row : rows) {
                        DatasetRow copy = row;
                        copy.prov = Provenance::Acquired;
                        if (cdata.per_member[static_cast<std::size_t>(m)].append(copy))
                            LabeledDataset::write_row(dataset_files[static_cast<std::size_t>(m)], copy);
                    }
                }
                result.acquisition_oracle_calls += outcome.oracle_calls;
                const double acq_wall =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - acq_start).count();
                acq_log << episode << ',' << strategy_name(cfg.reward_model.acquisition.kind) << ','
                        << outcome.candidate_count << ',' << outcome.selected_total << ','
                        << outcome.oracle_calls << ',' << g17(acq_wall) << '\n';
            }
            if (episode % cfg.reward_model.retrain_every == 0) {
                committee = retrain(committee, cdata, cparams, cfg.seed_model);
                retrained = true;
            }
        }
        if (!diverged && cfg.mode == RunMode::FullUpdate) {
            std::unordered_set<std::string> seen;
            for (const State& state : visited) {
                if (!seen.insert(state_key(state)).second) continue;
                DatasetRow row{env->features(state), oracle.evaluate(state), Provenance::Acquired};
                for (int m = 0; m < cfg.reward_model.members; ++m) {
                    if (cdata.per_member[static_cast<std::size_t>(m)].append(row))
                        LabeledDataset::write_row(dataset_files[static_cast<std::size_t>(m)], row);
                }
            }
            committee = retrain(committee, cdata, cparams, cfg.seed_model);
            retrained = true;
        }

        metrics << episode << ',' << g17(ep_return) << ',' << g17(model_return) << ',' << g17(spot)
                << ',' << g17(eps) << ',' << oracle.call_count() << ',' << model_queries << ','
                << buffer.size() << ',' << (retrained ? 1 : 0) << '\n';
        result.episodes_completed = episode;
        if (diverged) {
            result.diverged = true;
            break;
        }
    }

    nn::save_checkpoint(q.online, out_dir / "q_online.net");
    nn::save_checkpoint(q.target, out_dir / "q_target.net");
    for (std::size_t m = 0; m < committee.members.size(); ++m) {
        nn::save_checkpoint(committee.members[m], out_dir / ("committee_member_" + std::to_string(m) + ".net"));
    }

    result.oracle_queries = oracle.call_count();
    result.model_queries = model_queries;
    result.meta_path = out_dir / "run_meta.json";

    json meta;
    meta["label"] = cfg.label.empty() ? cfg.env_type + "-" + mode_name(cfg.mode) : cfg.label;
    meta["env"] = cfg.env_type;
    meta["mode"] = mode_name(cfg.mode);
    meta["seed_run"] = cfg.seed_run;
    meta["seed_oracle"] = cfg.seed_oracle;
    meta["seed_model"] = cfg.seed_model;
    meta["episodes"] = cfg.episodes;
    meta["episodes_completed"] = result.episodes_completed;
    meta["oracle_queries"] = result.oracle_queries;
    meta["model_queries"] = result.model_queries;
    meta["initial_dataset_size"] = result.initial_dataset_size;
    meta["acquisition_oracle_calls"] = result.acquisition_oracle_calls;
    meta["spot_check_misses"] = result.spot_check_misses;
    meta["speedup"] =
        result.oracle_queries ? speedup(result.oracle_queries, result.model_queries) : 0.0;
    meta["diverged"] = result.diverged;
    meta["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    std::ofstream meta_out(result.meta_path);
    meta_out << meta.dump(2) << '\n';

    return result;
}

}  // namespace acrl
