#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/rng.hpp"

namespace acrl {

// Episodic environment: immutable description, pure step/reset given the rng
// stream. `evaluate` is the true (costly) state quantity, uninstrumented.
class Environment {
  public:
    virtual ~Environment() = default;

    virtual State reset(Rng& rng) const = 0;
    // Deterministic, duplicate-free (action id, successor) list.
    virtual std::vector<std::pair<ActionId, State>> successors(const State& s) const = 0;
    virtual std::vector<double> features(const State& s) const = 0;
    virtual int feature_dim() const = 0;
    virtual int horizon() const = 0;
    virtual int value_dim() const = 0;
    virtual std::vector<double> evaluate(const State& s) const = 0;
    virtual RewardMode reward_mode() const = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Blowing/suction profile analog: state in R^(2d), one (or no) coefficient
// modification per step, each side re-projected onto its episode mean.

struct DragParams {
    double offset = 1.0;              // value of the all-zero profile
    double mean_weight = 5.0;         // dominant decrease in the total mean
    double linear_scale = 1.0;
    double quad_scale = 0.5;
    double alternation_weight = -0.4; // < 0 favours alternating coefficients
};

struct ProfileEnvConfig {
    int sections_per_side = 15;
    double step = 0.0002;
    double constraint_lo = 0.0019;
    double constraint_hi = 0.0021;
    int horizon = 30;
    // max |coefficient - side target|; 0 disables the bound
    double coeff_bound_dev = 0.0;
    std::uint64_t oracle_seed = 7;
    DragParams drag;
};

class ProfileEnv : public Environment {
  public:
    explicit ProfileEnv(ProfileEnvConfig cfg);

    State reset(Rng& rng) const override;
    std::vector<std::pair<ActionId, State>> successors(const State& s) const override;
    std::vector<double> features(const State& s) const override;
    int feature_dim() const override { return 2 * cfg_.sections_per_side + 2; }
    int horizon() const override { return cfg_.horizon; }
    int value_dim() const override { return 1; }
    std::vector<double> evaluate(const State& s) const override { return {drag(s)}; }
    RewardMode reward_mode() const override { return DeltaReward{}; }
    std::string name() const override { return "profile"; }

    // Action 0 is the no-op; 1 + 2i bumps coefficient i by +step, 2 + 2i by
    // -step, followed by re-centering the modified side onto its target mean.
    State step(const State& s, ActionId action) const;
    double drag(const State& s) const;

    const ProfileEnvConfig& config() const { return cfg_; }

  private:
    ProfileEnvConfig cfg_;
    std::vector<double> linear_w_;  // seeded
    std::vector<double> quad_m_;    // seeded, row-major (2d x 2d)
};

// ---------------------------------------------------------------------------
// Token-sequence analog of the molecular tasks: grow/edit a sequence whose
// synthetic property has the "desirable value minus structural penalties"
// shape.

struct SeqPropertyParams {
    double weight_scale = 1.0;     // per-token weights drawn U(-scale, scale)
    double distinct_penalty = 0.2; // per distinct token id
    double run_penalty = 0.5;      // per unit of longest run beyond threshold
    int run_threshold = 2;
};

struct SeqEnvConfig {
    int vocab = 6;
    int max_len = 8;
    int horizon = 40;
    int feature_width = 32;
    std::uint64_t oracle_seed = 11;
    SeqPropertyParams property;
};

class SeqEnv : public Environment {
  public:
    explicit SeqEnv(SeqEnvConfig cfg);

    State reset(Rng& rng) const override;  // empty sequence
    std::vector<std::pair<ActionId, State>> successors(const State& s) const override;
    std::vector<double> features(const State& s) const override;
    int feature_dim() const override { return cfg_.feature_width; }
    int horizon() const override { return cfg_.horizon; }
    int value_dim() const override { return 1; }
    // minimized quantity: the negated property
    std::vector<double> evaluate(const State& s) const override { return {-property(s)}; }
    RewardMode reward_mode() const override { return DeltaReward{}; }
    std::string name() const override { return "seq"; }

    double property(const State& s) const;
    double token_weight(int token) const { return token_w_[static_cast<std::size_t>(token)]; }

    const SeqEnvConfig& config() const { return cfg_; }

  private:
    SeqEnvConfig cfg_;
    std::vector<double> token_w_;  // seeded
};

// ---------------------------------------------------------------------------
// Improvement analog: short episodes from random start sequences, reward
// relative to the start state over two coupled synthetic properties.

struct ImproveEnvConfig {
    SeqEnvConfig seq;
    int horizon = 5;
    int start_len_min = 2;
    int start_len_max = 6;
};

class ImproveEnv : public Environment {
  public:
    explicit ImproveEnv(ImproveEnvConfig cfg);

    State reset(Rng& rng) const override;  // random sequence
    std::vector<std::pair<ActionId, State>> successors(const State& s) const override;
    std::vector<double> features(const State& s) const override;
    int feature_dim() const override { return cfg_.seq.feature_width; }
    int horizon() const override { return cfg_.horizon; }
    int value_dim() const override { return 2; }
    // {primary, secondary}
    std::vector<double> evaluate(const State& s) const override;
    RewardMode reward_mode() const override { return ImprovementFromStart{0, 1}; }
    std::string name() const override { return "improve"; }

    const ImproveEnvConfig& config() const { return cfg_; }

  private:
    ImproveEnvConfig cfg_;
    SeqEnv seq_;
    std::vector<double> primary_lin_, primary_tanh_;
    std::vector<double> secondary_lin_, secondary_tanh_;
};

// ---------------------------------------------------------------------------
// Featurization

// coefficients concatenated with the two per-side targets
std::vector<double> featurize_profile(const DenseState& s);

// counts of hashed 1- and 2-grams folded into `width` buckets
std::vector<double> featurize_kgram(const TokenState& s, int width);

// bucket of the k-gram starting at `pos`; exposed for the reference
// recomputation in tests
std::size_t kgram_bucket(std::span<const int> tokens, int k, int width);

// ---------------------------------------------------------------------------
// Instrumented oracle: exact call counting, memoization keyed by the
// canonical state serialization, optional simulated latency on misses.

class InstrumentedOracle {
  public:
    using Fn = std::function<std::vector<double>(const State&)>;

    explicit InstrumentedOracle(Fn fn, int latency_ms = 0);

    // Memoized result; the counter increments only on cache misses. Inner
    // failures propagate after logging the state key.
    std::vector<double> evaluate(const State& s);

    std::uint64_t call_count() const;
    bool is_memoized(const State& s) const;

  private:
    Fn fn_;
    int latency_ms_ = 0;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::vector<double>> memo_;
    std::uint64_t calls_ = 0;
};

}  // namespace acrl
