#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace acrl {

// Coefficient profile split into two sides of `per_side` entries each,
// every side pinned to its own target mean for the whole episode.
struct DenseState {
    std::vector<double> values;  // length 2 * per_side
    int per_side = 0;
    double side_target[2] = {0.0, 0.0};

    bool operator==(const DenseState& o) const {
        return per_side == o.per_side && values == o.values &&
               side_target[0] == o.side_target[0] &&
               side_target[1] == o.side_target[1];
    }
};

struct TokenState {
    std::vector<int> tokens;
    bool operator==(const TokenState&) const = default;
};

using State = std::variant<DenseState, TokenState>;

using ActionId = int;

struct Transition {
    State state;
    ActionId action = 0;
    double reward = 0.0;  // model reward at visit time
    State next_state;
    bool terminal = false;
};

struct DeltaReward {};

// Reward relative to the episode start state: hold the secondary property
// fixed while driving the primary one down. Indices select components of the
// environment's value vector.
struct ImprovementFromStart {
    int primary_index = 0;
    int secondary_index = 1;
};

using RewardMode = std::variant<DeltaReward, ImprovementFromStart>;

double delta_reward(double f_prev, double f_next);

// sum of consecutive deltas over f_values; equals first - last
double telescoped_return(std::span<const double> f_values);

double improvement_reward(double primary_t, double primary_0,
                          double secondary_t, double secondary_0);

// Canonical serialization: exact (hexfloat) text key used for memoization,
// window deduplication and schedule-independent row ordering.
std::string state_key(const State& s);

std::uint64_t state_hash(const State& s);

}  // namespace acrl
