#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/envs.hpp"
#include "acrl/nn.hpp"
#include "acrl/rng.hpp"

namespace acrl {

// Fixed-capacity FIFO transition store with uniform sampling.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity);

    void add(Transition t);
    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return ring_[i]; }

    std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

  private:
    std::size_t capacity_;
    std::vector<Transition> ring_;
    std::size_t next_ = 0;
    std::size_t size_ = 0;
};

// eps(t) = eps0 * (lambda * (1 - beta t) + (1 - lambda) * alpha^t) with alpha
// and beta calibrated so eps(0) = eps0 and eps(t_end) = eps_end for every
// lambda; frozen at eps_end beyond t_end.
struct EpsilonSchedule {
    double eps0 = 1.0;
    double eps_end = 0.01;
    double lambda = 0.0;
    long t_end = 4800;
    double alpha = 0.0;
    double beta = 0.0;

    static EpsilonSchedule make(double eps0, double eps_end, double lambda, long t_end);
    double at(long t) const;
};

// Q(s, a) parameterized as the online network's scalar value of the
// successor's features; the target network is updated only via sync.
struct QFunction {
    nn::Network online;
    nn::Network target;
    double gamma = 0.95;
};

QFunction make_q_function(const std::vector<int>& layer_sizes, double gamma,
                          std::uint64_t seed);

// epsilon-greedy over the successor values; greedy ties break to the lowest
// index.
std::size_t select_action(const QFunction& q,
                          const std::vector<std::vector<double>>& successor_features,
                          double eps, Rng& rng);

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Double DQN targets: r for terminal transitions, otherwise
// r + gamma * target(argmax_online over successors of next_state).
std::vector<double> compute_targets(std::span<const Transition> batch, const QFunction& q,
                                    const Environment& env);

struct OptimizeResult {
    bool skipped = false;
    double loss = 0.0;
};

// Recomputes a sampled transition's reward from the current reward model
// (configuration flag; the default keeps the stored at-visit rewards).
using RewardOverride = std::function<double(const Transition&)>;

// One uniform batch, MSE against Double DQN targets, one Adam step on the
// online network. Skips (no-op) while the buffer is smaller than the batch.
OptimizeResult optimize_step(QFunction& q, const ReplayBuffer& buffer,
                             std::size_t batch_size, Rng& rng,
                             nn::OptimizerState& opt, const Environment& env,
                             const RewardOverride* reward_override = nullptr);

// target <- bit-exact copy of online
void sync_target(QFunction& q);

}  // namespace acrl
