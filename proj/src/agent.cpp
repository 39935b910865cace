#include "acrl/agent.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace acrl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
    ring_.reserve(capacity);
}

void ReplayBuffer::add(Transition t) {
    if (!std::isfinite(t.reward))
        throw std::invalid_argument("ReplayBuffer::add: non-finite reward");
    if (size_ < capacity_) {
        ring_.push_back(std::move(t));
        ++size_;
    } else {
        ring_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
    return rng.sample_without_replacement(size_, batch);
}

EpsilonSchedule EpsilonSchedule::make(double eps0, double eps_end, double lambda,
                                      long t_end) {
    if (t_end <= 0) throw std::invalid_argument("EpsilonSchedule: t_end must be > 0");
    if (eps0 <= 0.0 || eps_end <= 0.0 || eps_end > eps0)
        throw std::invalid_argument("EpsilonSchedule: need 0 < eps_end <= eps0");
    if (lambda < 0.0 || lambda > 1.0)
        throw std::invalid_argument("EpsilonSchedule: lambda must be in [0, 1]");
    EpsilonSchedule s;
    s.eps0 = eps0;
    s.eps_end = eps_end;
    s.lambda = lambda;
    s.t_end = t_end;
    const double ratio = eps_end / eps0;
    s.alpha = std::pow(ratio, 1.0 / static_cast<double>(t_end));
    s.beta = (1.0 - ratio) / static_cast<double>(t_end);
    return s;
}

double EpsilonSchedule::at(long t) const {
    if (t < 0) throw std::invalid_argument("EpsilonSchedule::at: t must be >= 0");
    if (t >= t_end) return eps_end;
    const double td = static_cast<double>(t);
    const double linear = 1.0 - beta * td;
    const double exponential = std::pow(alpha, td);
    const double value = eps0 * (lambda * linear + (1.0 - lambda) * exponential);
    return std::max(value, eps_end);
}

QFunction make_q_function(const std::vector<int>& layer_sizes, double gamma,
                          std::uint64_t seed) {
    if (gamma < 0.0 || gamma > 1.0)
        throw std::invalid_argument("make_q_function: gamma must be in [0, 1]");
    if (layer_sizes.empty() || layer_sizes.back() != 1)
        throw std::invalid_argument("make_q_function: value network must have one output");
    QFunction q;
    q.online = nn::init_network(layer_sizes, seed);
    q.target = q.online;
    q.gamma = gamma;
    return q;
}

std::size_t select_action(const QFunction& q,
                          const std::vector<std::vector<double>>& successor_features,
                          double eps, Rng& rng) {
    if (successor_features.empty())
        throw std::invalid_argument("select_action: no successors");
    if (rng.uniform() < eps) {
        return static_cast<std::size_t>(rng.below(successor_features.size()));
    }
    std::size_t best = 0;
    double best_value = nn::forward(q.online, successor_features[0])[0];
    for (std::size_t i = 1; i < successor_features.size(); ++i) {
        const double value = nn::forward(q.online, successor_features[i])[0];
        if (value > best_value) {
            best_value = value;
            best = i;
        }
    }
    return best;
}

std::vector<double> compute_targets(std::span<const Transition> batch, const QFunction& q,
                                    const Environment& env) {
    std::vector<double> targets;
    targets.reserve(batch.size());
    for (const Transition& t : batch) {
        double target = t.reward;
        if (!t.terminal) {
            const auto successors = env.successors(t.next_state);
            if (!successors.empty()) {
                // online network picks, target network evaluates
                std::size_t best = 0;
                double best_value = -std::numeric_limits<double>::infinity();
                std::vector<std::vector<double>> feats;
                feats.reserve(successors.size());
                for (std::size_t i = 0; i < successors.size(); ++i) {
                    feats.push_back(env.features(successors[i].second));
                    const double value = nn::forward(q.online, feats[i])[0];
                    if (value > best_value) {
                        best_value = value;
                        best = i;
                    }
                }
                target += q.gamma * nn::forward(q.target, feats[best])[0];
            }
        }
        if (!std::isfinite(target))
            throw DivergenceError("compute_targets: non-finite target");
        targets.push_back(target);
    }
    return targets;
}

OptimizeResult optimize_step(QFunction& q, const ReplayBuffer& buffer,
                             std::size_t batch_size, Rng& rng,
                             nn::OptimizerState& opt, const Environment& env,
                             const RewardOverride* reward_override) {
    if (batch_size == 0) throw std::invalid_argument("optimize_step: batch_size must be > 0");
    if (buffer.size() < batch_size) return {true, 0.0};

    const std::vector<std::size_t> idx = buffer.sample_indices(batch_size, rng);
    std::vector<Transition> batch;
    batch.reserve(batch_size);
    for (std::size_t i : idx) batch.push_back(buffer[i]);
    if (reward_override) {
        for (Transition& t : batch) t.reward = (*reward_override)(t);
    }

    const std::vector<double> targets = compute_targets(batch, q, env);

    // Q(s, a) is the online value of the stored successor state.
    std::vector<std::vector<double>> xs;
    xs.reserve(batch_size);
    for (const Transition& t : batch) xs.push_back(env.features(t.next_state));

    std::vector<std::span<const double>> x_views;
    std::vector<std::span<const double>> y_views;
    x_views.reserve(batch_size);
    y_views.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        x_views.emplace_back(xs[i]);
        y_views.emplace_back(&targets[i], 1);
    }

    nn::ParamBlocks grads;
    const double loss = nn::loss_and_grad(q.online, x_views, y_views, grads);
    if (!std::isfinite(loss)) throw DivergenceError("optimize_step: non-finite loss");
    nn::adam_step(q.online, grads, opt);
    return {false, loss};
}

void sync_target(QFunction& q) { q.target = q.online; }

}  // namespace acrl
