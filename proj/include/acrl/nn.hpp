#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace acrl::nn {

// Dense layer, weights row-major [out][in]. ReLU on hidden layers, identity
// on the output layer.
struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;
    std::vector<double> b;

    bool operator==(const Layer&) const = default;
};

struct Network {
    std::vector<int> sizes;
    std::vector<Layer> layers;

    int input_dim() const { return sizes.front(); }
    int output_dim() const { return sizes.back(); }
    std::size_t parameter_count() const;

    bool operator==(const Network&) const = default;
};

// Parameter-shaped value container (gradients, Adam moments).
using ParamBlocks = std::vector<Layer>;

struct AdamParams {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    ParamBlocks m;
    ParamBlocks v;
    long step = 0;
    AdamParams hp;
};

struct TrainParams {
    int epochs = 50;
    int batch_size = 32;
    AdamParams adam;
    // When > 0 and the dataset is larger, each epoch trains on a seeded
    // random subset of this many rows.
    int max_train_rows = 0;
};

// Deterministic given (sizes, seed): fan-in scaled uniform weights, zero biases.
Network init_network(const std::vector<int>& sizes, std::uint64_t seed);

std::vector<double> forward(const Network& net, std::span<const double> x);

// Mean squared error over the batch (averaged over samples and output dims)
// and its exact reverse-mode gradients. `grads` is resized/zeroed internally.
double loss_and_grad(const Network& net,
                     std::span<const std::span<const double>> xs,
                     std::span<const std::span<const double>> ys,
                     ParamBlocks& grads);

// Gradient of the mean of the outputs with respect to the input vector.
std::vector<double> input_gradient(const Network& net, std::span<const double> x);

OptimizerState make_optimizer(const Network& net, AdamParams hp);

// Standard bias-corrected Adam update; increments the step counter.
void adam_step(Network& net, const ParamBlocks& grads, OptimizerState& opt);

// Shuffled mini-batch training; returns per-epoch mean loss. Deterministic
// given seed; epochs == 0 leaves the network unchanged.
std::vector<double> train(Network& net,
                          std::span<const std::span<const double>> xs,
                          std::span<const std::span<const double>> ys,
                          const TrainParams& params, std::uint64_t seed);

// Text checkpoint: layer sizes then parameter arrays in row-major order,
// hexfloat-encoded so round trips are bit exact.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace acrl::nn
