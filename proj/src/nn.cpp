#include "acrl/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "acrl/rng.hpp"

namespace acrl::nn {

namespace {

void check_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
}

// Forward pass keeping post-activation values of every layer; activations[0]
// is the input itself.
void forward_cached(const Network& net, std::span<const double> x,
                    std::vector<std::vector<double>>& activations) {
    activations.resize(net.layers.size() + 1);
    activations[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        const bool hidden = l + 1 < net.layers.size();
        const std::vector<double>& a = activations[l];
        std::vector<double>& z = activations[l + 1];
        z.assign(static_cast<std::size_t>(layer.out), 0.0);
        for (int o = 0; o < layer.out; ++o) {
            double acc = layer.b[static_cast<std::size_t>(o)];
            const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            for (int i = 0; i < layer.in; ++i) acc += row[i] * a[static_cast<std::size_t>(i)];
            z[static_cast<std::size_t>(o)] = hidden ? (acc > 0.0 ? acc : 0.0) : acc;
        }
    }
}

// Backward pass from an output delta. Accumulates parameter gradients into
// `grads` when non-null and writes the input gradient when requested.
void backward(const Network& net, const std::vector<std::vector<double>>& activations,
              std::vector<double> delta, ParamBlocks* grads,
              std::vector<double>* input_grad) {
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Layer& layer = net.layers[l];
        const std::vector<double>& a_prev = activations[l];
        if (grads) {
            Layer& g = (*grads)[l];
            for (int o = 0; o < layer.out; ++o) {
                const double d = delta[static_cast<std::size_t>(o)];
                g.b[static_cast<std::size_t>(o)] += d;
                double* grow = g.w.data() + static_cast<std::size_t>(o) * layer.in;
                for (int i = 0; i < layer.in; ++i) grow[i] += d * a_prev[static_cast<std::size_t>(i)];
            }
        }
        const bool need_below = l > 0 || input_grad != nullptr;
        if (!need_below) break;
        std::vector<double> below(static_cast<std::size_t>(layer.in), 0.0);
        for (int o = 0; o < layer.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            if (d == 0.0) continue;
            const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
            for (int i = 0; i < layer.in; ++i) below[static_cast<std::size_t>(i)] += d * row[i];
        }
        if (l > 0) {
            // ReLU derivative uses the post-activation value of the layer below.
            const std::vector<double>& act = activations[l];
            for (int i = 0; i < layer.in; ++i) {
                if (act[static_cast<std::size_t>(i)] <= 0.0) below[static_cast<std::size_t>(i)] = 0.0;
            }
        }
        if (l == 0) {
            *input_grad = std::move(below);
            return;
        }
        delta = std::move(below);
    }
}

ParamBlocks zero_blocks(const Network& net) {
    ParamBlocks blocks;
    blocks.reserve(net.layers.size());
    for (const Layer& layer : net.layers) {
        Layer z;
        z.in = layer.in;
        z.out = layer.out;
        z.w.assign(layer.w.size(), 0.0);
        z.b.assign(layer.b.size(), 0.0);
        blocks.push_back(std::move(z));
    }
    return blocks;
}

void check_shapes(const Network& net, const ParamBlocks& blocks, const char* what) {
    if (blocks.size() != net.layers.size())
        throw std::invalid_argument(std::string(what) + ": layer count mismatch");
    for (std::size_t l = 0; l < blocks.size(); ++l) {
        if (blocks[l].w.size() != net.layers[l].w.size() ||
            blocks[l].b.size() != net.layers[l].b.size())
            throw std::invalid_argument(std::string(what) + ": parameter shape mismatch");
    }
}

double parse_hex_double(const std::string& tok, const std::filesystem::path& path) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw std::runtime_error("checkpoint parse error in " + path.string() + ": '" + tok + "'");
    return v;
}

}  // namespace

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers) n += layer.w.size() + layer.b.size();
    return n;
}

Network init_network(const std::vector<int>& sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw std::invalid_argument("init_network: need at least 2 layers");
    for (int s : sizes) {
        if (s < 1) throw std::invalid_argument("init_network: layer sizes must be >= 1");
    }
    Network net;
    net.sizes = sizes;
    net.layers.resize(sizes.size() - 1);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Layer& layer = net.layers[l];
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
        layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
        const double limit = std::sqrt(6.0 / layer.in);
        Rng rng(derive_seed(seed, "layer", l));
        for (double& w : layer.w) w = rng.uniform(-limit, limit);
    }
    return net;
}

std::vector<double> forward(const Network& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    std::vector<std::vector<double>> acts;
    forward_cached(net, x, acts);
    return acts.back();
}

double loss_and_grad(const Network& net,
                     std::span<const std::span<const double>> xs,
                     std::span<const std::span<const double>> ys,
                     ParamBlocks& grads) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("loss_and_grad: empty or inconsistent batch");
    grads = zero_blocks(net);
    const double out_dim = net.output_dim();
    const double denom = static_cast<double>(xs.size()) * out_dim;
    double loss = 0.0;
    std::vector<std::vector<double>> acts;
    for (std::size_t n = 0; n < xs.size(); ++n) {
        if (static_cast<int>(xs[n].size()) != net.input_dim() ||
            static_cast<int>(ys[n].size()) != net.output_dim())
            throw std::invalid_argument("loss_and_grad: sample dimension mismatch");
        forward_cached(net, xs[n], acts);
        const std::vector<double>& pred = acts.back();
        std::vector<double> delta(pred.size());
        for (std::size_t o = 0; o < pred.size(); ++o) {
            const double err = pred[o] - ys[n][o];
            loss += err * err;
            delta[o] = 2.0 * err / denom;
        }
        backward(net, acts, std::move(delta), &grads, nullptr);
    }
    return loss / denom;
}

std::vector<double> input_gradient(const Network& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.input_dim())
        throw std::invalid_argument("input_gradient: input dimension mismatch");
    std::vector<std::vector<double>> acts;
    forward_cached(net, x, acts);
    std::vector<double> delta(static_cast<std::size_t>(net.output_dim()),
                              1.0 / net.output_dim());
    std::vector<double> grad;
    backward(net, acts, std::move(delta), nullptr, &grad);
    return grad;
}

OptimizerState make_optimizer(const Network& net, AdamParams hp) {
    OptimizerState opt;
    opt.m = zero_blocks(net);
    opt.v = zero_blocks(net);
    opt.step = 0;
    opt.hp = hp;
    return opt;
}

void adam_step(Network& net, const ParamBlocks& grads, OptimizerState& opt) {
    check_shapes(net, grads, "adam_step");
    check_shapes(net, opt.m, "adam_step");
    opt.step += 1;
    const AdamParams& hp = opt.hp;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(opt.step));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
                v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= hp.learning_rate * mhat / (std::sqrt(vhat) + hp.epsilon);
                check_finite(p[i], "adam_step");
            }
        };
        update(net.layers[l].w, grads[l].w, opt.m[l].w, opt.v[l].w);
        update(net.layers[l].b, grads[l].b, opt.m[l].b, opt.v[l].b);
    }
}

std::vector<double> train(Network& net,
                          std::span<const std::span<const double>> xs,
                          std::span<const std::span<const double>> ys,
                          const TrainParams& params, std::uint64_t seed) {
    if (xs.empty() || xs.size() != ys.size())
        throw std::invalid_argument("train: empty or inconsistent dataset");
    if (params.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    std::vector<double> history;
    if (params.epochs <= 0) return history;
    history.reserve(static_cast<std::size_t>(params.epochs));

    OptimizerState opt = make_optimizer(net, params.adam);
    Rng rng(derive_seed(seed, "train"));
    std::vector<std::size_t> order(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const std::size_t cap =
        (params.max_train_rows > 0 &&
         static_cast<std::size_t>(params.max_train_rows) < xs.size())
            ? static_cast<std::size_t>(params.max_train_rows)
            : xs.size();

    ParamBlocks grads;
    std::vector<std::span<const double>> bx;
    std::vector<std::span<const double>> by;
    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < cap; start += static_cast<std::size_t>(params.batch_size)) {
            const std::size_t end = std::min(cap, start + static_cast<std::size_t>(params.batch_size));
            bx.clear();
            by.clear();
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(xs[order[i]]);
                by.push_back(ys[order[i]]);
            }
            const double batch_loss = loss_and_grad(net, bx, by, grads);
            epoch_loss += batch_loss * static_cast<double>(end - start);
            adam_step(net, grads, opt);
        }
        history.push_back(epoch_loss / static_cast<double>(cap));
    }
    return history;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out << "acrl-net 1\n";
    out << "sizes";
    for (int s : net.sizes) out << ' ' << s;
    out << '\n';
    char buf[40];
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        out << "layer " << l << '\n' << "w";
        for (double v : layer.w) {
            std::snprintf(buf, sizeof(buf), "%a", v);
            out << ' ' << buf;
        }
        out << '\n' << "b";
        for (double v : layer.b) {
            std::snprintf(buf, sizeof(buf), "%a", v);
            out << ' ' << buf;
        }
        out << '\n';
    }
    out << "end\n";
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    std::string word;
    int version = 0;
    in >> word >> version;
    if (!in || word != "acrl-net" || version != 1)
        throw std::runtime_error("load_checkpoint: bad header in " + path.string());
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    std::istringstream sizes_line(line);
    sizes_line >> word;
    if (word != "sizes") throw std::runtime_error("load_checkpoint: missing sizes in " + path.string());
    std::vector<int> sizes;
    int s;
    while (sizes_line >> s) sizes.push_back(s);
    if (sizes.size() < 2) throw std::runtime_error("load_checkpoint: bad sizes in " + path.string());

    Network net;
    net.sizes = sizes;
    net.layers.resize(sizes.size() - 1);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Layer& layer = net.layers[l];
        layer.in = sizes[l];
        layer.out = sizes[l + 1];
        std::size_t idx;
        in >> word >> idx;
        if (!in || word != "layer" || idx != l)
            throw std::runtime_error("load_checkpoint: bad layer marker in " + path.string());
        in >> word;
        if (word != "w") throw std::runtime_error("load_checkpoint: missing weights in " + path.string());
        layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
        for (double& v : layer.w) {
            in >> word;
            v = parse_hex_double(word, path);
        }
        in >> word;
        if (word != "b") throw std::runtime_error("load_checkpoint: missing biases in " + path.string());
        layer.b.resize(static_cast<std::size_t>(layer.out));
        for (double& v : layer.b) {
            in >> word;
            v = parse_hex_double(word, path);
        }
    }
    in >> word;
    if (word != "end") throw std::runtime_error("load_checkpoint: missing end marker in " + path.string());
    return net;
}

}  // namespace acrl::nn
