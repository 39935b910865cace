#include "acrl/envs.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <thread>

namespace acrl {

namespace {

const DenseState& dense(const State& s, const char* what) {
    const auto* dv = std::get_if<DenseState>(&s);
    if (!dv) throw std::invalid_argument(std::string(what) + ": expected a profile state");
    return *dv;
}

const TokenState& tokens(const State& s, const char* what) {
    const auto* ts = std::get_if<TokenState>(&s);
    if (!ts) throw std::invalid_argument(std::string(what) + ": expected a token state");
    return *ts;
}

double side_mean(const DenseState& s, int side) {
    const int d = s.per_side;
    double sum = 0.0;
    for (int i = 0; i < d; ++i) sum += s.values[static_cast<std::size_t>(side * d + i)];
    return sum / d;
}

std::vector<double> seeded_uniform(std::uint64_t seed, std::string_view tag,
                                   std::size_t count, double lo, double hi) {
    Rng rng(derive_seed(seed, tag));
    std::vector<double> out(count);
    for (double& v : out) v = rng.uniform(lo, hi);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ProfileEnv

ProfileEnv::ProfileEnv(ProfileEnvConfig cfg) : cfg_(cfg) {
    if (cfg_.sections_per_side < 2)
        throw std::invalid_argument("ProfileEnv: need at least 2 sections per side");
    if (cfg_.step <= 0.0) throw std::invalid_argument("ProfileEnv: step must be > 0");
    if (cfg_.constraint_lo > cfg_.constraint_hi)
        throw std::invalid_argument("ProfileEnv: constraint interval is empty");
    if (cfg_.horizon < 1) throw std::invalid_argument("ProfileEnv: horizon must be >= 1");
    const std::size_t n = static_cast<std::size_t>(2 * cfg_.sections_per_side);
    linear_w_ = seeded_uniform(cfg_.oracle_seed, "drag-linear", n, -1.0, 1.0);
    quad_m_ = seeded_uniform(cfg_.oracle_seed, "drag-quad", n * n, -1.0, 1.0);
}

State ProfileEnv::reset(Rng& rng) const {
    DenseState s;
    s.per_side = cfg_.sections_per_side;
    s.side_target[0] = rng.uniform(cfg_.constraint_lo, cfg_.constraint_hi);
    s.side_target[1] = rng.uniform(cfg_.constraint_lo, cfg_.constraint_hi);
    s.values.resize(static_cast<std::size_t>(2 * cfg_.sections_per_side));
    for (int side = 0; side < 2; ++side) {
        for (int i = 0; i < cfg_.sections_per_side; ++i) {
            s.values[static_cast<std::size_t>(side * cfg_.sections_per_side + i)] =
                s.side_target[side];
        }
    }
    return s;
}

State ProfileEnv::step(const State& state, ActionId action) const {
    const DenseState& s = dense(state, "ProfileEnv::step");
    const int d = cfg_.sections_per_side;
    if (action == 0) return state;
    const int slot = action - 1;
    if (slot < 0 || slot >= 4 * d)
        throw std::invalid_argument("ProfileEnv::step: action id out of range");
    const int index = slot / 2;
    const double delta = (slot % 2 == 0) ? cfg_.step : -cfg_.step;
    const int side = index / d;

    DenseState next = s;
    next.values[static_cast<std::size_t>(index)] += delta;
    // Re-center the modified side onto its target mean; measured-mean
    // subtraction keeps the invariant tight instead of accumulating drift.
    const double shift = side_mean(next, side) - next.side_target[side];
    for (int i = 0; i < d; ++i) next.values[static_cast<std::size_t>(side * d + i)] -= shift;
    return next;
}

std::vector<std::pair<ActionId, State>> ProfileEnv::successors(const State& state) const {
    const DenseState& s = dense(state, "ProfileEnv::successors");
    if (s.per_side != cfg_.sections_per_side ||
        s.values.size() != static_cast<std::size_t>(2 * cfg_.sections_per_side))
        throw std::invalid_argument("ProfileEnv::successors: state shape mismatch");
    std::vector<std::pair<ActionId, State>> out;
    out.reserve(static_cast<std::size_t>(4 * cfg_.sections_per_side + 1));
    out.emplace_back(0, state);
    for (ActionId a = 1; a <= 4 * cfg_.sections_per_side; ++a) {
        State next = step(state, a);
        if (cfg_.coeff_bound_dev > 0.0) {
            const DenseState& nd = std::get<DenseState>(next);
            bool ok = true;
            for (int side = 0; side < 2 && ok; ++side) {
                for (int i = 0; i < cfg_.sections_per_side; ++i) {
                    const double dev = std::abs(
                        nd.values[static_cast<std::size_t>(side * cfg_.sections_per_side + i)] -
                        nd.side_target[side]);
                    if (dev > cfg_.coeff_bound_dev + 1e-12) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;
        }
        out.emplace_back(a, std::move(next));
    }
    return out;
}

std::vector<double> ProfileEnv::features(const State& s) const {
    return featurize_profile(dense(s, "ProfileEnv::features"));
}

double ProfileEnv::drag(const State& state) const {
    const DenseState& s = dense(state, "ProfileEnv::drag");
    const std::size_t n = static_cast<std::size_t>(2 * cfg_.sections_per_side);
    if (s.values.size() != n)
        throw std::invalid_argument("ProfileEnv::drag: state dimension mismatch");
    const DragParams& p = cfg_.drag;

    double total = 0.0;
    for (double v : s.values) total += v;
    const double mean = total / static_cast<double>(n);

    double lin = 0.0;
    for (std::size_t i = 0; i < n; ++i) lin += linear_w_[i] * s.values[i];
    lin *= p.linear_scale / std::sqrt(static_cast<double>(n));

    double quad = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double row = 0.0;
        const double* m = quad_m_.data() + j * n;
        for (std::size_t i = 0; i < n; ++i) row += m[i] * s.values[i];
        quad += row * row;
    }
    quad *= p.quad_scale / static_cast<double>(n);

    double alt = 0.0;
    const int d = cfg_.sections_per_side;
    for (int side = 0; side < 2; ++side) {
        for (int i = 0; i + 1 < d; ++i) {
            const double diff = s.values[static_cast<std::size_t>(side * d + i + 1)] -
                                s.values[static_cast<std::size_t>(side * d + i)];
            alt += diff * diff;
        }
    }
    alt *= p.alternation_weight;

    return p.offset - p.mean_weight * mean + lin + quad + alt;
}

// ---------------------------------------------------------------------------
// SeqEnv

SeqEnv::SeqEnv(SeqEnvConfig cfg) : cfg_(cfg) {
    if (cfg_.vocab < 2) throw std::invalid_argument("SeqEnv: vocab must be >= 2");
    if (cfg_.max_len < 1) throw std::invalid_argument("SeqEnv: max_len must be >= 1");
    if (cfg_.horizon < 1) throw std::invalid_argument("SeqEnv: horizon must be >= 1");
    if (cfg_.feature_width < 1) throw std::invalid_argument("SeqEnv: feature_width must be >= 1");
    token_w_ = seeded_uniform(cfg_.oracle_seed, "token-weights",
                              static_cast<std::size_t>(cfg_.vocab),
                              -cfg_.property.weight_scale, cfg_.property.weight_scale);
}

State SeqEnv::reset(Rng&) const { return TokenState{}; }

std::vector<std::pair<ActionId, State>> SeqEnv::successors(const State& state) const {
    const TokenState& s = tokens(state, "SeqEnv::successors");
    const int len = static_cast<int>(s.tokens.size());
    if (len > cfg_.max_len)
        throw std::invalid_argument("SeqEnv::successors: sequence exceeds max length");
    for (int t : s.tokens) {
        if (t < 0 || t >= cfg_.vocab)
            throw std::invalid_argument("SeqEnv::successors: token id out of range");
    }

    std::vector<std::pair<ActionId, State>> out;
    ActionId id = 0;
    if (len == 0) {
        for (int v = 0; v < cfg_.vocab; ++v) {
            TokenState next;
            next.tokens.push_back(v);
            out.emplace_back(id++, State{std::move(next)});
        }
        return out;
    }
    out.emplace_back(id++, state);  // no-op
    {
        TokenState next = s;
        next.tokens.pop_back();
        out.emplace_back(id++, State{std::move(next)});
    }
    if (len < cfg_.max_len) {
        for (int v = 0; v < cfg_.vocab; ++v) {
            TokenState next = s;
            next.tokens.push_back(v);
            out.emplace_back(id++, State{std::move(next)});
        }
    }
    for (int pos = 0; pos < len; ++pos) {
        for (int v = 0; v < cfg_.vocab; ++v) {
            if (v == s.tokens[static_cast<std::size_t>(pos)]) continue;
            TokenState next = s;
            next.tokens[static_cast<std::size_t>(pos)] = v;
            out.emplace_back(id++, State{std::move(next)});
        }
    }
    return out;
}

std::vector<double> SeqEnv::features(const State& s) const {
    return featurize_kgram(tokens(s, "SeqEnv::features"), cfg_.feature_width);
}

double SeqEnv::property(const State& state) const {
    const TokenState& s = tokens(state, "SeqEnv::property");
    if (s.tokens.empty()) return 0.0;
    double value = 0.0;
    std::vector<bool> seen(static_cast<std::size_t>(cfg_.vocab), false);
    int distinct = 0;
    int longest_run = 1;
    int run = 1;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        const int t = s.tokens[i];
        if (t < 0 || t >= cfg_.vocab)
            throw std::invalid_argument("SeqEnv::property: token id out of range");
        value += token_w_[static_cast<std::size_t>(t)];
        if (!seen[static_cast<std::size_t>(t)]) {
            seen[static_cast<std::size_t>(t)] = true;
            ++distinct;
        }
        if (i > 0) {
            run = (s.tokens[i] == s.tokens[i - 1]) ? run + 1 : 1;
            longest_run = std::max(longest_run, run);
        }
    }
    value -= cfg_.property.distinct_penalty * distinct;
    value -= cfg_.property.run_penalty *
             std::max(0, longest_run - cfg_.property.run_threshold);
    return value;
}

// ---------------------------------------------------------------------------
// ImproveEnv

ImproveEnv::ImproveEnv(ImproveEnvConfig cfg) : cfg_(cfg), seq_(cfg.seq) {
    if (cfg_.horizon < 1) throw std::invalid_argument("ImproveEnv: horizon must be >= 1");
    if (cfg_.start_len_min < 1 || cfg_.start_len_max < cfg_.start_len_min ||
        cfg_.start_len_max > cfg_.seq.max_len)
        throw std::invalid_argument("ImproveEnv: bad start length range");
    const std::size_t w = static_cast<std::size_t>(cfg_.seq.feature_width);
    const std::uint64_t seed = cfg_.seq.oracle_seed;
    primary_lin_ = seeded_uniform(seed, "primary-lin", w, -1.0, 1.0);
    primary_tanh_ = seeded_uniform(seed, "primary-tanh", w, -1.0, 1.0);
    secondary_lin_ = seeded_uniform(seed, "secondary-lin", w, -1.0, 1.0);
    secondary_tanh_ = seeded_uniform(seed, "secondary-tanh", w, -1.0, 1.0);
}

State ImproveEnv::reset(Rng& rng) const {
    const int len = rng.uniform_int(cfg_.start_len_min, cfg_.start_len_max);
    TokenState s;
    s.tokens.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) s.tokens.push_back(rng.uniform_int(0, cfg_.seq.vocab - 1));
    return s;
}

std::vector<std::pair<ActionId, State>> ImproveEnv::successors(const State& s) const {
    return seq_.successors(s);
}

std::vector<double> ImproveEnv::features(const State& s) const { return seq_.features(s); }

std::vector<double> ImproveEnv::evaluate(const State& state) const {
    const std::vector<double> x = features(state);
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
    auto smooth = [&](const std::vector<double>& lin, const std::vector<double>& th) {
        double a = 0.0;
        double b = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            a += lin[i] * x[i];
            b += th[i] * x[i];
        }
        return a * scale + 0.5 * std::tanh(b * scale);
    };
    return {smooth(primary_lin_, primary_tanh_), smooth(secondary_lin_, secondary_tanh_)};
}

// ---------------------------------------------------------------------------
// Featurization

std::vector<double> featurize_profile(const DenseState& s) {
    std::vector<double> out;
    out.reserve(s.values.size() + 2);
    out.insert(out.end(), s.values.begin(), s.values.end());
    out.push_back(s.side_target[0]);
    out.push_back(s.side_target[1]);
    return out;
}

std::size_t kgram_bucket(std::span<const int> tokens, int k, int width) {
    std::uint64_t h = mix64(0xa0761d6478bd642full ^ static_cast<std::uint64_t>(k));
    for (int i = 0; i < k; ++i) {
        h = mix64(h ^ (static_cast<std::uint64_t>(tokens[static_cast<std::size_t>(i)]) + 1));
    }
    return static_cast<std::size_t>(h % static_cast<std::uint64_t>(width));
}

std::vector<double> featurize_kgram(const TokenState& s, int width) {
    if (width < 1) throw std::invalid_argument("featurize_kgram: width must be >= 1");
    std::vector<double> out(static_cast<std::size_t>(width), 0.0);
    const auto& t = s.tokens;
    for (std::size_t i = 0; i < t.size(); ++i) {
        out[kgram_bucket(std::span<const int>(&t[i], 1), 1, width)] += 1.0;
    }
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        out[kgram_bucket(std::span<const int>(&t[i], 2), 2, width)] += 1.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// InstrumentedOracle

InstrumentedOracle::InstrumentedOracle(Fn fn, int latency_ms)
    : fn_(std::move(fn)), latency_ms_(latency_ms) {
    if (!fn_) throw std::invalid_argument("InstrumentedOracle: null function");
}

std::vector<double> InstrumentedOracle::evaluate(const State& s) {
    const std::string key = state_key(s);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
    }
    std::vector<double> value;
    try {
        value = fn_(s);
    } catch (const std::exception& e) {
        std::cerr << "oracle failure on state " << key << ": " << e.what() << '\n';
        throw;
    }
    if (latency_ms_ > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = memo_.emplace(key, std::move(value));
    if (inserted) ++calls_;
    return it->second;
}

std::uint64_t InstrumentedOracle::call_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

bool InstrumentedOracle::is_memoized(const State& s) const {
    std::lock_guard<std::mutex> lock(mutex_);
    return memo_.count(state_key(s)) > 0;
}

}  // namespace acrl
