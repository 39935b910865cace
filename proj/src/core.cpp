#include "acrl/core.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "acrl/rng.hpp"

namespace acrl {

namespace {

void require_finite(double x, const char* what) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite input");
}

void append_hex(std::string& out, double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", x);
    out += buf;
}

}  // namespace

double delta_reward(double f_prev, double f_next) {
    require_finite(f_prev, "delta_reward");
    require_finite(f_next, "delta_reward");
    return f_prev - f_next;
}

double telescoped_return(std::span<const double> f_values) {
    if (f_values.empty()) throw std::invalid_argument("telescoped_return: empty sequence");
    double total = 0.0;
    for (std::size_t t = 1; t < f_values.size(); ++t) {
        total += delta_reward(f_values[t - 1], f_values[t]);
    }
    return total;
}

double improvement_reward(double primary_t, double primary_0,
                          double secondary_t, double secondary_0) {
    require_finite(primary_t, "improvement_reward");
    require_finite(primary_0, "improvement_reward");
    require_finite(secondary_t, "improvement_reward");
    require_finite(secondary_0, "improvement_reward");
    return -std::abs(secondary_t - secondary_0) - (primary_t - primary_0);
}

std::string state_key(const State& s) {
    std::string key;
    if (const auto* dv = std::get_if<DenseState>(&s)) {
        key = "P;";
        append_hex(key, dv->side_target[0]);
        key += ',';
        append_hex(key, dv->side_target[1]);
        key += ';';
        for (std::size_t i = 0; i < dv->values.size(); ++i) {
            if (i) key += ',';
            append_hex(key, dv->values[i]);
        }
    } else {
        const auto& ts = std::get<TokenState>(s);
        key = "S;";
        for (std::size_t i = 0; i < ts.tokens.size(); ++i) {
            if (i) key += ',';
            key += std::to_string(ts.tokens[i]);
        }
    }
    return key;
}

std::uint64_t state_hash(const State& s) { return fnv1a64(state_key(s)); }

}  // namespace acrl
