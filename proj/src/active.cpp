#include "acrl/active.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace acrl {

const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Random: return "random";
        case StrategyKind::CommitteeStd: return "committee_std";
        case StrategyKind::Binned: return "binned";
        case StrategyKind::PredictedValue: return "predicted_value";
        case StrategyKind::GradNorm: return "grad_norm";
    }
    return "unknown";
}

ExperienceWindow::ExperienceWindow(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ExperienceWindow: capacity must be > 0");
}

void ExperienceWindow::observe(const State& s, std::vector<double> features) {
    std::string key = state_key(s);
    if (keys_.count(key)) return;
    if (entries_.size() == capacity_) {
        keys_.erase(entries_.front().key);
        entries_.pop_front();
    }
    keys_.insert(key);
    entries_.push_back(Entry{s, std::move(key), std::move(features)});
}

namespace {

double candidate_mean(const Committee& committee, const std::vector<double>& x) {
    const std::vector<double> mean = committee_mean(committee, x);
    double total = 0.0;
    for (double v : mean) total += v;
    return total / static_cast<double>(mean.size());
}

double grad_norm_score(const Committee& committee, const std::vector<double>& x) {
    std::vector<double> grad(x.size(), 0.0);
    for (const nn::Network& net : committee.members) {
        const std::vector<double> g = nn::input_gradient(net, x);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
    double norm_sq = 0.0;
    const double k = static_cast<double>(committee.members.size());
    for (double v : grad) norm_sq += (v / k) * (v / k);
    return std::sqrt(norm_sq);
}

std::vector<std::size_t> top_n(const std::vector<double>& scores, std::size_t n) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });
    order.resize(n);
    return order;
}

}  // namespace

ScoredCandidates score_candidates(const AcquisitionStrategy& strategy,
                                  const Committee& committee,
                                  std::span<const std::vector<double>> candidates,
                                  Rng& rng) {
    if (candidates.empty()) throw std::invalid_argument("score_candidates: empty candidate set");
    ScoredCandidates out;
    out.scores.reserve(candidates.size());
    switch (strategy.kind) {
        case StrategyKind::Random:
            for (std::size_t i = 0; i < candidates.size(); ++i) out.scores.push_back(rng.uniform());
            break;
        case StrategyKind::CommitteeStd:
            for (const auto& x : candidates) out.scores.push_back(std_score(committee, x));
            break;
        case StrategyKind::PredictedValue:
            for (const auto& x : candidates) out.scores.push_back(candidate_mean(committee, x));
            break;
        case StrategyKind::GradNorm:
            for (const auto& x : candidates) out.scores.push_back(grad_norm_score(committee, x));
            break;
        case StrategyKind::Binned: {
            if (strategy.num_bins < 1)
                throw std::invalid_argument("score_candidates: num_bins must be >= 1");
            std::vector<double> means;
            means.reserve(candidates.size());
            for (const auto& x : candidates) {
                means.push_back(candidate_mean(committee, x));
                out.scores.push_back(std_score(committee, x));
            }
            const double lo = *std::min_element(means.begin(), means.end());
            const double hi = *std::max_element(means.begin(), means.end());
            out.bins.reserve(candidates.size());
            if (hi <= lo) {
                out.bins.assign(candidates.size(), 0);
            } else {
                const double width = (hi - lo) / strategy.num_bins;
                for (double m : means) {
                    int bin = static_cast<int>(std::floor((m - lo) / width));
                    bin = std::min(bin, strategy.num_bins - 1);
                    out.bins.push_back(bin);
                }
            }
            break;
        }
    }
    return out;
}

std::vector<std::size_t> select(const ScoredCandidates& scored,
                                const AcquisitionStrategy& strategy, std::size_t n,
                                Rng& rng) {
    const std::size_t count = scored.scores.size();
    if (n > count) throw std::invalid_argument("select: n exceeds candidate count");
    if (n == 0) return {};
    switch (strategy.kind) {
        case StrategyKind::Random:
            return rng.sample_without_replacement(count, n);
        case StrategyKind::CommitteeStd:
        case StrategyKind::PredictedValue:
        case StrategyKind::GradNorm:
            return top_n(scored.scores, n);
        case StrategyKind::Binned: {
            if (scored.bins.size() != count)
                throw std::invalid_argument("select: Binned requires bin assignments");
            // per-bin candidate lists ordered best-first
            std::map<int, std::vector<std::size_t>> bins;
            for (std::size_t i = 0; i < count; ++i) bins[scored.bins[i]].push_back(i);
            for (auto& [bin, members] : bins) {
                std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
                    return scored.scores[a] > scored.scores[b];
                });
            }
            std::vector<std::size_t> picked;
            picked.reserve(n);
            std::map<int, std::size_t> next_in_bin;
            while (picked.size() < n) {
                bool any = false;
                for (auto& [bin, members] : bins) {
                    std::size_t& cursor = next_in_bin[bin];
                    if (cursor >= members.size()) continue;
                    picked.push_back(members[cursor++]);
                    any = true;
                    if (picked.size() == n) break;
                }
                if (!any) break;
            }
            return picked;
        }
    }
    throw std::logic_error("select: unhandled strategy");
}

AcquisitionOutcome acquisition_round(const ExperienceWindow& window,
                                     const Committee& committee,
                                     const CommitteeData& data,
                                     InstrumentedOracle& oracle,
                                     const AcquisitionStrategy& strategy, Rng& rng) {
    if (window.size() == 0) throw std::invalid_argument("acquisition_round: empty window");
    const int k = committee.size();
    if (static_cast<int>(data.per_member.size()) != k)
        throw std::invalid_argument("acquisition_round: dataset count mismatch");

    AcquisitionOutcome outcome;
    outcome.candidate_count = window.size();
    outcome.rows_per_member.resize(static_cast<std::size_t>(k));

    // per-member selection over the window entries not yet in that member's
    // dataset; sampling passes run separately per member
    std::vector<std::vector<const ExperienceWindow::Entry*>> selected(
        static_cast<std::size_t>(k));
    for (int member = 0; member < k; ++member) {
        std::vector<const ExperienceWindow::Entry*> pool;
        std::vector<std::vector<double>> feats;
        for (const auto& entry : window.entries()) {
            if (data.per_member[static_cast<std::size_t>(member)].has_features(entry.features))
                continue;
            pool.push_back(&entry);
            feats.push_back(entry.features);
        }
        if (pool.empty()) continue;
        Rng member_rng(derive_seed(rng.next_u64(), "member", static_cast<std::uint64_t>(member)));
        const ScoredCandidates scored = score_candidates(strategy, committee, feats, member_rng);
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(strategy.budget),
                                                    pool.size());
        for (std::size_t idx : select(scored, strategy, n, member_rng)) {
            selected[static_cast<std::size_t>(member)].push_back(pool[idx]);
        }
        outcome.selected_total += selected[static_cast<std::size_t>(member)].size();
    }

    // one memoized oracle query per distinct selected state, in key order so
    // results do not depend on member ordering or worker scheduling
    std::map<std::string, const ExperienceWindow::Entry*> distinct;
    for (const auto& member_selection : selected) {
        for (const ExperienceWindow::Entry* entry : member_selection) {
            distinct.emplace(entry->key, entry);
        }
    }
    const std::uint64_t calls_before = oracle.call_count();
    std::map<std::string, std::vector<double>> labels;
    for (const auto& [key, entry] : distinct) {
        try {
            labels.emplace(key, oracle.evaluate(entry->state));
        } catch (const std::exception& e) {
            std::cerr << "acquisition_round: skipping state " << key << ": " << e.what() << '\n';
            ++outcome.failed_states;
        }
    }
    outcome.oracle_calls = oracle.call_count() - calls_before;

    for (int member = 0; member < k; ++member) {
        auto& rows = outcome.rows_per_member[static_cast<std::size_t>(member)];
        // key order keeps datasets schedule independent
        std::map<std::string, const ExperienceWindow::Entry*> ordered;
        for (const ExperienceWindow::Entry* entry : selected[static_cast<std::size_t>(member)]) {
            ordered.emplace(entry->key, entry);
        }
        for (const auto& [key, entry] : ordered) {
            auto it = labels.find(key);
            if (it == labels.end()) continue;
            rows.push_back(DatasetRow{entry->features, it->second, Provenance::Acquired});
        }
    }
    return outcome;
}

}  // namespace acrl
