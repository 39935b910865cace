#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "acrl/core.hpp"
#include "acrl/envs.hpp"
#include "acrl/reward_model.hpp"
#include "acrl/rng.hpp"

namespace acrl {

enum class StrategyKind { Random, CommitteeStd, Binned, PredictedValue, GradNorm };

struct AcquisitionStrategy {
    StrategyKind kind = StrategyKind::CommitteeStd;
    int num_bins = 10;    // Binned only
    int budget = 400;     // labels per member per round
    int window_size = 4000;
    int every = 500;      // episodes between rounds
};

const char* strategy_name(StrategyKind kind);

// Ring of the last N distinct visited states with their feature vectors.
class ExperienceWindow {
  public:
    struct Entry {
        State state;
        std::string key;
        std::vector<double> features;
    };

    explicit ExperienceWindow(std::size_t capacity);

    void observe(const State& s, std::vector<double> features);
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::deque<Entry>& entries() const { return entries_; }

  private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
    std::unordered_set<std::string> keys_;
};

struct ScoredCandidates {
    std::vector<double> scores;
    std::vector<int> bins;  // populated for Binned only
};

// Acquisition scores h(s) per candidate. Random draws seeded uniforms;
// CommitteeStd / PredictedValue / GradNorm derive from the committee; Binned
// scores by disagreement and also assigns equal-width bins over the
// predicted-mean range (half open, maximum in the last bin).
ScoredCandidates score_candidates(const AcquisitionStrategy& strategy,
                                  const Committee& committee,
                                  std::span<const std::vector<double>> candidates,
                                  Rng& rng);

// Indices of the n picks. Score-based strategies take the n largest scores
// (ties to the lowest index); Random draws without replacement; Binned
// round-robins over bins taking each bin's best remaining candidate.
std::vector<std::size_t> select(const ScoredCandidates& scored,
                                const AcquisitionStrategy& strategy, std::size_t n,
                                Rng& rng);

struct AcquisitionOutcome {
    std::vector<std::vector<DatasetRow>> rows_per_member;  // sorted by state key
    std::uint64_t oracle_calls = 0;  // new distinct labels this round
    std::size_t candidate_count = 0;
    std::size_t selected_total = 0;
    std::size_t failed_states = 0;
};

// One acquisition pass per member over the window (states already in that
// member's dataset are skipped), a single memoized oracle query per distinct
// selected state, per-member row sets out. Oracle failures skip the state.
AcquisitionOutcome acquisition_round(const ExperienceWindow& window,
                                     const Committee& committee,
                                     const CommitteeData& data,
                                     InstrumentedOracle& oracle,
                                     const AcquisitionStrategy& strategy, Rng& rng);

}  // namespace acrl
