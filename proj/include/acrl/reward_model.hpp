#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "acrl/nn.hpp"

namespace acrl {

enum class Provenance { Initial, Acquired };

struct DatasetRow {
    std::vector<double> features;
    std::vector<double> label;
    Provenance prov = Provenance::Initial;
};

// Ground-truth training set for the reward committee. Duplicate
// (features, label) rows are rejected so memoized re-queries cannot inflate it.
class LabeledDataset {
  public:
    LabeledDataset() = default;
    LabeledDataset(int feature_dim, int label_dim);

    int feature_dim() const { return feature_dim_; }
    int label_dim() const { return label_dim_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const std::vector<DatasetRow>& rows() const { return rows_; }

    // false when an identical (features, label) row is already present
    bool append(DatasetRow row);

    bool has_features(const std::vector<double>& features) const;

    void save(const std::filesystem::path& path) const;
    static LabeledDataset load(const std::filesystem::path& path);

    static std::string row_key(const DatasetRow& row);
    static std::string feature_key(const std::vector<double>& features);

    static void write_header(std::ostream& out, int feature_dim, int label_dim);
    static void write_row(std::ostream& out, const DatasetRow& row);

  private:
    int feature_dim_ = 0;
    int label_dim_ = 1;
    std::vector<DatasetRow> rows_;
    std::unordered_set<std::string> row_keys_;
    std::unordered_set<std::string> feature_keys_;
};

struct CommitteeTrainParams {
    std::vector<int> hidden = {64, 64};
    nn::TrainParams train;
    double split_fraction = 0.9;
    // retrain from scratch by default; fine-tuning continues from the
    // current member parameters
    bool finetune = false;
};

// k independently trained regressors; mean is the reward estimate, standard
// deviation the disagreement.
struct Committee {
    std::vector<nn::Network> members;
    std::vector<int> layer_sizes;

    int size() const { return static_cast<int>(members.size()); }
};

// One dataset per member: the shared initial rows plus the rows that member's
// acquisition passes selected.
struct CommitteeData {
    std::vector<LabeledDataset> per_member;
};

std::uint64_t member_init_seed(std::uint64_t seed, int member);
std::uint64_t member_split_seed(std::uint64_t seed, int member);
std::uint64_t member_train_seed(std::uint64_t seed, int member);

// Trains k members on member-specific splits of `initial`. When `data` is
// non-null it receives the per-member dataset copies used for later
// acquisition and retraining.
Committee build_committee(const LabeledDataset& initial, int k,
                          const CommitteeTrainParams& params, std::uint64_t seed,
                          CommitteeData* data = nullptr);

// Per-output-dim mean / population standard deviation of member predictions.
std::vector<double> committee_mean(const Committee& committee, std::span<const double> x);
std::vector<double> committee_std(const Committee& committee, std::span<const double> x);

// Scalar committees only (output dim 1).
double predict_mean(const Committee& committee, std::span<const double> x);
double predict_std(const Committee& committee, std::span<const double> x);

// Acquisition score: disagreement averaged over output dims; equals
// predict_std for scalar committees.
double std_score(const Committee& committee, std::span<const double> x);

// Appends rows to one member's dataset; returns how many were actually added
// (exact duplicates are skipped).
int append_acquired(CommitteeData& data, int member, std::span<const DatasetRow> rows);

// Every member retrained on its updated dataset. With unchanged datasets and
// the same seed this reproduces build_committee exactly.
Committee retrain(const Committee& committee, const CommitteeData& data,
                  const CommitteeTrainParams& params, std::uint64_t seed);

}  // namespace acrl
