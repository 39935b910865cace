#include "acrl/reward_model.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "acrl/rng.hpp"

namespace acrl {

namespace {

std::string vector_key(const std::vector<double>& v) {
    std::string key;
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) key += ',';
        std::snprintf(buf, sizeof(buf), "%a", v[i]);
        key += buf;
    }
    return key;
}

void format_value(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

// Member i's training rows: the split_fraction share of the initial rows
// chosen by the member's split seed, plus every acquired row. Row order of
// the dataset is preserved so training is independent of split bookkeeping.
std::vector<std::size_t> member_train_indices(const LabeledDataset& data,
                                              double split_fraction,
                                              std::uint64_t split_seed) {
    std::vector<std::size_t> initial_idx;
    for (std::size_t i = 0; i < data.rows().size(); ++i) {
        if (data.rows()[i].prov == Provenance::Initial) initial_idx.push_back(i);
    }
    const auto n_train = static_cast<std::size_t>(
        std::llround(split_fraction * static_cast<double>(initial_idx.size())));
    std::vector<std::size_t> keep = initial_idx;
    if (n_train < initial_idx.size()) {
        Rng rng(split_seed);
        rng.shuffle(initial_idx);
        initial_idx.resize(std::max<std::size_t>(1, n_train));
        std::unordered_set<std::size_t> kept(initial_idx.begin(), initial_idx.end());
        keep.clear();
        for (std::size_t i = 0; i < data.rows().size(); ++i) {
            if (data.rows()[i].prov == Provenance::Initial && kept.count(i)) keep.push_back(i);
        }
    }
    for (std::size_t i = 0; i < data.rows().size(); ++i) {
        if (data.rows()[i].prov == Provenance::Acquired) keep.push_back(i);
    }
    return keep;
}

nn::Network train_member(const nn::Network* warm_start, const std::vector<int>& sizes,
                         const LabeledDataset& data, const CommitteeTrainParams& params,
                         std::uint64_t seed, int member) {
    const std::vector<std::size_t> idx =
        member_train_indices(data, params.split_fraction, member_split_seed(seed, member));
    if (idx.empty()) throw std::invalid_argument("committee: empty member train set");
    std::vector<std::span<const double>> xs;
    std::vector<std::span<const double>> ys;
    xs.reserve(idx.size());
    ys.reserve(idx.size());
    for (std::size_t i : idx) {
        xs.emplace_back(data.rows()[i].features);
        ys.emplace_back(data.rows()[i].label);
    }
    nn::Network net = warm_start ? *warm_start : nn::init_network(sizes, member_init_seed(seed, member));
    nn::train(net, xs, ys, params.train, member_train_seed(seed, member));
    return net;
}

}  // namespace

LabeledDataset::LabeledDataset(int feature_dim, int label_dim)
    : feature_dim_(feature_dim), label_dim_(label_dim) {
    if (feature_dim < 1 || label_dim < 1)
        throw std::invalid_argument("LabeledDataset: dimensions must be >= 1");
}

std::string LabeledDataset::feature_key(const std::vector<double>& features) {
    return vector_key(features);
}

std::string LabeledDataset::row_key(const DatasetRow& row) {
    return vector_key(row.features) + "|" + vector_key(row.label);
}

bool LabeledDataset::append(DatasetRow row) {
    if (static_cast<int>(row.features.size()) != feature_dim_)
        throw std::invalid_argument("LabeledDataset::append: feature dimension mismatch");
    if (static_cast<int>(row.label.size()) != label_dim_)
        throw std::invalid_argument("LabeledDataset::append: label dimension mismatch");
    for (double v : row.label) {
        if (!std::isfinite(v))
            throw std::invalid_argument("LabeledDataset::append: non-finite label");
    }
    std::string key = row_key(row);
    if (!row_keys_.insert(std::move(key)).second) return false;
    feature_keys_.insert(feature_key(row.features));
    rows_.push_back(std::move(row));
    return true;
}

bool LabeledDataset::has_features(const std::vector<double>& features) const {
    return feature_keys_.count(feature_key(features)) > 0;
}

void LabeledDataset::write_header(std::ostream& out, int feature_dim, int label_dim) {
    std::string line;
    for (int i = 0; i < feature_dim; ++i) line += "f" + std::to_string(i) + ",";
    if (label_dim == 1) {
        line += "label,";
    } else {
        for (int i = 0; i < label_dim; ++i) line += "label" + std::to_string(i) + ",";
    }
    line += "provenance";
    out << line << '\n';
}

void LabeledDataset::write_row(std::ostream& out, const DatasetRow& row) {
    std::string line;
    for (double v : row.features) {
        format_value(line, v);
        line += ',';
    }
    for (double v : row.label) {
        format_value(line, v);
        line += ',';
    }
    line += row.prov == Provenance::Initial ? "initial" : "acquired";
    out << line << '\n';
}

void LabeledDataset::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("LabeledDataset::save: cannot open " + path.string());
    write_header(out, feature_dim_, label_dim_);
    for (const DatasetRow& row : rows_) write_row(out, row);
}

LabeledDataset LabeledDataset::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("LabeledDataset::load: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error("LabeledDataset::load: empty file " + path.string());
    int feature_dim = 0;
    int label_dim = 0;
    {
        std::istringstream header(line);
        std::string col;
        while (std::getline(header, col, ',')) {
            if (col.rfind("f", 0) == 0 && col != "provenance") {
                ++feature_dim;
            } else if (col.rfind("label", 0) == 0) {
                ++label_dim;
            }
        }
    }
    if (feature_dim < 1 || label_dim < 1)
        throw std::runtime_error("LabeledDataset::load: bad header in " + path.string());
    LabeledDataset data(feature_dim, label_dim);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row_in(line);
        std::string cell;
        DatasetRow row;
        for (int i = 0; i < feature_dim; ++i) {
            if (!std::getline(row_in, cell, ','))
                throw std::runtime_error("LabeledDataset::load: short row in " + path.string());
            row.features.push_back(std::strtod(cell.c_str(), nullptr));
        }
        for (int i = 0; i < label_dim; ++i) {
            if (!std::getline(row_in, cell, ','))
                throw std::runtime_error("LabeledDataset::load: short row in " + path.string());
            row.label.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (!std::getline(row_in, cell))
            throw std::runtime_error("LabeledDataset::load: missing provenance in " + path.string());
        row.prov = cell == "acquired" ? Provenance::Acquired : Provenance::Initial;
        data.append(std::move(row));
    }
    return data;
}

std::uint64_t member_init_seed(std::uint64_t seed, int member) {
    return derive_seed(seed, "member-init", static_cast<std::uint64_t>(member));
}

std::uint64_t member_split_seed(std::uint64_t seed, int member) {
    return derive_seed(seed, "member-split", static_cast<std::uint64_t>(member));
}

std::uint64_t member_train_seed(std::uint64_t seed, int member) {
    return derive_seed(seed, "member-train", static_cast<std::uint64_t>(member));
}

Committee build_committee(const LabeledDataset& initial, int k,
                          const CommitteeTrainParams& params, std::uint64_t seed,
                          CommitteeData* data) {
    if (k < 1) throw std::invalid_argument("build_committee: k must be >= 1");
    if (initial.empty()) throw std::invalid_argument("build_committee: empty dataset");
    if (params.split_fraction <= 0.0 || params.split_fraction > 1.0)
        throw std::invalid_argument("build_committee: split_fraction must be in (0, 1]");
    std::vector<int> sizes;
    sizes.push_back(initial.feature_dim());
    for (int h : params.hidden) sizes.push_back(h);
    sizes.push_back(initial.label_dim());

    Committee committee;
    committee.layer_sizes = sizes;
    committee.members.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        committee.members.push_back(train_member(nullptr, sizes, initial, params, seed, i));
    }
    if (data) {
        data->per_member.assign(static_cast<std::size_t>(k), initial);
    }
    return committee;
}

std::vector<double> committee_mean(const Committee& committee, std::span<const double> x) {
    if (committee.members.empty()) throw std::invalid_argument("committee_mean: no members");
    std::vector<double> mean(static_cast<std::size_t>(committee.members[0].output_dim()), 0.0);
    for (const nn::Network& net : committee.members) {
        const std::vector<double> out = nn::forward(net, x);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += out[i];
    }
    for (double& v : mean) v /= static_cast<double>(committee.members.size());
    return mean;
}

std::vector<double> committee_std(const Committee& committee, std::span<const double> x) {
    if (committee.members.empty()) throw std::invalid_argument("committee_std: no members");
    const std::size_t dim = static_cast<std::size_t>(committee.members[0].output_dim());
    std::vector<std::vector<double>> outputs;
    outputs.reserve(committee.members.size());
    for (const nn::Network& net : committee.members) outputs.push_back(nn::forward(net, x));
    const double k = static_cast<double>(committee.members.size());
    // two-pass variance, exactly zero when every member agrees
    std::vector<double> sd(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        bool all_equal = true;
        for (const auto& out : outputs) all_equal = all_equal && out[i] == outputs[0][i];
        if (all_equal) continue;
        double mean = 0.0;
        for (const auto& out : outputs) mean += out[i];
        mean /= k;
        double var = 0.0;
        for (const auto& out : outputs) {
            const double d = out[i] - mean;
            var += d * d;
        }
        sd[i] = std::sqrt(var / k);
    }
    return sd;
}

double predict_mean(const Committee& committee, std::span<const double> x) {
    const std::vector<double> mean = committee_mean(committee, x);
    if (mean.size() != 1) throw std::invalid_argument("predict_mean: committee output is not scalar");
    return mean[0];
}

double predict_std(const Committee& committee, std::span<const double> x) {
    const std::vector<double> sd = committee_std(committee, x);
    if (sd.size() != 1) throw std::invalid_argument("predict_std: committee output is not scalar");
    return sd[0];
}

double std_score(const Committee& committee, std::span<const double> x) {
    const std::vector<double> sd = committee_std(committee, x);
    double total = 0.0;
    for (double v : sd) total += v;
    return total / static_cast<double>(sd.size());
}

int append_acquired(CommitteeData& data, int member, std::span<const DatasetRow> rows) {
    if (member < 0 || member >= static_cast<int>(data.per_member.size()))
        throw std::invalid_argument("append_acquired: member out of range");
    int added = 0;
    for (const DatasetRow& row : rows) {
        DatasetRow copy = row;
        copy.prov = Provenance::Acquired;
        if (data.per_member[static_cast<std::size_t>(member)].append(std::move(copy))) ++added;
    }
    return added;
}

Committee retrain(const Committee& committee, const CommitteeData& data,
                  const CommitteeTrainParams& params, std::uint64_t seed) {
    if (data.per_member.size() != committee.members.size())
        throw std::invalid_argument("retrain: dataset count does not match committee size");
    Committee next;
    next.layer_sizes = committee.layer_sizes;
    next.members.reserve(committee.members.size());
    for (std::size_t i = 0; i < committee.members.size(); ++i) {
        if (data.per_member[i].empty())
            throw std::invalid_argument("retrain: empty member dataset");
        const nn::Network* warm = params.finetune ? &committee.members[i] : nullptr;
        next.members.push_back(train_member(warm, committee.layer_sizes, data.per_member[i],
                                            params, seed, static_cast<int>(i)));
    }
    return next;
}

}  // namespace acrl
