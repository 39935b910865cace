#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "acrl/reward_model.hpp"
#include "acrl/rng.hpp"

using namespace acrl;

namespace {

LabeledDataset toy_dataset(int rows, std::uint64_t seed, int feature_dim = 2) {
    Rng rng(seed);
    LabeledDataset data(feature_dim, 1);
    for (int i = 0; i < rows; ++i) {
        std::vector<double> x(static_cast<std::size_t>(feature_dim));
        for (double& v : x) v = rng.uniform(-1.0, 1.0);
        double y = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) y += (j + 1) * x[j];
        data.append(DatasetRow{std::move(x), {y}, Provenance::Initial});
    }
    return data;
}

CommitteeTrainParams small_params() {
    CommitteeTrainParams p;
    p.hidden = {8};
    p.train.epochs = 10;
    p.train.batch_size = 8;
    p.split_fraction = 0.8;
    return p;
}

// committee whose members are hand-set constant predictors
Committee constant_committee(const std::vector<double>& outputs) {
    Committee c;
    c.layer_sizes = {2, 1};
    for (double v : outputs) {
        nn::Network net = nn::init_network({2, 1}, 0);
        net.layers[0].w = {0.0, 0.0};
        net.layers[0].b = {v};
        c.members.push_back(std::move(net));
    }
    return c;
}

}  // namespace

TEST_CASE("dataset rejects mismatches and duplicate rows") {
    LabeledDataset data(2, 1);
    CHECK(data.append(DatasetRow{{1.0, 2.0}, {3.0}, Provenance::Initial}));
    CHECK_FALSE(data.append(DatasetRow{{1.0, 2.0}, {3.0}, Provenance::Acquired}));
    CHECK(data.append(DatasetRow{{1.0, 2.0}, {4.0}, Provenance::Acquired}));
    CHECK(data.size() == 2);
    CHECK(data.has_features({1.0, 2.0}));
    CHECK_FALSE(data.has_features({9.0, 9.0}));
    CHECK_THROWS_AS(data.append(DatasetRow{{1.0}, {0.0}, Provenance::Initial}),
                    std::invalid_argument);
    CHECK_THROWS_AS(data.append(DatasetRow{{1.0, 1.0}, {std::nan("")}, Provenance::Initial}),
                    std::invalid_argument);
}

TEST_CASE("dataset csv round trip") {
    LabeledDataset data = toy_dataset(7, 77);
    data.append(DatasetRow{{0.25, -0.75}, {1.5}, Provenance::Acquired});
    const auto path = std::filesystem::temp_directory_path() / "acrl_dataset_roundtrip.csv";
    data.save(path);
    const LabeledDataset loaded = LabeledDataset::load(path);
    REQUIRE(loaded.size() == data.size());
    REQUIRE(loaded.feature_dim() == data.feature_dim());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(loaded.rows()[i].features == data.rows()[i].features);
        CHECK(loaded.rows()[i].label == data.rows()[i].label);
        CHECK(loaded.rows()[i].prov == data.rows()[i].prov);
    }
    std::filesystem::remove(path);
}

TEST_CASE("build_committee trains k distinct members deterministically") {
    const LabeledDataset data = toy_dataset(40, 1);
    const CommitteeTrainParams params = small_params();
    CommitteeData cdata;
    const Committee c1 = build_committee(data, 3, params, 5, &cdata);
    REQUIRE(c1.size() == 3);
    CHECK(cdata.per_member.size() == 3);
    CHECK_FALSE(c1.members[0] == c1.members[1]);
    CHECK_FALSE(c1.members[1] == c1.members[2]);

    const Committee c2 = build_committee(data, 3, params, 5);
    for (int i = 0; i < 3; ++i) CHECK(c1.members[i] == c2.members[i]);

    CHECK_THROWS_AS(build_committee(LabeledDataset(2, 1), 3, params, 5), std::invalid_argument);
    CHECK_THROWS_AS(build_committee(data, 0, params, 5), std::invalid_argument);
}

TEST_CASE("degenerate k=1 full-split committee equals the single trained net") {
    const LabeledDataset data = toy_dataset(30, 2);
    CommitteeTrainParams params = small_params();
    params.split_fraction = 1.0;
    const Committee c = build_committee(data, 1, params, 9);

    std::vector<std::span<const double>> xs;
    std::vector<std::span<const double>> ys;
    for (const DatasetRow& row : data.rows()) {
        xs.emplace_back(row.features);
        ys.emplace_back(row.label);
    }
    nn::Network net = nn::init_network({2, 8, 1}, member_init_seed(9, 0));
    nn::train(net, xs, ys, params.train, member_train_seed(9, 0));
    CHECK(c.members[0] == net);
    const std::vector<double> probe{0.3, -0.6};
    CHECK(predict_mean(c, probe) == nn::forward(net, probe)[0]);
}

TEST_CASE("predict_mean and predict_std on hand-set member outputs") {
    const Committee c = constant_committee({1.0, 2.0, 3.0});
    const std::vector<double> x{0.0, 0.0};
    CHECK(predict_mean(c, x) == doctest::Approx(2.0));
    // population std of {1,2,3} = sqrt(2/3)
    CHECK(predict_std(c, x) == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(std_score(c, x) == doctest::Approx(predict_std(c, x)));

    const Committee identical = constant_committee({0.7, 0.7, 0.7});
    CHECK(predict_std(identical, x) == 0.0);
    CHECK(predict_mean(identical, x) == doctest::Approx(0.7));

    // translation invariance of the disagreement
    const Committee shifted = constant_committee({1.0 + 5.5, 2.0 + 5.5, 3.0 + 5.5});
    CHECK(predict_std(shifted, x) == doctest::Approx(predict_std(c, x)).epsilon(1e-12));
}

TEST_CASE("committee predictions are invariant to member ordering") {
    Committee c = constant_committee({0.4, 1.1, -0.3});
    const std::vector<double> x{0.2, 0.8};
    const double mean = predict_mean(c, x);
    const double sd = predict_std(c, x);
    std::swap(c.members[0], c.members[2]);
    CHECK(predict_mean(c, x) == doctest::Approx(mean).epsilon(1e-12));
    CHECK(predict_std(c, x) == doctest::Approx(sd).epsilon(1e-12));
}

TEST_CASE("append_acquired isolates members and skips duplicates") {
    const LabeledDataset data = toy_dataset(20, 3);
    const CommitteeTrainParams params = small_params();
    CommitteeData cdata;
    build_committee(data, 3, params, 4, &cdata);

    const std::size_t before = cdata.per_member[0].size();
    CHECK(append_acquired(cdata, 1, {}) == 0);
    CHECK(cdata.per_member[1].size() == before);

    std::vector<DatasetRow> rows;
    for (int i = 0; i < 5; ++i) {
        rows.push_back(DatasetRow{{2.0 + i, 3.0 + i}, {1.0 * i}, Provenance::Acquired});
    }
    CHECK(append_acquired(cdata, 1, rows) == 5);
    CHECK(cdata.per_member[0].size() == before);
    CHECK(cdata.per_member[1].size() == before + 5);
    CHECK(cdata.per_member[2].size() == before);
    // re-appending the same rows adds nothing
    CHECK(append_acquired(cdata, 1, rows) == 0);
    CHECK(cdata.per_member[1].size() == before + 5);
}

TEST_CASE("retrain with no new rows reproduces build_committee") {
    const LabeledDataset data = toy_dataset(25, 6);
    const CommitteeTrainParams params = small_params();
    CommitteeData cdata;
    const Committee built = build_committee(data, 3, params, 11, &cdata);
    const Committee again = retrain(built, cdata, params, 11);
    for (int i = 0; i < 3; ++i) CHECK(built.members[i] == again.members[i]);
}

TEST_CASE("retraining on shifted acquired rows reduces loss there") {
    // initial data covers x in [-1, 1]; acquired rows live in [2, 3]
    const LabeledDataset data = toy_dataset(60, 8, 1);
    CommitteeTrainParams params = small_params();
    params.hidden = {16};
    params.train.epochs = 80;
    params.train.adam.learning_rate = 0.01;
    CommitteeData cdata;
    const Committee before = build_committee(data, 3, params, 13, &cdata);

    Rng rng(14);
    std::vector<DatasetRow> shifted;
    for (int i = 0; i < 40; ++i) {
        const double x = rng.uniform(2.0, 3.0);
        shifted.push_back(DatasetRow{{x}, {std::sin(x)}, Provenance::Acquired});
    }
    for (int m = 0; m < 3; ++m) append_acquired(cdata, m, shifted);
    const Committee after = retrain(before, cdata, params, 13);

    auto mse_on_shifted = [&](const Committee& c) {
        double total = 0.0;
        for (const DatasetRow& row : shifted) {
            const double err = predict_mean(c, row.features) - row.label[0];
            total += err * err;
        }
        return total / static_cast<double>(shifted.size());
    };
    CHECK(mse_on_shifted(after) < mse_on_shifted(before));
}

TEST_CASE("finetune retraining starts from the current members") {
    const LabeledDataset data = toy_dataset(25, 21);
    CommitteeTrainParams params = small_params();
    CommitteeData cdata;
    const Committee built = build_committee(data, 2, params, 31, &cdata);

    CommitteeTrainParams finetune = params;
    finetune.finetune = true;
    finetune.train.epochs = 0;  // zero epochs: warm start passes through unchanged
    const Committee same = retrain(built, cdata, finetune, 31);
    for (int i = 0; i < 2; ++i) CHECK(same.members[i] == built.members[i]);
}

TEST_CASE("a reward callback bound to the committee sees retrained parameters") {
    const LabeledDataset data = toy_dataset(25, 51);
    const CommitteeTrainParams params = small_params();
    CommitteeData cdata;
    Committee committee = build_committee(data, 2, params, 61, &cdata);
    const std::vector<double> probe{0.4, -0.2};
    const auto reward = [&committee, &probe] { return predict_mean(committee, probe); };
    const double before = reward();
    // forced parameter change stands in for a retrain on new data
    committee.members[0].layers[0].b[0] += 10.0;
    CHECK(reward() != before);
    committee = retrain(committee, cdata, params, 61);
    CHECK(reward() == before);
}

TEST_CASE("vector-labeled committees expose per-dim mean and std") {
    LabeledDataset data(2, 2);
    Rng rng(41);
    for (int i = 0; i < 30; ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        const double b = rng.uniform(-1.0, 1.0);
        data.append(DatasetRow{{a, b}, {a + b, a - b}, Provenance::Initial});
    }
    CommitteeTrainParams params = small_params();
    const Committee c = build_committee(data, 3, params, 99);
    const std::vector<double> x{0.1, 0.4};
    CHECK(committee_mean(c, x).size() == 2);
    CHECK(committee_std(c, x).size() == 2);
    CHECK(std_score(c, x) >= 0.0);
    CHECK_THROWS_AS(predict_mean(c, x), std::invalid_argument);
}
