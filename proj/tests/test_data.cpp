#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "credo/data.hpp"
#include "test_util.hpp"

using namespace credo;

namespace {

void write(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

}  // namespace

TEST(Recipes, Tabular1FollowsLogOnePlusTwoX) {
    auto d = generate({"tabular1", 500, 3});
    ASSERT_EQ(d.size(), 500u);
    for (std::size_t r = 0; r < d.size(); ++r) {
        const double x = d.features(r, 0);
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
        EXPECT_DOUBLE_EQ(d.targets[r], std::log1p(2.0 * x));
    }
    EXPECT_EQ(d.task, Task::regression);
}

TEST(Recipes, Tabular2And3SupportAndTarget) {
    for (auto [id, lo, hi] : {std::tuple{"tabular2", 0.0, 1.0}, std::tuple{"tabular3", -2.0, -1.0}}) {
        auto d = generate({id, 300, 1});
        EXPECT_EQ(d.feature_names, (std::vector<std::string>{"x", "y"}));
        for (std::size_t r = 0; r < d.size(); ++r) {
            const double x = d.features(r, 0), y = d.features(r, 1);
            EXPECT_GE(x, lo);
            EXPECT_LE(y, hi);
            EXPECT_NEAR(d.targets[r], std::sin(x) + std::exp(y), 1e-15);
        }
    }
}

TEST(Recipes, Tabular4BinaryAboveMean) {
    auto d = generate({"tabular4", 4000, 2});
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"X", "Z", "W"}));
    EXPECT_EQ(d.task, Task::classification);
    EXPECT_EQ(d.class_count(), 2u);
    double ones = 0;
    for (double y : d.targets) ones += y;
    EXPECT_NEAR(ones / 4000.0, 0.5, 0.05);
    // Label tracks 2X + Z + W closely (outcome noise is small).
    std::size_t agree = 0;
    double mean = 0.0;
    for (std::size_t r = 0; r < d.size(); ++r) mean += 2 * d.features(r, 0) + d.features(r, 1) + d.features(r, 2);
    mean /= 4000.0;
    for (std::size_t r = 0; r < d.size(); ++r) {
        const double s = 2 * d.features(r, 0) + d.features(r, 1) + d.features(r, 2);
        agree += (s > mean) == (d.targets[r] == 1.0);
    }
    EXPECT_GT(agree, 3900u);
}

TEST(Recipes, SeedDeterminismAndUnknownId) {
    EXPECT_EQ(generate({"tabular2", 50, 9}).features, generate({"tabular2", 50, 9}).features);
    EXPECT_THROW(generate({"tabular9", 50, 9}), DataError);
}

TEST(Split, PartitionsAllRows) {
    auto d = split(generate({"tabular1", 101, 1}), {0.8, 0.2}, 5);
    EXPECT_EQ(d.splits.train.size(), 81u);
    EXPECT_EQ(d.splits.test.size(), 20u);
    std::set<std::size_t> all(d.splits.train.begin(), d.splits.train.end());
    all.insert(d.splits.test.begin(), d.splits.test.end());
    EXPECT_EQ(all.size(), 101u);
    auto e = split(generate({"tabular1", 101, 1}), {0.8, 0.2}, 5);
    EXPECT_EQ(d.splits.train, e.splits.train);
}

TEST(Split, Errors) {
    auto d = generate({"tabular1", 10, 1});
    EXPECT_THROW(split(d, {0.5, 0.4}, 1), DataError);
    EXPECT_THROW(split(d, {1.0}, 1), DataError);
    EXPECT_THROW(split(generate({"tabular1", 2, 1}), {0.9, 0.05, 0.05}, 1), DataError);
}

TEST(Split, CarveValidation) {
    auto d = carve_validation(split(generate({"tabular1", 100, 1}), {0.8, 0.2}, 1), 0.25, 3);
    EXPECT_EQ(d.splits.train.size(), 60u);
    EXPECT_EQ(d.splits.validation.size(), 20u);
    EXPECT_EQ(d.splits.test.size(), 20u);
}

TEST(Normalization, MinMaxUsesDeclaredBounds) {
    auto d = normalize(split(generate({"tabular3", 200, 1}), {0.8, 0.2}, 1), NormalizationMethod::minmax);
    EXPECT_DOUBLE_EQ(d.normalization.shift[0], -2.0);
    EXPECT_DOUBLE_EQ(d.normalization.scale[0], 1.0);
    EXPECT_THROW(normalize(d, NormalizationMethod::minmax), DataError);
}

TEST(Normalization, ZScoreOnTrainSplitAndInverse) {
    auto raw = split(generate({"tabular4", 1000, 1}), {0.8, 0.2}, 1);
    auto d = normalize(raw, NormalizationMethod::zscore);
    const auto tr = d.rows(d.splits.train);
    for (std::size_t c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        for (double x : tr.column(c)) m += x;
        m /= tr.rows();
        for (double x : tr.column(c)) v += (x - m) * (x - m);
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v / tr.rows(), 1.0, 1e-12);
    }
    auto back = denormalize(d.features, d.normalization);
    for (std::size_t r = 0; r < 10; ++r) EXPECT_NEAR(back(r, 1), raw.features(r, 1), 1e-12);
}

TEST(Csv, LoadWithOneHotAndErrors) {
    const auto dir = credo::testing::scratch_dir("csv");
    write(dir + "/ok.csv", "a,color,y\n1.5,red,0\n2.5,blue,1\n\"3\",red,1\n");
    CsvSchema s;
    s.target = "y";
    s.one_hot = {"color"};
    s.task = Task::classification;
    auto d = load_csv(dir + "/ok.csv", s);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "color=blue", "color=red"}));
    EXPECT_DOUBLE_EQ(d.features(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(d.features(2, 0), 3.0);

    write(dir + "/bad.csv", "a,y\n1,2\nfoo,3\n");
    s.one_hot.clear();
    s.task = Task::regression;
    try {
        load_csv(dir + "/bad.csv", s);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
    }
    write(dir + "/empty.csv", "a,y\n");
    EXPECT_THROW(load_csv(dir + "/empty.csv", s), DataError);
    s.target = "missing";
    EXPECT_THROW(load_csv(dir + "/ok.csv", s), DataError);
}

TEST(Csv, SaveLoadRoundTrip) {
    const auto dir = credo::testing::scratch_dir("csv_rt");
    auto d = generate({"tabular2", 20, 4});
    save_csv(d, dir + "/d.csv");
    CsvSchema s;
    s.target = "z";
    auto back = load_csv(dir + "/d.csv", s);
    for (std::size_t r = 0; r < 20; ++r) EXPECT_NEAR(back.features(r, 1), d.features(r, 1), 1e-11);
}

TEST(Binarize, UsesTrainMean) {
    Dataset d;
    d.features = Matrix(4, 1);
    d.targets = {0.0, 1.0, 2.0, 10.0};
    d.splits.train = {0, 1, 2};
    auto b = binarize_output(d);
    EXPECT_EQ(b.targets, (std::vector<double>{0.0, 0.0, 1.0, 1.0}));
    d.targets = {1.0, 1.0, 1.0, 1.0};
    EXPECT_THROW(binarize_output(d), DataError);
}

TEST(Graph, DatasetFromGraph) {
    auto d = dataset_from_graph(synthetic_tabular4_graph(), "Y", 200, 3, false);
    EXPECT_EQ(d.feature_names, (std::vector<std::string>{"W", "Z", "X"}));
    EXPECT_EQ(d.task, Task::regression);
}

TEST(Manifest, HashChangesWithData) {
    auto a = split(generate({"tabular1", 50, 1}), {0.8, 0.2}, 1);
    auto b = split(generate({"tabular1", 50, 2}), {0.8, 0.2}, 1);
    EXPECT_EQ(dataset_hash(a), dataset_hash(a));
    EXPECT_NE(dataset_hash(a), dataset_hash(b));
}
