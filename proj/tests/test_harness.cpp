#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>

#include "credo/harness.hpp"
#include "credo/io_util.hpp"
#include "test_util.hpp"

using namespace credo;
namespace fs = std::filesystem;

namespace {

nlohmann::json small_config(const std::string& out, double lambda1 = 10.0) {
    return {
        {"name", "small"},
        {"seed", 3},
        {"data", {{"recipe", "tabular1"}, {"n", 200}}},
        {"model", {{"hidden_sizes", {4, 8}}}},
        {"training", {{"learning_rate", 0.01}, {"batch_size", 64}, {"epochs", 3}, {"lambda1", lambda1}}},
        {"priors",
         {{"effect", "ACDE"},
          {"priors", {{{"feature", "x"}, {"family", "logarithmic"}, {"params", {{"a", 1.0}, {"b", 2.0}}}}}}}},
        {"effects", {{"points", 10}}},
        {"output", out},
    };
}

std::string slurp(const std::string& path) { return read_text_file(path); }

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

TEST(Config, MissingPriorFileNamesPath) {
    const auto dir = credo::testing::scratch_dir("cfg_missing");
    auto j = small_config(dir + "/out");
    j["priors"] = "nowhere/priors.json";
    try {
        config_from_json(j, dir, "c.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(dir + "/nowhere/priors.json"), std::string::npos) << e.what();
    }
}

TEST(Config, RejectsBadFields) {
    const auto dir = credo::testing::scratch_dir("cfg_bad");
    auto j = small_config(dir);
    j["data"] = {{"recipe", "nope"}};
    EXPECT_THROW(config_from_json(j, dir), ConfigError);
    j = small_config(dir);
    j["training"]["batch_size"] = 0;
    EXPECT_THROW(config_from_json(j, dir), ConfigError);
    j = small_config(dir);
    j["effects"]["estimator"] = "magic";
    EXPECT_THROW(config_from_json(j, dir), ConfigError);
}

TEST(Config, RoundTripPreservesHash) {
    const auto dir = credo::testing::scratch_dir("cfg_rt");
    auto c = config_from_json(small_config(dir + "/out"), dir);
    auto d = config_from_json(config_to_json(c), "/");
    EXPECT_EQ(config_hash(c), config_hash(d));
    d.training.lambda1 = 1.0;
    EXPECT_NE(config_hash(c), config_hash(d));
}

TEST(Config, MediatedKindsNeedGraph) {
    const auto dir = credo::testing::scratch_dir("cfg_graph");
    auto j = small_config(dir + "/out");
    j["priors"]["effect"] = "ATCE";
    EXPECT_THROW(prepare(config_from_json(j, dir)), ConfigError);
}

TEST(Run, ZeroLambdaArmsAreIdentical) {
    const auto dir = credo::testing::scratch_dir("run_zero");
    auto report = run(config_from_json(small_config(dir, 0.0), dir));
    EXPECT_EQ(report.metrics["erm"].dump(), report.metrics["credo"].dump());
    EXPECT_TRUE(report.manifest["init_match"].get<bool>());
}

TEST(Run, WritesArtifactsAndReproducesFromManifest) {
    const auto dir = credo::testing::scratch_dir("run_manifest");
    auto config = config_from_json(small_config(dir + "/first"), dir);
    auto report = run(config);
    for (auto f : {"metrics.json", "manifest.json", "timings.json", "curves/x.gt.csv", "curves/x.erm.csv",
                   "curves/x.credo.csv", "plots/x.svg", "models/erm.json"}) {
        EXPECT_TRUE(fs::exists(dir + "/first/" + f)) << f;
    }
    const auto metrics = nlohmann::json::parse(slurp(dir + "/first/metrics.json"));
    EXPECT_TRUE(metrics["erm"].contains("loss"));
    EXPECT_TRUE(metrics["conformity"]["x"].contains("rmse"));
    EXPECT_TRUE(metrics["conformity"]["x"].contains("frechet"));
    EXPECT_TRUE(metrics["conformity"]["x"].contains("pearson"));

    auto again = load_config(dir + "/first/manifest.json");
    again.output_dir = dir + "/second";
    run(again);
    EXPECT_EQ(slurp(dir + "/first/metrics.json"), slurp(dir + "/second/metrics.json"));
}

TEST(Sweep, SinglePointAndZeroLambda) {
    const auto dir = credo::testing::scratch_dir("sweep");
    auto config = config_from_json(small_config(dir + "/s"), dir);
    auto rows = sweep(config, {0.0, 10.0});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_TRUE(rows[0].ok);
    EXPECT_EQ(rows[0].metrics["erm"].dump(), rows[0].metrics["credo"].dump());
    EXPECT_TRUE(fs::exists(dir + "/s/sweep.csv"));

    config.output_dir = dir + "/single";
    config.training.lambda1 = 10.0;
    auto single = sweep(config, {10.0});
    auto direct = run(config);
    EXPECT_EQ(rounded(single[0].metrics["credo"]).dump(), rounded(direct.metrics["credo"]).dump());
    EXPECT_THROW(sweep(config, {}), ConfigError);
}

TEST(Sweep, FailedPointIsRecorded) {
    const auto dir = credo::testing::scratch_dir("sweep_fail");
    auto config = config_from_json(small_config(dir), dir);
    auto rows = sweep(config, {std::numeric_limits<double>::infinity(), 1.0});
    EXPECT_FALSE(rows[0].ok);
    EXPECT_FALSE(rows[0].error.empty());
    EXPECT_TRUE(rows[1].ok);
}

TEST(Plot, StructureAndDeterminism) {
    EffectCurve a{{0.0, 1.0}, {0.0, 1.0}};
    EffectCurve b{{0.0, 1.0}, {0.0, 0.5}};
    EffectCurve c{{0.0, 1.0}, {0.0, 0.9}};
    std::vector<std::pair<std::string, EffectCurve>> s = {{"GT", a}, {"ERM", b}, {"CREDO", c}};
    const auto svg = render_svg(s, "x");
    EXPECT_EQ(count(svg, "<polyline"), 3u);
    EXPECT_NE(svg.find(">GT<"), std::string::npos);
    EXPECT_NE(svg.find(">ERM<"), std::string::npos);
    EXPECT_NE(svg.find(">CREDO<"), std::string::npos);
    EXPECT_EQ(svg, render_svg(s, "x"));
    EXPECT_THROW(render_svg({}, "x"), std::invalid_argument);
}

TEST(Plot, RunDirectory) {
    const auto dir = credo::testing::scratch_dir("plot_dir");
    write_curve_csv({{0.0, 1.0}, {0.0, 1.0}}, dir + "/curves/f.gt.csv");
    write_curve_csv({{0.0, 1.0}, {0.0, 0.7}}, dir + "/curves/f.erm.csv");
    auto out = plot_run(dir);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(count(slurp(out[0]), "<polyline"), 2u);
    EXPECT_THROW(plot_run(dir + "/missing"), std::runtime_error);
}

TEST(Gradients, MeanAbsGradientOfLinearModel) {
    FunctionModel m(2, 1, [](Tape&, std::span<const Var> x) { return std::vector<Var>{x[0] * -3.0 + x[1]}; });
    Matrix x(5, 2, 0.3);
    EXPECT_DOUBLE_EQ(mean_abs_gradient(m, x, 0, 0), 3.0);
}
