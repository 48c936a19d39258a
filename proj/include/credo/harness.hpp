#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "credo/data.hpp"
#include "credo/effects.hpp"
#include "credo/network.hpp"
#include "credo/penalty.hpp"
#include "credo/priors.hpp"

namespace credo {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataSourceConfig {
    std::string kind = "recipe";  // recipe | csv | graph
    SyntheticRecipe recipe;
    std::string path;             // csv or graph file
    CsvSchema schema;
    std::string target;           // graph sources
    std::size_t n = 1000;         // graph sources
    bool binarize = false;
};

struct EffectsConfig {
    std::string estimator = "auto";  // auto | taylor | monte_carlo
    std::size_t points = 50;
    double baseline = 0.0;
    std::optional<double> low;
    std::optional<double> high;
};

struct SlopeSearchConfig {
    std::string feature;
    std::string parameter = "alpha";
    double low = 1.0;
    double high = 3.0;
    double step = 0.2;
    double validation_fraction = 0.2;
    unsigned jobs = 1;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    DataSourceConfig data;
    std::string normalization = "auto";
    std::vector<double> split{0.8, 0.2};
    std::vector<std::size_t> hidden_sizes{8};
    Activation activation = Activation::relu;
    double dropout = 0.0;
    TrainingConfig training;
    std::string prior_path;
    nlohmann::json prior_inline;  // used when prior_path is empty
    bool signed_expansion = true;
    std::string graph_path;       // causal graph for ANDE/ATCE when the data source is not a graph
    std::optional<std::string> outcome;
    EffectsConfig effects;
    std::optional<SlopeSearchConfig> slope_search;
    std::vector<double> sweep_lambdas;
    std::string output_dir = "runs/experiment";
    bool plots = true;
};

// Reads a config file, or the config embedded in a run manifest. Relative
// paths are resolved against the file's directory.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir,
                                  const std::string& source = "<config>");
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

// Data, priors and causal context shared by every arm of an experiment.
struct Prepared {
    ExperimentConfig config;
    Dataset data;
    Matrix x_train, x_test;
    std::vector<double> y_train, y_test;
    PriorSpec spec;        // as declared
    PriorSpec train_spec;  // after signed class expansion
    std::map<std::size_t, TreatmentContext> contexts;
    Architecture architecture;
    std::uint64_t init_seed = 0;
    std::uint64_t shuffle_seed = 0;
};

Prepared prepare(const ExperimentConfig& config);

struct ArmResult {
    Perceptron model;
    TrainingTrace trace;
    double seconds = 0.0;
    std::uint64_t init_hash = 0;
};

ArmResult train_arm(const Prepared& prep, const PriorSpec& spec, double lambda1,
                    const Matrix& x_train, const std::vector<double>& y_train);

struct FeatureCurves {
    std::string key;
    EffectCurve gt;
    EffectCurve erm;
    EffectCurve credo;
    ConformityReport erm_report;
    ConformityReport credo_report;
};

struct RunReport {
    nlohmann::json metrics;
    nlohmann::json manifest;
    nlohmann::json timings;
    std::vector<FeatureCurves> curves;
};

// Effect curve of one declared prior entry for a trained model.
EffectCurve effect_curve(const Prepared& prep, const Model& model, const PriorEntry& entry);
double mean_abs_gradient(const Model& model, const Matrix& x, std::size_t class_index, std::size_t feature);
nlohmann::json conformity_to_json(const ConformityReport& r);

// Trains ERM and CREDO arms and writes metrics.json, manifest.json,
// timings.json, curves/ and plots/ under the output directory.
RunReport run(const ExperimentConfig& config);

struct SweepRow {
    double lambda1 = 0.0;
    bool ok = false;
    std::string error;
    nlohmann::json metrics;
};

std::vector<SweepRow> sweep(const ExperimentConfig& config, const std::vector<double>& lambdas);

SlopeSearchResult run_slope_search(const ExperimentConfig& config);

// Deterministic SVG with one polyline per series and a legend.
std::string render_svg(const std::vector<std::pair<std::string, EffectCurve>>& series, const std::string& title);
void write_plot(const std::vector<std::pair<std::string, EffectCurve>>& series, const std::string& title,
                const std::string& path);
// Renders plots/<key>.svg for every curve triple under run_dir/curves.
std::vector<std::string> plot_run(const std::string& run_dir);

}  // namespace credo
