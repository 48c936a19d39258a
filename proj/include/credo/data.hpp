#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "credo/matrix.hpp"
#include "credo/network.hpp"
#include "credo/scm.hpp"

namespace credo {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class NormalizationMethod { none, minmax, zscore };

std::string to_string(NormalizationMethod m);
NormalizationMethod normalization_from_string(const std::string& s);

// Per-feature affine map: normalized = (raw - shift) / scale.
struct Normalization {
    NormalizationMethod method = NormalizationMethod::none;
    std::vector<double> shift;
    std::vector<double> scale;

    bool identity() const { return shift.empty(); }
    void apply(Matrix& x) const;
    void invert(Matrix& x) const;
    double apply(std::size_t feature, double raw) const;
    double invert(std::size_t feature, double normalized) const;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;

    bool empty() const { return train.empty() && validation.empty() && test.empty(); }
};

struct Dataset {
    Matrix features;
    std::vector<double> targets;
    std::vector<std::string> feature_names;
    std::string target_name = "y";
    Task task = Task::regression;
    Normalization normalization;
    SplitIndices splits;
    // Declared support of each raw feature, when known (bounded generators).
    std::vector<std::pair<double, double>> bounds;

    std::size_t size() const { return features.rows(); }
    std::size_t feature_index(const std::string& name) const;
    Matrix rows(const std::vector<std::size_t>& idx) const { return features.select_rows(idx); }
    std::vector<double> targets_at(const std::vector<std::size_t>& idx) const;
    std::size_t class_count() const;
};

struct SyntheticRecipe {
    std::string id = "tabular1";  // tabular1 | tabular2 | tabular3 | tabular4
    std::size_t n = 1000;
    std::uint64_t seed = 0;
};

// Raw, unnormalized synthetic data. tabular1: z = log(1 + 2x), x ~ U[0,1].
// tabular2: z = sin x + e^y, x, y ~ U[0,1]. tabular3: same with x, y ~ U[-2,-1].
// tabular4: features [X, Z, W] from the linear SCM, label 1[Y > mean Y].
Dataset generate(const SyntheticRecipe& recipe);

// Features taken from every graph node except `target`, in graph order.
// With binarize, the label is 1[target > mean over all rows].
Dataset dataset_from_graph(const CausalGraph& graph, const std::string& target, std::size_t n,
                           std::uint64_t seed, bool binarize);

struct CsvSchema {
    std::string target;
    std::vector<std::string> features;  // empty: every other column
    std::vector<std::string> one_hot;   // categorical columns expanded to name=value indicators
    Task task = Task::regression;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);
std::string dataset_to_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::string& path);

// Label 1 iff target > mean of the training split (all rows when unsplit).
Dataset binarize_output(Dataset data);

// Shuffled split by fractions (train, test) or (train, validation, test).
// Counts are rounded; the last part takes the remainder.
Dataset split(Dataset data, const std::vector<double>& fractions, std::uint64_t seed);
// Moves `fraction` of the training rows into the validation split.
Dataset carve_validation(Dataset data, double fraction, std::uint64_t seed);

// Fitted on the training split. Min-max uses declared bounds when present.
Normalization fit_normalization(const Dataset& data, NormalizationMethod method);
Dataset normalize(Dataset data, NormalizationMethod method);
Matrix denormalize(const Matrix& x, const Normalization& norm);

nlohmann::json normalization_to_json(const Normalization& norm);
nlohmann::json dataset_manifest(const Dataset& data);
// FNV-1a over the bit patterns of features and targets.
std::uint64_t dataset_hash(const Dataset& data);

}  // namespace credo
