#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "credo/matrix.hpp"

namespace credo {

struct JsonDocument;

enum class EffectKind { acde, ande, atce };

std::string to_string(EffectKind kind);
EffectKind effect_kind_from_string(const std::string& s);

enum class PriorFamily {
    zero,               // g = 0
    linear,             // g = alpha x
    quadratic,          // g = a x^2                 (U-shape)
    exponential_j,      // g = a exp(b x^2)          (J-shape)
    cubic_diminishing,  // g = -a x^3 + b x^2        (diminishing returns)
    logarithmic,        // g = a log(1 + b x)
    exponential,        // g = a exp(b x)
    sinusoidal,         // g = a sin(b x + c)
    tabulated,          // piecewise-linear through knots
};

std::string to_string(PriorFamily family);
PriorFamily prior_family_from_string(const std::string& s);

class PriorDomainError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

// Shape g of the desired causal effect of one feature on one output.
class PriorFunction {
public:
    static PriorFunction zero();
    static PriorFunction linear(double alpha);
    static PriorFunction quadratic(double a);
    static PriorFunction exponential_j(double a, double b);
    static PriorFunction cubic_diminishing(double a, double b);
    static PriorFunction logarithmic(double a, double b);
    static PriorFunction exponential(double a, double b);
    static PriorFunction sinusoidal(double a, double b, double c);
    static PriorFunction tabulated(std::vector<std::pair<double, double>> points);
    // Family from a name and its named parameters (as in prior files).
    static PriorFunction make(PriorFamily family, const std::map<std::string, double>& params,
                              std::vector<std::pair<double, double>> points = {});

    PriorFamily family() const { return family_; }
    double value(double x) const;
    double derivative(double x) const;

    const std::optional<std::pair<double, double>>& active_range() const { return range_; }
    PriorFunction with_range(double low, double high) const;
    bool active_at(double x) const;

    // -g, used for the complementary logit of a binary classifier.
    PriorFunction negated() const;
    // Copy with one named shape parameter replaced ("alpha", "a", "b", "c").
    PriorFunction with_parameter(const std::string& name, double value) const;
    std::map<std::string, double> parameters() const;
    const std::vector<std::pair<double, double>>& points() const { return points_; }

private:
    PriorFunction(PriorFamily family, double a, double b, double c);
    double base_value(double x) const;
    double base_derivative(double x) const;
    std::size_t segment(double x) const;

    PriorFamily family_;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
    double sign_ = 1.0;
    std::vector<std::pair<double, double>> points_;
    std::optional<std::pair<double, double>> range_;
};

struct PriorEntry {
    std::size_t class_index = 0;
    std::size_t feature = 0;
    PriorFunction function = PriorFunction::zero();
};

struct PriorSpec {
    std::size_t classes = 1;
    std::size_t features = 1;
    EffectKind kind = EffectKind::acde;
    double epsilon = 0.0;
    std::vector<PriorEntry> entries;

    void validate() const;
    // C x d indicator of declared (class, feature) pairs.
    Matrix mask() const;
    const PriorEntry* find(std::size_t class_index, std::size_t feature) const;
    // Features carrying at least one prior, ascending.
    std::vector<std::size_t> prior_features() const;
};

// C x d matrix of prior derivatives at row x. Entries outside a prior's active
// range are zero and treated as masked off for that row.
Matrix prior_derivative_matrix(const PriorSpec& spec, std::span<const double> x);
// Per-row mask: declared and inside the active range.
Matrix active_mask(const PriorSpec& spec, std::span<const double> x);

// For two-logit classifiers: a prior declared on one class implies the
// negated prior on the other.
PriorSpec signed_class_expansion(const PriorSpec& spec, std::size_t classes = 2);

PriorSpec prior_spec_from_json(const JsonDocument& doc, const std::vector<std::string>& feature_names,
                               std::size_t classes);
PriorSpec load_prior_spec(const std::string& path, const std::vector<std::string>& feature_names,
                          std::size_t classes);
nlohmann::json prior_spec_to_json(const PriorSpec& spec, const std::vector<std::string>& feature_names);

struct SlopeSearchSpace {
    std::vector<double> grid;

    // low, low + step, ..., high (inclusive up to rounding).
    static SlopeSearchSpace range(double low, double high, double step);
};

struct SlopeSearchRow {
    double parameter = 0.0;
    bool ok = false;
    double accuracy = 0.0;
    std::string error;
};

struct SlopeSearchResult {
    double best_parameter = 0.0;
    double best_accuracy = 0.0;
    std::vector<SlopeSearchRow> table;  // grid order
};

// Trains one model per grid value via `train_fn` (returns validation
// accuracy) and keeps the best; ties go to the smallest parameter. Failed grid
// points are recorded and skipped. `jobs` > 1 evaluates points concurrently.
SlopeSearchResult slope_search(const SlopeSearchSpace& space,
                               const std::function<double(double)>& train_fn, unsigned jobs = 1);

}  // namespace credo
