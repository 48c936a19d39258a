#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "credo/matrix.hpp"

namespace credo {

class GraphError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class NoiseDistribution { none, gaussian, uniform };

// Exogenous noise term. Gaussian parameters are (mean, standard deviation),
// uniform parameters are (low, high).
struct NoiseSpec {
    NoiseDistribution distribution = NoiseDistribution::none;
    double first = 0.0;
    double second = 0.0;

    static NoiseSpec none() { return {}; }
    static NoiseSpec gaussian(double mean, double stddev) { return {NoiseDistribution::gaussian, mean, stddev}; }
    static NoiseSpec uniform(double low, double high) { return {NoiseDistribution::uniform, low, high}; }

    double draw(std::mt19937_64& rng) const;
    double mean() const;
};

NoiseDistribution noise_distribution_from_string(const std::string& s);

struct StructuralEquation {
    enum class Form { linear, builtin };
    using Closure = std::function<double(std::span<const double> parents, double noise)>;

    Form form = Form::linear;
    std::vector<std::string> parents;
    std::vector<double> coefficients;  // linear form, one per parent
    double intercept = 0.0;
    Closure closure;                   // builtin form

    static StructuralEquation linear(std::vector<std::string> parents, std::vector<double> coefficients,
                                     double intercept = 0.0);
    static StructuralEquation builtin(std::vector<std::string> parents, Closure closure);
    // Value of the child given its parents (in `parents` order) and noise.
    double apply(std::span<const double> parent_values, double noise) const;
};

class CausalGraph {
public:
    std::size_t add_node(const std::string& name, NoiseSpec noise);
    void add_edge(const std::string& parent, const std::string& child);
    // Parents listed by the equation must equal the node's incoming edges.
    void set_equation(const std::string& child, StructuralEquation equation);
    // Validates acyclicity and equations and caches a topological order.
    void finalize();

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    std::size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    const NoiseSpec& noise(std::size_t node) const { return noise_.at(node); }
    const StructuralEquation& equation(std::size_t node) const { return equations_.at(node); }
    // Parent indices in equation order.
    const std::vector<std::size_t>& parents(std::size_t node) const { return parent_idx_.at(node); }
    const std::vector<std::size_t>& topological_order() const;
    bool finalized() const { return finalized_; }

    bool has_path(std::size_t from, std::size_t to) const;

    // Graph surgery for do(node = value): incoming edges removed, the node's
    // equation replaced by the constant and its noise dropped.
    CausalGraph intervened(const std::map<std::string, double>& assignments) const;

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<NoiseSpec> noise_;
    std::vector<std::vector<std::string>> edge_parents_;
    std::vector<StructuralEquation> equations_;
    std::vector<bool> has_equation_;
    std::vector<std::vector<std::size_t>> parent_idx_;
    std::vector<std::size_t> order_;
    bool finalized_ = false;
};

// n rows by ancestral sampling; columns follow graph.names().
Matrix sample(const CausalGraph& graph, std::size_t n, std::uint64_t seed);
Matrix intervene_sample(const CausalGraph& graph, const std::map<std::string, double>& assignments,
                        std::size_t n, std::uint64_t seed);

// Treatment / mediator / covariate partition over feature indices.
struct RoleAssignment {
    std::size_t treatment = 0;
    std::vector<std::size_t> mediators;  // topological order
    std::vector<std::size_t> covariates;
    double baseline = 0.0;

    void validate(std::size_t feature_count) const;
};

// Roles with mediators declared by name; each must lie on a directed path
// treatment -> mediator -> outcome (when `outcome` is given).
RoleAssignment make_roles(const CausalGraph& graph, const std::vector<std::string>& feature_names,
                          const std::string& treatment, const std::vector<std::string>& mediators,
                          double baseline, const std::optional<std::string>& outcome = std::nullopt);
// Roles with mediators read off the graph: features downstream of the
// treatment (and upstream of the outcome when given).
RoleAssignment derive_roles(const CausalGraph& graph, const std::vector<std::string>& feature_names,
                            const std::string& treatment, double baseline,
                            const std::optional<std::string>& outcome = std::nullopt);

struct MediatorRegressor {
    std::size_t mediator = 0;            // feature index
    std::vector<std::size_t> parents;    // feature indices, equation order
    std::vector<double> coefficients;
    double intercept = 0.0;
    double residual_variance = 0.0;

    double predict(std::span<const double> features) const;
};

struct MediatorModel {
    std::vector<MediatorRegressor> regressors;  // same order as roles.mediators
};

// Least-squares fit of every mediator on its graph parents.
MediatorModel fit_mediators(const Matrix& features, const std::vector<std::string>& feature_names,
                            const CausalGraph& graph, const RoleAssignment& roles);

// Counterfactual mediator values Z_t for row x: treatment clamped to t,
// covariates from x, mediators recomputed in order from their mean
// regressions.
std::vector<double> mediator_values(const MediatorModel& mediators, const RoleAssignment& roles,
                                    std::span<const double> x, double t);

// x with the treatment set to t and mediators replaced by mediator_values(t_mediators).
std::vector<double> counterfactual_row(const MediatorModel& mediators, const RoleAssignment& roles,
                                       std::span<const double> x, double t, double t_mediators);

// dZ^k/dt accumulated along the mediator chain:
// dZ^k/dt = dF^k/dt + sum_{j<k} dF^k/dZ^j * dZ^j/dt.
std::vector<double> mediator_sensitivities(const MediatorModel& mediators, const RoleAssignment& roles);

struct GraphFile {
    CausalGraph graph;
    std::optional<std::string> treatment;
    std::vector<std::string> mediators;
    double baseline = 0.0;
    std::optional<std::string> outcome;
};

GraphFile load_graph_file(const std::string& path);
GraphFile parse_graph_text(const std::string& text, const std::string& path = "<inline>");

// W := N(0,1); Z := -2W + N(4,1); X := 0.5Z + N(2,1); Y := 2X + Z + W + N(0,0.1).
CausalGraph synthetic_tabular4_graph();

}  // namespace credo
