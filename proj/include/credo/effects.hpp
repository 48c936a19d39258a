#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "credo/network.hpp"
#include "credo/priors.hpp"
#include "credo/scm.hpp"

namespace credo {

struct EffectQuery {
    EffectKind kind = EffectKind::acde;
    std::size_t treatment = 0;
    double low = 0.0;
    double high = 1.0;
    std::size_t points = 50;
    double baseline = 0.0;
    std::size_t class_index = 0;

    void validate() const;
};

// `points` evenly spaced values over [low, high]; the baseline is inserted
// when it lies strictly inside and is not already a grid value.
std::vector<double> effect_grid(const EffectQuery& query);
// Index of the grid value nearest to the baseline (first on ties).
std::size_t baseline_index(const std::vector<double>& grid, double baseline);

struct EffectCurve {
    std::vector<double> t;
    std::vector<double> effect;

    std::size_t size() const { return t.size(); }
};

// Optional causal context for ANDE/ATCE estimators.
struct MediatorContext {
    const RoleAssignment* roles = nullptr;
    const MediatorModel* mediators = nullptr;
};

// E[Y_hat | do(T = t)] over the rows of `data` for output query.class_index:
// ACDE clamps only the treatment, ANDE also sets mediators to Z_{t*}, ATCE
// recomputes mediators at Z_t.
double mc_interventional_expectation(const Model& model, const Matrix& data, const EffectQuery& query, double t,
                                     const MediatorContext& context = {});

// Interventional expectations over the query grid, differenced at the grid
// point nearest the baseline.
EffectCurve mc_effect_curve(const Model& model, const Matrix& data, const EffectQuery& query,
                            const MediatorContext& context = {});

struct DataMoments {
    std::vector<double> mean;
    Eigen::MatrixXd covariance;  // population (1/n) covariance
};

DataMoments data_moments(const Matrix& data);

// Second-order Taylor ACE: f(mu_t) + 1/2 tr(H f(mu_t) cov) with the treatment
// row and column of cov zeroed and mu_t = mu with the treatment set to t.
// ACDE queries only.
EffectCurve taylor_ace_curve(const Model& model, const EffectQuery& query, const std::vector<double>& mean,
                             const Eigen::MatrixXd& covariance);

// Prior values on the curve's grid, anchored to zero at the baseline point.
EffectCurve prior_curve(const std::vector<double>& grid, const PriorFunction& prior, std::size_t anchor);

struct ConformityReport {
    double rmse = 0.0;
    double frechet = 0.0;
    std::optional<double> pearson;  // empty when either curve has zero variance
};

ConformityReport conformity(const EffectCurve& curve, const PriorFunction& prior, double baseline);
ConformityReport compare_curves(const EffectCurve& curve, const EffectCurve& reference);

// Pearson correlation; empty when either series has zero variance.
std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

using Point2 = std::array<double, 2>;
// Discrete Frechet distance between two polylines.
double frechet_distance(const std::vector<Point2>& a, const std::vector<Point2>& b);
std::vector<Point2> polyline(const EffectCurve& curve);

// CSV with header `t,effect`, 12 significant digits.
std::string curve_to_csv(const EffectCurve& curve);
void write_curve_csv(const EffectCurve& curve, const std::string& path);
EffectCurve read_curve_csv(const std::string& path);

}  // namespace credo
