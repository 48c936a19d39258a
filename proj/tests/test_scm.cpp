#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "credo/json_file.hpp"
#include "credo/scm.hpp"

using namespace credo;

namespace {

CausalGraph chain(double a, double b) {
    // T -> Z1 -> Z2, T -> Z2
    CausalGraph g;
    g.add_node("T", NoiseSpec::gaussian(0.0, 1.0));
    g.add_node("Z1", NoiseSpec::gaussian(0.0, 0.1));
    g.add_node("Z2", NoiseSpec::gaussian(0.0, 0.1));
    g.add_edge("T", "Z1");
    g.add_edge("Z1", "Z2");
    g.add_edge("T", "Z2");
    g.set_equation("Z1", StructuralEquation::linear({"T"}, {a}));
    g.set_equation("Z2", StructuralEquation::linear({"Z1", "T"}, {b, 0.5}));
    g.finalize();
    return g;
}

double column_mean(const Matrix& m, std::size_t c) {
    const auto col = m.column(c);
    return std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
}

double column_var(const Matrix& m, std::size_t c) {
    const double mu = column_mean(m, c);
    double s = 0.0;
    for (double v : m.column(c)) s += (v - mu) * (v - mu);
    return s / static_cast<double>(m.rows());
}

}  // namespace

TEST(Graph, TopologicalOrderPutsParentsFirst) {
    auto g = synthetic_tabular4_graph();
    const auto& order = g.topological_order();
    std::vector<std::size_t> pos(g.size());
    for (std::size_t k = 0; k < order.size(); ++k) pos[order[k]] = k;
    for (std::size_t v = 0; v < g.size(); ++v) {
        for (auto p : g.parents(v)) EXPECT_LT(pos[p], pos[v]);
    }
}

TEST(Graph, CycleIsRejected) {
    CausalGraph g;
    g.add_node("A", NoiseSpec::gaussian(0, 1));
    g.add_node("B", NoiseSpec::gaussian(0, 1));
    g.add_edge("A", "B");
    g.add_edge("B", "A");
    EXPECT_THROW(g.finalize(), GraphError);
}

TEST(Graph, EquationParentsMustMatchEdges) {
    CausalGraph g;
    g.add_node("A", NoiseSpec::gaussian(0, 1));
    g.add_node("B", NoiseSpec::gaussian(0, 1));
    g.add_edge("A", "B");
    EXPECT_THROW(
        {
            g.set_equation("B", StructuralEquation::linear({}, {}));
            g.finalize();
        },
        GraphError);
}

TEST(Graph, DuplicatesRejected) {
    CausalGraph g;
    g.add_node("A", NoiseSpec::none());
    EXPECT_THROW(g.add_node("A", NoiseSpec::none()), GraphError);
    g.add_node("B", NoiseSpec::none());
    g.add_edge("A", "B");
    EXPECT_THROW(g.add_edge("A", "B"), GraphError);
}

TEST(Graph, HasPath) {
    auto g = synthetic_tabular4_graph();
    EXPECT_TRUE(g.has_path(g.index_of("W"), g.index_of("X")));
    EXPECT_FALSE(g.has_path(g.index_of("X"), g.index_of("W")));
}

TEST(Sampling, SameSeedSameDraws) {
    auto g = synthetic_tabular4_graph();
    EXPECT_EQ(sample(g, 50, 3), sample(g, 50, 3));
    EXPECT_NE(sample(g, 50, 3), sample(g, 50, 4));
}

TEST(Sampling, MomentsOfLinearScm) {
    auto g = synthetic_tabular4_graph();
    auto x = sample(g, 200000, 11);
    const auto W = g.index_of("W"), Z = g.index_of("Z"), X = g.index_of("X"), Y = g.index_of("Y");
    // E[Z] = 4, E[X] = 0.5*4 + 2 = 4, E[Y] = 2*4 + 4 + 0 = 12.
    EXPECT_NEAR(column_mean(x, W), 0.0, 0.01);
    EXPECT_NEAR(column_mean(x, Z), 4.0, 0.02);
    EXPECT_NEAR(column_mean(x, X), 4.0, 0.02);
    EXPECT_NEAR(column_mean(x, Y), 12.0, 0.05);
    // Var Z = 4 + 1, Var X = 0.25 * 5 + 1.
    EXPECT_NEAR(column_var(x, Z), 5.0, 0.06);
    EXPECT_NEAR(column_var(x, X), 2.25, 0.03);
}

// Two-sample Kolmogorov-Smirnov statistic between the interventional sample
// and an independent simulation of the mutilated model.
TEST(Intervention, MatchesMutilatedSimulation) {
    auto g = synthetic_tabular4_graph();
    const std::size_t n = 20000;
    auto a = intervene_sample(g, {{"Z", 1.0}}, n, 5);
    const auto Z = g.index_of("Z"), X = g.index_of("X"), Y = g.index_of("Y");
    for (std::size_t r = 0; r < n; ++r) EXPECT_EQ(a(r, Z), 1.0);

    std::mt19937_64 rng(99);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> ys(n), xs(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double w = n01(rng);
        const double x = 0.5 * 1.0 + 2.0 + n01(rng);
        xs[r] = x;
        ys[r] = 2 * x + 1.0 + w + 0.1 * n01(rng);
    }
    auto ks = [](std::vector<double> p, std::vector<double> q) {
        std::sort(p.begin(), p.end());
        std::sort(q.begin(), q.end());
        std::size_t i = 0, j = 0;
        double d = 0.0;
        while (i < p.size() && j < q.size()) {
            if (p[i] <= q[j]) ++i; else ++j;
            d = std::max(d, std::abs(double(i) / p.size() - double(j) / q.size()));
        }
        return d;
    };
    // 1.63 * sqrt(2/n) is the 1% critical value.
    const double crit = 1.63 * std::sqrt(2.0 / n);
    EXPECT_LT(ks(a.column(Y), ys), crit);
    EXPECT_LT(ks(a.column(X), xs), crit);
}

TEST(Intervention, DoesNotModifyOriginal) {
    auto g = synthetic_tabular4_graph();
    auto h = g.intervened({{"X", 3.0}});
    EXPECT_EQ(g.parents(g.index_of("X")).size(), 1u);
    EXPECT_TRUE(h.parents(h.index_of("X")).empty());
    EXPECT_THROW(g.intervened({{"Q", 1.0}}), GraphError);
}

TEST(Roles, DerivedFromGraph) {
    auto g = synthetic_tabular4_graph();
    const std::vector<std::string> names = {"X", "Z", "W"};
    auto r = derive_roles(g, names, "W", 0.0, std::string("Y"));
    EXPECT_EQ(r.treatment, 2u);
    EXPECT_EQ(r.mediators, (std::vector<std::size_t>{1, 0}));  // Z before X
    EXPECT_TRUE(r.covariates.empty());
    auto rx = derive_roles(g, names, "X", 0.0, std::string("Y"));
    EXPECT_TRUE(rx.mediators.empty());
    EXPECT_EQ(rx.covariates.size(), 2u);
}

TEST(Roles, DeclaredMediatorMustBeDownstream) {
    auto g = synthetic_tabular4_graph();
    const std::vector<std::string> names = {"X", "Z", "W"};
    EXPECT_THROW(make_roles(g, names, "X", {"Z"}, 0.0), GraphError);
    EXPECT_NO_THROW(make_roles(g, names, "W", {"Z"}, 0.0, std::string("Y")));
}

TEST(Roles, ValidateCatchesOverlap) {
    RoleAssignment r;
    r.treatment = 0;
    r.mediators = {0};
    EXPECT_THROW(r.validate(1), GraphError);
    r.mediators = {};
    EXPECT_THROW(r.validate(2), GraphError);
}

// Normal equations solved by Gaussian elimination, independent of the QR path.
TEST(Mediators, LeastSquaresMatchesNormalEquations) {
    auto g = chain(1.7, -0.6);
    auto x = sample(g, 3000, 2);
    const std::vector<std::string> names = g.names();
    auto roles = derive_roles(g, names, "T", 0.0);
    auto med = fit_mediators(x, names, g, roles);
    ASSERT_EQ(med.regressors.size(), 2u);
    const auto& z2 = med.regressors[1];
    ASSERT_EQ(z2.parents.size(), 2u);

    double A[3][4] = {};
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double v[3] = {1.0, x(r, z2.parents[0]), x(r, z2.parents[1])};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) A[i][j] += v[i] * v[j];
            A[i][3] += v[i] * x(r, 2);
        }
    }
    for (int c = 0; c < 3; ++c) {
        for (int r = c + 1; r < 3; ++r) {
            const double f = A[r][c] / A[c][c];
            for (int k = c; k < 4; ++k) A[r][k] -= f * A[c][k];
        }
    }
    double beta[3];
    for (int r = 2; r >= 0; --r) {
        double s = A[r][3];
        for (int k = r + 1; k < 3; ++k) s -= A[r][k] * beta[k];
        beta[r] = s / A[r][r];
    }
    EXPECT_NEAR(z2.intercept, beta[0], 1e-9);
    EXPECT_NEAR(z2.coefficients[0], beta[1], 1e-9);
    EXPECT_NEAR(z2.coefficients[1], beta[2], 1e-9);
    // Z1 given T has sd 0.1, so the Z1 coefficient has standard error
    // 0.1 / (0.1 sqrt(3000)) ~ 0.018; allow four of them.
    EXPECT_NEAR(z2.coefficients[0], -0.6, 0.075);
    EXPECT_NEAR(z2.residual_variance, 0.01, 0.002);
}

TEST(Mediators, SensitivitiesFollowChainRule) {
    auto g = chain(1.7, -0.6);
    auto x = sample(g, 5000, 8);
    auto roles = derive_roles(g, g.names(), "T", 0.0);
    auto med = fit_mediators(x, g.names(), g, roles);
    auto d = mediator_sensitivities(med, roles);
    const double a = med.regressors[0].coefficients[0];
    const double b = med.regressors[1].coefficients[0];
    const double c = med.regressors[1].coefficients[1];
    EXPECT_DOUBLE_EQ(d[0], a);
    EXPECT_NEAR(d[1], c + b * a, 1e-12);
}

TEST(Mediators, CounterfactualRow) {
    auto g = chain(2.0, 3.0);
    MediatorModel m;
    m.regressors = {{1, {0}, {2.0}, 0.0, 0.0}, {2, {1, 0}, {3.0, 0.5}, 1.0, 0.0}};
    RoleAssignment r;
    r.treatment = 0;
    r.mediators = {1, 2};
    const double x[] = {9.0, 9.0, 9.0};
    auto row = counterfactual_row(m, r, x, 1.0, 2.0);
    // Z1(2) = 4, Z2 = 1 + 3*4 + 0.5*2 = 14, treatment set to 1.
    EXPECT_EQ(row, (std::vector<double>{1.0, 4.0, 14.0}));
}

TEST(Mediators, RankDeficientDesignNamesMediator) {
    auto g = chain(1.0, 1.0);
    Matrix x(10, 3, 1.0);
    auto roles = derive_roles(g, g.names(), "T", 0.0);
    try {
        fit_mediators(x, g.names(), g, roles);
        FAIL();
    } catch (const GraphError& e) {
        EXPECT_NE(std::string(e.what()).find("Z1"), std::string::npos);
    }
}

TEST(GraphFile, ParsesNodesEdgesEquationsRoles) {
    const std::string text = R"({
  "nodes": [
    {"name": "T", "noise": {"dist": "gaussian", "params": [0, 1]}},
    {"name": "M", "noise": {"dist": "uniform", "params": {"low": -1, "high": 1}}},
    {"name": "Y"}
  ],
  "edges": [["T", "M"], ["M", "Y"], ["T", "Y"]],
  "equations": [
    {"child": "M", "coeffs": {"T": 0.5}, "intercept": 1.0},
    {"child": "Y", "parents": ["M", "T"], "coeffs": [2.0, -1.0]}
  ],
  "roles": {"treatment": "T", "mediators": ["M"], "baseline": 0.25, "outcome": "Y"}
})";
    auto f = parse_graph_text(text, "g.json");
    EXPECT_EQ(f.graph.size(), 3u);
    EXPECT_EQ(f.treatment, std::optional<std::string>("T"));
    EXPECT_EQ(f.mediators, std::vector<std::string>{"M"});
    EXPECT_DOUBLE_EQ(f.baseline, 0.25);
    const auto& eq = f.graph.equation(f.graph.index_of("M"));
    EXPECT_DOUBLE_EQ(eq.intercept, 1.0);
    EXPECT_EQ(f.graph.noise(1).distribution, NoiseDistribution::uniform);
}

TEST(GraphFile, ErrorsCarryLineNumbers) {
    const std::string text = "{\n  \"nodes\": [{\"name\": \"A\"}],\n  \"edges\": [[\"A\", \"B\"]]\n}\n";
    try {
        parse_graph_text(text, "bad.json");
        FAIL();
    } catch (const FileFormatError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("bad.json"), std::string::npos);
    }
}

TEST(GraphFile, CycleReported) {
    const std::string text = R"({"nodes": [{"name": "A"}, {"name": "B"}], "edges": [["A", "B"], ["B", "A"]]})";
    EXPECT_THROW(parse_graph_text(text), FileFormatError);
}
