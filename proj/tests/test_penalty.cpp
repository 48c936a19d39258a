#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "credo/penalty.hpp"
#include "test_util.hpp"

using namespace credo;
using credo::testing::central_difference;
using credo::testing::rel_err;
using credo::testing::small_architecture;

namespace {

// y = sum_k w_k x_k, one output.
FunctionModel linear_model(std::vector<double> w) {
    const std::size_t d = w.size();
    return FunctionModel(d, 1, [w](Tape& t, std::span<const Var> x) {
        Var y = t.constant(0.0);
        for (std::size_t k = 0; k < w.size(); ++k) y = y + x[k] * w[k];
        return std::vector<Var>{y};
    });
}

Batch batch_of(const Matrix& x) {
    std::vector<std::size_t> rows(x.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
    static std::vector<double> zeros;
    zeros.assign(x.rows(), 0.0);
    return Batch::from_rows(x, zeros, rows);
}

PriorSpec one_prior(std::size_t d, std::size_t feature, PriorFunction f, EffectKind kind, std::size_t classes = 1,
                    std::size_t cls = 0) {
    PriorSpec s;
    s.classes = classes;
    s.features = d;
    s.kind = kind;
    s.entries = {{cls, feature, std::move(f)}};
    return s;
}

// Chain T -> Z1 -> Z2 over features [T, Z1, Z2] with Z1 = a T, Z2 = b Z1.
TreatmentContext chain_context(double a, double b, double baseline = 0.0) {
    RoleAssignment roles;
    roles.treatment = 0;
    roles.mediators = {1, 2};
    roles.baseline = baseline;
    MediatorModel m;
    m.regressors = {{1, {0}, {a}, 0.0, 0.0}, {2, {1}, {b}, 0.0, 0.0}};
    return TreatmentContext::make(roles, m);
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace

TEST(Acde, LinearModelResidualIsSlopeGap) {
    auto model = linear_model({3.0, -1.0});
    Matrix x(4, 2, 0.5);
    Tape t;
    auto spec = one_prior(2, 0, PriorFunction::linear(2.0), EffectKind::acde);
    auto v = acde_penalty(model, t, {}, batch_of(x), spec);
    EXPECT_DOUBLE_EQ(v.root.value(), 1.0);
    EXPECT_DOUBLE_EQ(v.derivatives(0, 0), 3.0);
    EXPECT_DOUBLE_EQ(v.residuals(2, 0), 1.0);
    EXPECT_DOUBLE_EQ(v.derivatives(0, 1), 0.0);  // undeclared slot
}

TEST(Acde, EpsilonHinge) {
    auto model = linear_model({3.0});
    Matrix x(2, 1, 0.0);
    auto spec = one_prior(1, 0, PriorFunction::linear(2.0), EffectKind::acde);
    spec.epsilon = 0.4;
    Tape t;
    EXPECT_NEAR(acde_penalty(model, t, {}, batch_of(x), spec).root.value(), 0.6, 1e-15);
    spec.epsilon = 1.5;
    EXPECT_DOUBLE_EQ(acde_penalty(model, t, {}, batch_of(x), spec).root.value(), 0.0);
}

TEST(Acde, InactiveRowsContributeZeroButCountInMean) {
    auto model = linear_model({3.0});
    Matrix x(2, 1);
    x(0, 0) = 0.5;
    x(1, 0) = 5.0;
    auto spec = one_prior(1, 0, PriorFunction::linear(2.0).with_range(0.0, 1.0), EffectKind::acde);
    Tape t;
    auto v = acde_penalty(model, t, {}, batch_of(x), spec);
    EXPECT_DOUBLE_EQ(v.root.value(), 0.5);
    EXPECT_DOUBLE_EQ(v.residuals(1, 0), 0.0);
}

TEST(Acde, NothingActiveGivesZero) {
    auto model = linear_model({3.0});
    Matrix x(1, 1, 5.0);
    auto spec = one_prior(1, 0, PriorFunction::linear(2.0).with_range(0.0, 1.0), EffectKind::acde);
    Tape t;
    EXPECT_DOUBLE_EQ(acde_penalty(model, t, {}, batch_of(x), spec).root.value(), 0.0);
}

TEST(Acde, ShapeMismatchRejected) {
    auto model = linear_model({3.0, 1.0});
    Matrix x(1, 2, 0.0);
    auto spec = one_prior(1, 0, PriorFunction::zero(), EffectKind::acde);
    Tape t;
    EXPECT_THROW(acde_penalty(model, t, {}, batch_of(x), spec), DimensionError);
}

TEST(Atce, TwoMediatorChainTotalDerivative) {
    // y = t + z2 with z1 = a t, z2 = b z1: total derivative 1 + ab.
    const double a = 0.7, b = -1.9;
    auto model = linear_model({1.0, 0.0, 1.0});
    std::map<std::size_t, TreatmentContext> ctx{{0, chain_context(a, b)}};
    auto spec = one_prior(3, 0, PriorFunction::zero(), EffectKind::atce);
    Matrix x(3, 3, 0.2);
    Tape t;
    auto v = atce_penalty(model, t, {}, batch_of(x), spec, ctx);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_NEAR(v.derivatives(r, 0), 1.0 + a * b, 1e-10);
}

TEST(Atce, GeneralLinearNetworkMatchesChainRule) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double ct = u(rng), c1 = u(rng), c2 = u(rng), a = u(rng), b = u(rng);
        auto model = linear_model({ct, c1, c2});
        std::map<std::size_t, TreatmentContext> ctx{{0, chain_context(a, b)}};
        auto spec = one_prior(3, 0, PriorFunction::zero(), EffectKind::atce);
        Matrix x = credo::testing::random_matrix(2, 3, rng);
        Tape t;
        auto v = atce_penalty(model, t, {}, batch_of(x), spec, ctx);
        EXPECT_NEAR(v.derivatives(0, 0), ct + c1 * a + c2 * a * b, 1e-10);
    }
}

TEST(Ande, PartialAtCounterfactualMediators) {
    // y = t * z1: dy/dt at (t, Z1(t*)) = a * t*.
    const double a = 1.5, baseline = 0.4;
    FunctionModel model(3, 1, [](Tape&, std::span<const Var> x) { return std::vector<Var>{x[0] * x[1]}; });
    std::map<std::size_t, TreatmentContext> ctx{{0, chain_context(a, 1.0, baseline)}};
    auto spec = one_prior(3, 0, PriorFunction::zero(), EffectKind::ande);
    Matrix x(2, 3, 0.9);
    Tape t;
    auto v = ande_penalty(model, t, {}, batch_of(x), spec, ctx);
    EXPECT_NEAR(v.derivatives(0, 0), a * baseline, 1e-14);
}

TEST(Reductions, NoMediatorsBitIdenticalToAcde) {
    std::mt19937_64 rng(12);
    auto arch = small_architecture(3, 2, {6, 5}, Activation::tanh, Task::classification);
    Perceptron p(arch, 77);
    Matrix x = credo::testing::random_matrix(8, 3, rng);
    const Batch batch = batch_of(x);

    RoleAssignment roles;
    roles.treatment = 1;
    roles.covariates = {0, 2};
    std::map<std::size_t, TreatmentContext> ctx{{1, TreatmentContext::make(roles, MediatorModel{})}};

    auto run = [&](EffectKind kind, std::vector<double>& grad) {
        auto spec = one_prior(3, 1, PriorFunction::sinusoidal(1.0, 2.0, 0.1), kind, 2, 1);
        Tape t;
        auto params = p.parameter_leaves(t);
        PenaltyValue v = kind == EffectKind::acde ? acde_penalty(p, t, params, batch, spec)
                         : kind == EffectKind::ande ? ande_penalty(p, t, params, batch, spec, ctx)
                                                    : atce_penalty(p, t, params, batch, spec, ctx);
        const auto adj = t.adjoints(v.root);
        grad.clear();
        for (auto q : params) grad.push_back(adj[q.id()]);
        return v.root.value();
    };
    std::vector<double> g0, g1, g2;
    const double v0 = run(EffectKind::acde, g0);
    const double v1 = run(EffectKind::ande, g1);
    const double v2 = run(EffectKind::atce, g2);
    EXPECT_TRUE(same_bits(v0, v1));
    EXPECT_TRUE(same_bits(v0, v2));
    for (std::size_t k = 0; k < g0.size(); ++k) {
        EXPECT_TRUE(same_bits(g0[k], g1[k]));
        EXPECT_TRUE(same_bits(g0[k], g2[k]));
    }
}

// Parameter gradient of the scalar penalty against central differences.
TEST(SecondOrder, PenaltyParameterGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(31);
    for (auto kind : {EffectKind::acde, EffectKind::ande, EffectKind::atce}) {
        auto arch = small_architecture(3, 2, {5, 4}, Activation::tanh, Task::classification);
        Perceptron p(arch, 5 + static_cast<int>(kind));
        Matrix x = credo::testing::random_matrix(4, 3, rng);
        const Batch batch = batch_of(x);
        std::map<std::size_t, TreatmentContext> ctx{{0, chain_context(0.8, -0.5, 0.1)}};
        auto spec = one_prior(3, 0, PriorFunction::exponential(1.0, 1.0), kind, 2, 1);
        auto eval = [&](const Perceptron& m, std::vector<double>* grad) {
            Tape t;
            auto params = m.parameter_leaves(t);
            PenaltyValue v = kind == EffectKind::acde ? acde_penalty(m, t, params, batch, spec)
                             : kind == EffectKind::ande ? ande_penalty(m, t, params, batch, spec, ctx)
                                                        : atce_penalty(m, t, params, batch, spec, ctx);
            if (grad) {
                auto adj = t.adjoints(v.root);
                for (auto q : params) grad->push_back(adj[q.id()]);
            }
            return v.root.value();
        };
        std::vector<double> grad;
        eval(p, &grad);
        std::vector<double> theta(p.parameters().begin(), p.parameters().end());
        auto f = [&](const std::vector<double>& th) { return eval(Perceptron(arch, th, 0), nullptr); };
        for (std::size_t k = 0; k < theta.size(); ++k) {
            EXPECT_LT(rel_err(grad[k], central_difference(f, theta, k, 1e-5)), 1e-4) << to_string(kind) << " " << k;
        }
    }
}

TEST(CredoPenalty, RequiresContextsForMediatedKinds) {
    auto spec = one_prior(3, 0, PriorFunction::zero(), EffectKind::atce);
    EXPECT_THROW(CredoPenalty{spec}, std::invalid_argument);
    EXPECT_THROW(CredoPenalty(spec, {}), std::invalid_argument);
    EXPECT_NO_THROW(CredoPenalty(spec, {{0, chain_context(1, 1)}}));
}

TEST(CombinedObjective, ZeroLambdaIsErm) {
    std::mt19937_64 rng(2);
    auto arch = small_architecture(2, 1, {4}, Activation::tanh);
    Perceptron p(arch, 3);
    Matrix x = credo::testing::random_matrix(5, 2, rng);
    const Batch batch = batch_of(x);
    CredoPenalty pen(one_prior(2, 0, PriorFunction::linear(1.0), EffectKind::acde));
    TrainingConfig c;
    c.lambda1 = 0.0;
    Tape t1, t2;
    auto p1 = p.parameter_leaves(t1);
    auto p2 = p.parameter_leaves(t2);
    const double a = combined_objective(p, t1, p1, batch, c, &pen).value();
    const double b = erm_loss(p, t2, p2, batch, false).value();
    EXPECT_TRUE(same_bits(a, b));
    EXPECT_EQ(t1.size(), t2.size());
}

TEST(Training, PenaltyPullsSlopeTowardPrior) {
    std::mt19937_64 rng(6);
    Matrix x = credo::testing::random_matrix(256, 1, rng, 0.0, 1.0);
    std::vector<double> y(256);
    for (std::size_t r = 0; r < 256; ++r) y[r] = 0.5 * x(r, 0);
    auto arch = small_architecture(1, 1, {8}, Activation::tanh);
    TrainingConfig c;
    c.learning_rate = 1e-2;
    c.epochs = 60;
    c.lambda1 = 5.0;
    CredoPenalty pen(one_prior(1, 0, PriorFunction::linear(2.0), EffectKind::acde));
    Perceptron erm(arch, 1), credo(arch, 1);
    train(erm, x, y, TrainingConfig{c.learning_rate, 64, 60, 0.0, 0.0});
    train(credo, x, y, c, &pen);
    auto slope = [&](const Perceptron& m) {
        const double a[] = {0.2}, b[] = {0.8};
        return (m.predict(b)[0] - m.predict(a)[0]) / 0.6;
    };
    EXPECT_NEAR(slope(erm), 0.5, 0.1);
    EXPECT_GT(slope(credo), 1.5);
}
