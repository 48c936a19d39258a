#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "credo/json_file.hpp"
#include "credo/priors.hpp"
#include "test_util.hpp"

using namespace credo;
using credo::testing::central_difference;

TEST(PriorFunction, DerivativesMatchFiniteDifferences) {
    const std::vector<PriorFunction> fns = {
        PriorFunction::linear(2.0),
        PriorFunction::quadratic(1.5),
        PriorFunction::exponential_j(0.5, 0.3),
        PriorFunction::cubic_diminishing(1.0, 2.0),
        PriorFunction::logarithmic(1.0, 2.0),
        PriorFunction::exponential(1.0, 1.0),
        PriorFunction::sinusoidal(1.0, 1.0, -2.0),
        PriorFunction::linear(2.0).negated(),
    };
    for (const auto& f : fns) {
        for (double x : {-0.3, 0.1, 0.45, 0.9}) {
            auto g = [&](const std::vector<double>& v) { return f.value(v[0]); };
            EXPECT_NEAR(f.derivative(x), central_difference(g, {x}, 0), 1e-7) << to_string(f.family());
        }
    }
}

TEST(PriorFunction, ClosedForms) {
    EXPECT_DOUBLE_EQ(PriorFunction::logarithmic(1.0, 2.0).value(0.5), std::log(2.0));
    EXPECT_DOUBLE_EQ(PriorFunction::logarithmic(1.0, 2.0).derivative(0.0), 2.0);
    EXPECT_DOUBLE_EQ(PriorFunction::exponential(1.0, 1.0).derivative(0.3), std::exp(0.3));
    EXPECT_DOUBLE_EQ(PriorFunction::zero().derivative(4.0), 0.0);
    EXPECT_DOUBLE_EQ(PriorFunction::linear(2.0).negated().derivative(1.0), -2.0);
}

TEST(PriorFunction, Tabulated) {
    auto f = PriorFunction::tabulated({{0.0, 0.0}, {1.0, 2.0}, {2.0, 2.5}});
    EXPECT_DOUBLE_EQ(f.value(0.5), 1.0);
    EXPECT_DOUBLE_EQ(f.derivative(1.5), 0.5);
    EXPECT_DOUBLE_EQ(f.value(2.0), 2.5);
    EXPECT_THROW(f.value(2.5), PriorDomainError);
    EXPECT_THROW(PriorFunction::tabulated({{0.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW(PriorFunction::tabulated({{1.0, 0.0}, {0.0, 1.0}}), std::invalid_argument);
}

TEST(PriorFunction, WithParameter) {
    auto f = PriorFunction::linear(1.0).with_parameter("alpha", 2.4);
    EXPECT_DOUBLE_EQ(f.derivative(0.0), 2.4);
    EXPECT_THROW(PriorFunction::linear(1.0).with_parameter("b", 1.0), std::invalid_argument);
    auto s = PriorFunction::sinusoidal(1.0, 1.0, 0.0).with_parameter("c", 0.5);
    EXPECT_DOUBLE_EQ(s.parameters().at("c"), 0.5);
}

TEST(PriorFunction, Range) {
    auto f = PriorFunction::linear(1.0).with_range(0.0, 1.0);
    EXPECT_TRUE(f.active_at(0.5));
    EXPECT_FALSE(f.active_at(1.5));
    EXPECT_THROW(f.with_range(1.0, 1.0), std::invalid_argument);
}

TEST(PriorSpec, DerivativeMatrixAndMask) {
    PriorSpec s;
    s.classes = 2;
    s.features = 3;
    s.entries = {{1, 0, PriorFunction::linear(2.0)}, {0, 2, PriorFunction::quadratic(1.0).with_range(0.0, 1.0)}};
    const double x_in[] = {0.3, 9.0, 0.5};
    const double x_out[] = {0.3, 9.0, 2.0};
    auto dg = prior_derivative_matrix(s, x_in);
    EXPECT_DOUBLE_EQ(dg(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(dg(0, 2), 1.0);
    EXPECT_DOUBLE_EQ(dg(0, 0), 0.0);
    auto m = active_mask(s, x_out);
    EXPECT_DOUBLE_EQ(m(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(m(0, 2), 0.0);
    EXPECT_EQ(s.mask()(0, 2), 1.0);
    EXPECT_EQ(s.prior_features(), (std::vector<std::size_t>{0, 2}));
}

TEST(PriorSpec, DuplicateEntryRejected) {
    PriorSpec s;
    s.features = 1;
    s.entries = {{0, 0, PriorFunction::zero()}, {0, 0, PriorFunction::zero()}};
    EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(SignedExpansion, AddsNegatedComplement) {
    PriorSpec s;
    s.classes = 2;
    s.features = 1;
    s.entries = {{1, 0, PriorFunction::linear(2.0)}};
    auto e = signed_class_expansion(s);
    ASSERT_EQ(e.entries.size(), 2u);
    EXPECT_DOUBLE_EQ(e.find(0, 0)->function.derivative(0.0), -2.0);
    s.entries.push_back({0, 0, PriorFunction::zero()});
    EXPECT_THROW(signed_class_expansion(s), std::invalid_argument);
}

TEST(PriorFile, ParsesEntries) {
    const std::string text = R"({
  "effect": "ATCE",
  "epsilon": 0.05,
  "priors": [
    {"feature": "b", "class": 1, "family": "logarithmic", "params": {"b": 2.0}, "range": [0, 1]},
    {"feature": "a", "family": "tabulated", "params": {"points": [[0, 0], [1, 1]]}}
  ]
})";
    auto s = prior_spec_from_json(parse_json_text(text, "p.json"), {"a", "b"}, 2);
    EXPECT_EQ(s.kind, EffectKind::atce);
    EXPECT_DOUBLE_EQ(s.epsilon, 0.05);
    ASSERT_EQ(s.entries.size(), 2u);
    EXPECT_EQ(s.entries[0].feature, 1u);
    EXPECT_EQ(s.entries[0].class_index, 1u);
    EXPECT_EQ(s.entries[1].class_index, 0u);
    EXPECT_TRUE(s.entries[0].function.active_range().has_value());
}

TEST(PriorFile, UnknownFeatureReportsLine) {
    const std::string text = "{\n  \"priors\": [\n    {\"feature\": \"a\"},\n    {\"feature\": \"zz\"}\n  ]\n}\n";
    try {
        prior_spec_from_json(parse_json_text(text, "p.json"), {"a"}, 1);
        FAIL();
    } catch (const FileFormatError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
    }
}

TEST(PriorFile, MixedKindsRejected) {
    const std::string text = R"({"effect": "ACDE", "priors": [{"feature": "a", "effect": "ANDE"}]})";
    EXPECT_THROW(prior_spec_from_json(parse_json_text(text), {"a"}, 1), FileFormatError);
}

TEST(PriorFile, ClassOutOfRange) {
    const std::string text = R"({"priors": [{"feature": "a", "class": 3}]})";
    EXPECT_THROW(prior_spec_from_json(parse_json_text(text), {"a"}, 2), FileFormatError);
}

TEST(PriorFile, RoundTrip) {
    PriorSpec s;
    s.classes = 2;
    s.features = 2;
    s.kind = EffectKind::ande;
    s.epsilon = 0.1;
    s.entries = {{1, 1, PriorFunction::sinusoidal(1.0, 2.0, 0.5)}};
    const auto j = prior_spec_to_json(s, {"a", "b"});
    auto back = prior_spec_from_json(parse_json_text(j.dump(2)), {"a", "b"}, 2);
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.entries[0].function.parameters(), s.entries[0].function.parameters());
}

TEST(SlopeSearch, RangeIsInclusive) {
    auto s = SlopeSearchSpace::range(1.0, 3.0, 0.2);
    ASSERT_EQ(s.grid.size(), 11u);
    EXPECT_DOUBLE_EQ(s.grid.front(), 1.0);
    EXPECT_NEAR(s.grid.back(), 3.0, 1e-12);
}

TEST(SlopeSearch, PicksBestAndBreaksTiesLow) {
    auto s = SlopeSearchSpace::range(1.0, 3.0, 0.2);
    auto r = slope_search(s, [](double a) { return -std::abs(a - 2.0); });
    EXPECT_NEAR(r.best_parameter, 2.0, 1e-12);
    auto tie = slope_search(s, [](double) { return 0.5; });
    EXPECT_DOUBLE_EQ(tie.best_parameter, 1.0);
}

TEST(SlopeSearch, FailedPointsAreRecordedAndSkipped) {
    auto s = SlopeSearchSpace::range(1.0, 2.0, 0.5);
    auto r = slope_search(s, [](double a) {
        if (a > 1.9) throw std::runtime_error("diverged");
        return a;
    });
    EXPECT_DOUBLE_EQ(r.best_parameter, 1.5);
    EXPECT_FALSE(r.table.back().ok);
    EXPECT_EQ(r.table.back().error, "diverged");
}

TEST(SlopeSearch, ParallelMatchesSequential) {
    auto s = SlopeSearchSpace::range(0.0, 1.0, 0.1);
    auto f = [](double a) { return std::sin(7.0 * a); };
    auto a = slope_search(s, f, 1);
    auto b = slope_search(s, f, 4);
    EXPECT_EQ(a.best_parameter, b.best_parameter);
    for (std::size_t k = 0; k < a.table.size(); ++k) EXPECT_EQ(a.table[k].accuracy, b.table[k].accuracy);
}
