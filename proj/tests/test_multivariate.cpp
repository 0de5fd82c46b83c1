#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "spdperm/multivariate.hpp"
#include "spdperm/synth.hpp"
#include "test_support.hpp"

using namespace spdperm;

namespace {

Cohort high_cohort(std::uint64_t seed, DeformationKind kind, double gamma, std::size_t n = 10) {
    return make_cohort(Regime::High, DeformationSpec::simple(kind, gamma), n, {30, seed});
}

}  // namespace

TEST(Parametrize, Fixtures) {
    const std::vector<SpdTensor> ts{SpdTensor::diagonal(5, 1, 0.5)};
    const VariableTable g = parametrize(ts, Parametrization::Geometric);
    const VariableRow expected{5, 1, 0.5, 0, 0, 0};
    EXPECT_EQ(g.rows[0], expected);

    const SpdTensor t = SpdTensor::from_components(2, 3, 4, 0.1, 0.2, 0.3);
    const VariableTable e = parametrize(std::vector{t}, Parametrization::Euclidean);
    EXPECT_EQ(e.rows[0], (VariableRow{2, 3, 4, 0.1, 0.2, 0.3}));
    EXPECT_EQ(variable_names(Parametrization::Geometric)[3], "qx");
    EXPECT_EQ(variable_names(Parametrization::Euclidean)[5], "yz");
}

TEST(Parametrize, QuaternionColumnsAlignedAndOrderIndependent) {
    // Frames tilted about x by +-0.3 and 0.1: after alignment qx carries the
    // tilt direction, qx = sin(angle / 2).
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    std::vector<SpdTensor> ts;
    for (double angle : {0.3, -0.3, 0.1}) {
        ts.push_back(congruence(UnitQuaternion::from_axis_angle(Vector3::UnitX(), angle).rotation(), a));
    }
    const VariableTable t = parametrize(ts, Parametrization::Geometric);
    EXPECT_NEAR(t.rows[0][3], std::sin(0.15), 1e-12);
    EXPECT_NEAR(t.rows[1][3], -std::sin(0.15), 1e-12);
    EXPECT_NEAR(t.rows[2][3], std::sin(0.05), 1e-12);
    const VariableTable again = parametrize(std::vector{ts[2], ts[0], ts[1]}, Parametrization::Geometric);
    for (int v = 0; v < 6; ++v) {
        EXPECT_NEAR(t.rows[0][v], again.rows[1][v], 1e-14);
        EXPECT_NEAR(t.rows[2][v], again.rows[0][v], 1e-14);
    }
}

TEST(VariableSimilarity, Fixtures) {
    EXPECT_NEAR(variable_dissimilarity(VariableMetric::LogRatio, 1.0, std::exp(1.0)), 1.0, 1e-15);
    EXPECT_NEAR(variable_dissimilarity(VariableMetric::AbsDifference, 0.2, -0.1), 0.3, 1e-15);
    EXPECT_EQ(partial_variable_similarity(0, Parametrization::Geometric), VariableMetric::LogRatio);
    EXPECT_EQ(partial_variable_similarity(3, Parametrization::Geometric), VariableMetric::AbsDifference);
    EXPECT_EQ(partial_variable_similarity(0, Parametrization::Euclidean), VariableMetric::AbsDifference);
    EXPECT_THROW(partial_variable_similarity(6, Parametrization::Geometric), InvalidArgument);
}

TEST(Combine, Fixtures) {
    const std::vector<double> xi{0.5, 0.25};
    EXPECT_NEAR(combine(Combiner::Fisher, xi), -2 * (std::log(0.5) + std::log(0.25)), 1e-14);
    EXPECT_EQ(combine(Combiner::Tippett, xi), 0.25);
    EXPECT_EQ(combiner_tail(Combiner::Fisher), Tail::Upper);
    EXPECT_EQ(combiner_tail(Combiner::Tippett), Tail::Lower);
    // Fisher statistic grows as any partial p shrinks.
    double prev = combine(Combiner::Fisher, std::vector{0.9, 0.5});
    for (double x : {0.4, 0.2, 0.1, 0.01}) {
        const double t = combine(Combiner::Fisher, std::vector{0.9, x});
        EXPECT_GT(t, prev);
        prev = t;
    }
    EXPECT_THROW(parse_combiner("stouffer"), ParseError);
}

TEST(MultivariateTest, IdenticalCohortGivesUnitPValues) {
    Cohort c;
    for (int i = 0; i < 8; ++i) {
        c.tensors.push_back(SpdTensor::from_components(3, 2, 1, 0.1, 0.2, 0.05));
        c.labels.push_back(i / 4);
    }
    for (auto p : {Parametrization::Geometric, Parametrization::Euclidean}) {
        for (auto comb : {Combiner::Fisher, Combiner::Tippett}) {
            const auto rep = multivariate_test(c, p, comb, PermutationScheme::monte_carlo(300, 2));
            for (std::size_t v = 0; v < 6; ++v) {
                EXPECT_EQ(rep.partial_p[v], 1.0);
                EXPECT_TRUE(rep.degenerate[v]);
            }
            EXPECT_EQ(rep.combined_p, 1.0);
        }
    }
}

TEST(MultivariateTest, SingleVariableEqualsUnivariateMrpp) {
    const Cohort c = high_cohort(3, DeformationKind::DL, 0.3);
    const VariableTable t = parametrize(c.tensors, Parametrization::Geometric);
    const auto scheme = PermutationScheme::monte_carlo(2000, 77);
    const PermutationLog log = make_permutation_log(c.labels, scheme);
    for (std::size_t v = 0; v < 6; ++v) {
        const std::vector<SimilarityMatrix> one{variable_similarity_matrix(t, v)};
        const TestResult uni = mrpp_test(one[0], c.labels, GroupWeights::proportional(), scheme);
        for (auto comb : {Combiner::Fisher, Combiner::Tippett}) {
            const auto rep = combine_partial_tests(one, c.labels, log, comb);
            EXPECT_DOUBLE_EQ(rep.partial_p[0], uni.p_value) << v;
            EXPECT_DOUBLE_EQ(rep.combined_p, uni.p_value) << v;
        }
    }
}

TEST(MultivariateTest, PartialPMatchesUnivariateOnSharedLog) {
    const Cohort c = high_cohort(4, DeformationKind::CO, 0.5);
    const auto scheme = PermutationScheme::monte_carlo(1000, 5);
    const auto rep = multivariate_test(c, Parametrization::Euclidean, Combiner::Fisher, scheme);
    const VariableTable t = parametrize(c.tensors, Parametrization::Euclidean);
    for (std::size_t v = 0; v < 6; ++v) {
        const TestResult r =
            mrpp_test(variable_similarity_matrix(t, v), c.labels, GroupWeights::proportional(), scheme);
        EXPECT_DOUBLE_EQ(rep.partial_p[v], r.p_value);
        EXPECT_DOUBLE_EQ(rep.observed[v], r.observed);
    }
    EXPECT_EQ(rep.n_permutations, 1000u);
}

TEST(MultivariateTest, PValueBounds) {
    const Cohort c = high_cohort(9, DeformationKind::IM, 0.8);
    const std::size_t np = 500;
    for (auto comb : {Combiner::Fisher, Combiner::Tippett}) {
        const auto rep = multivariate_test(c, Parametrization::Geometric, comb, PermutationScheme::monte_carlo(np, 1));
        for (double xi : rep.partial_p) {
            EXPECT_GE(xi, 1.0 / (1 + np));
            EXPECT_LE(xi, 1.0);
        }
        EXPECT_GE(rep.combined_p, 1.0 / (1 + np));
        EXPECT_LE(rep.combined_p, 1.0);
    }
}

TEST(MultivariateTest, RotatingOneGroupOnlyMovesQuaternionColumns) {
    const Cohort c = high_cohort(12, DeformationKind::DL, 0.2);
    Cohort rotated = c;
    const Matrix3 r = UnitQuaternion::from_axis_angle(Vector3(0.2, 0.3, 1.0).normalized(), 0.7).rotation();
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.labels[i] == 1) rotated.tensors[i] = congruence(r, c.tensors[i]);
    }
    const auto scheme = PermutationScheme::monte_carlo(500, 8);
    const auto a = multivariate_test(c, Parametrization::Geometric, Combiner::Fisher, scheme);
    const auto b = multivariate_test(rotated, Parametrization::Geometric, Combiner::Fisher, scheme);
    // Eigenvalues are recomputed from rotated matrices, so compare to
    // eigensolver accuracy rather than bitwise.
    for (std::size_t v = 0; v < 3; ++v) EXPECT_NEAR(a.observed[v], b.observed[v], 1e-10);
    double moved = 0;
    for (std::size_t v = 3; v < 6; ++v) moved += std::abs(a.observed[v] - b.observed[v]);
    EXPECT_GT(moved, 1e-3);
}

TEST(MultivariateTest, VariableOrderDoesNotChangeResults) {
    const Cohort c = high_cohort(14, DeformationKind::CO, 0.3);
    const VariableTable t = parametrize(c.tensors, Parametrization::Geometric);
    std::vector<SimilarityMatrix> fwd, rev;
    for (std::size_t v = 0; v < 6; ++v) fwd.push_back(variable_similarity_matrix(t, v));
    for (std::size_t v = 6; v-- > 0;) rev.push_back(variable_similarity_matrix(t, v));
    const PermutationLog log = make_permutation_log(c.labels, PermutationScheme::monte_carlo(800, 3));
    for (auto comb : {Combiner::Fisher, Combiner::Tippett}) {
        const auto a = combine_partial_tests(fwd, c.labels, log, comb);
        const auto b = combine_partial_tests(rev, c.labels, log, comb);
        for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(a.partial_p[v], b.partial_p[5 - v]);
        EXPECT_EQ(a.combined_p, b.combined_p);
        const auto threaded = combine_partial_tests(fwd, c.labels, log, comb, {}, 3);
        EXPECT_EQ(a.partial_p, threaded.partial_p);
        EXPECT_EQ(a.combined_p, threaded.combined_p);
    }
}

TEST(MultivariateTest, DetectsStrongEffect) {
    const Cohort dl = high_cohort(21, DeformationKind::DL, 0.8);
    const auto rep_dl = multivariate_test(dl, Parametrization::Geometric, Combiner::Fisher,
                                          PermutationScheme::monte_carlo(1000, 4));
    EXPECT_LE(rep_dl.partial_p[0], 0.01);
    // IM scales all eigenvalues, so every eigenvalue column and the combination react.
    const Cohort im = high_cohort(22, DeformationKind::IM, 0.8);
    for (auto comb : {Combiner::Fisher, Combiner::Tippett}) {
        const auto rep = multivariate_test(im, Parametrization::Geometric, comb, PermutationScheme::monte_carlo(1000, 4));
        for (std::size_t v = 0; v < 3; ++v) EXPECT_LE(rep.partial_p[v], 0.01);
        EXPECT_LE(rep.combined_p, 0.01);
    }
}
