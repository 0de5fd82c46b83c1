#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "spdperm/means.hpp"
#include "test_support.hpp"

using namespace spdperm;
using spdperm::testing::random_rotation;
using spdperm::testing::random_spd;
using spdperm::testing::random_spd_list;
using spdperm::testing::rel_frobenius;

namespace {

UnitQuaternion about_z(double angle) { return UnitQuaternion::from_axis_angle(Vector3::UnitZ(), angle); }

// Brute-force minimizer of sum_i min(|q - q_i|^2, |q + q_i|^2) over rotations
// about z, on a uniform grid of the rotation angle.
double grid_chordal_mean_angle_about_z(const std::vector<UnitQuaternion>& qs) {
    const int steps = 2'000'000;
    double best = 0.0, best_cost = 1e300;
    for (int s = 0; s < steps; ++s) {
        const double theta = 2.0 * std::numbers::pi * s / steps;
        const Eigen::Vector4d q(std::cos(theta / 2), 0, 0, std::sin(theta / 2));
        double cost = 0.0;
        for (const auto& qi : qs) {
            const Eigen::Vector4d v = qi.vector();
            cost += std::min((q - v).squaredNorm(), (q + v).squaredNorm());
        }
        if (cost < best_cost) {
            best_cost = cost;
            best = theta;
        }
    }
    return best;
}

const std::vector<MeanKind> kAllMeans = {MeanKind::arithmetic(), MeanKind::log_euclidean(),
                                         MeanKind::spectral_quaternion(),
                                         MeanKind::karcher_mean(KarcherMetric::AffineInvariant)};

}  // namespace

TEST(MeanArithmetic, Fixtures) {
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    EXPECT_EQ(mean_arithmetic(std::vector{a}), a);
    EXPECT_LT((mean_arithmetic(std::vector{SpdTensor::identity(), SpdTensor::diagonal(3, 3, 3)}).matrix() -
               2.0 * Matrix3::Identity()).norm(), 1e-15);
    EXPECT_THROW(mean_arithmetic(std::vector<SpdTensor>{}), EmptyInput);
}

TEST(MeanArithmetic, MatchesElementwiseSum) {
    Rng rng(1);
    const auto ts = random_spd_list(rng, 17);
    Matrix3 sum = Matrix3::Zero();
    for (const auto& t : ts) sum += t.matrix();
    EXPECT_LT((mean_arithmetic(ts).matrix() - sum / 17.0).norm(), 1e-12);
}

TEST(MeanLogEuclidean, Fixtures) {
    const double e = std::exp(1.0);
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    EXPECT_LT(rel_frobenius(mean_log_euclidean(std::vector{a}).matrix(), a.matrix()), 1e-14);
    EXPECT_LT((mean_log_euclidean(std::vector{SpdTensor::diagonal(e, 1, 1), SpdTensor::diagonal(1 / e, 1, 1)}).matrix() -
               Matrix3::Identity()).norm(), 1e-14);
    EXPECT_LT((mean_log_euclidean(std::vector{SpdTensor::identity(), SpdTensor::diagonal(4, 1, 1)}).matrix() -
               SpdTensor::diagonal(2, 1, 1).matrix()).norm(), 1e-14);
    EXPECT_THROW(mean_log_euclidean(std::vector<SpdTensor>{}), EmptyInput);
}

TEST(ChordalMean, Fixtures) {
    Rng rng(3);
    const UnitQuaternion q = spdperm::testing::random_quaternion(rng);
    EXPECT_LT((chordal_mean_quaternions(std::vector{q, q, q}).vector() - q.vector()).norm(), 1e-15);
    // -q canonicalizes back to q; feed the raw negation through the aligned path.
    const UnitQuaternion mq = UnitQuaternion::from_components(-q.w(), -q.x(), -q.y(), -q.z());
    EXPECT_LT((chordal_mean_quaternions(std::vector{q, mq}).vector() - q.vector()).norm(), 1e-15);
    EXPECT_THROW(chordal_mean_quaternions(std::vector<UnitQuaternion>{}), EmptyInput);
}

TEST(ChordalMean, QuarterTurnPairMatchesGridOracle) {
    const std::vector<UnitQuaternion> qs{about_z(0.0), about_z(std::numbers::pi / 2)};
    const double oracle = grid_chordal_mean_angle_about_z(qs);
    EXPECT_NEAR(oracle, std::numbers::pi / 4, 1e-5);
    const UnitQuaternion m = chordal_mean_quaternions(qs);
    EXPECT_NEAR(m.x(), 0.0, 1e-15);
    EXPECT_NEAR(m.y(), 0.0, 1e-15);
    EXPECT_NEAR(2.0 * std::atan2(m.z(), m.w()), oracle, 1e-5);
}

TEST(ChordalMean, SpreadAboutZMatchesGridOracle) {
    // Four rotations with one needing a sign flip relative to the first.
    const std::vector<UnitQuaternion> qs{about_z(0.3), about_z(1.1), about_z(-0.4), about_z(2.0 * std::numbers::pi - 0.2)};
    const double oracle = grid_chordal_mean_angle_about_z(qs);
    const UnitQuaternion m = chordal_mean_quaternions(qs);
    double theta = 2.0 * std::atan2(m.z(), m.w());
    if (theta < 0) theta += 2.0 * std::numbers::pi;
    double diff = std::abs(theta - oracle);
    diff = std::min(diff, 2.0 * std::numbers::pi - diff);
    EXPECT_LT(diff, 1e-5);
}

TEST(MeanSpectralQuaternion, Fixtures) {
    const double e = std::exp(1.0);
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    EXPECT_LT(rel_frobenius(mean_spectral_quaternion(std::vector{a}).matrix(), a.matrix()), 1e-14);
    EXPECT_LT(rel_frobenius(mean_spectral_quaternion(std::vector{SpdTensor::identity(), SpdTensor::diagonal(e * e, e * e, e * e)}).matrix(),
                            SpdTensor::diagonal(e, e, e).matrix()), 1e-14);
}

TEST(MeanSpectralQuaternion, FramesAboutSharedAxisAverageAngle) {
    // Frames stay canonical (pivot-positive) only for |angle| < pi/4 about z.
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    const SpdTensor p = congruence(about_z(-0.2).rotation(), a);
    const SpdTensor q = congruence(about_z(0.6).rotation(), a);
    const std::vector<UnitQuaternion> qs{spectral_decompose(p).quaternion, spectral_decompose(q).quaternion};
    const double oracle = grid_chordal_mean_angle_about_z(qs);
    EXPECT_NEAR(oracle, 0.2, 1e-5);

    const SpdTensor m = mean_spectral_quaternion(std::vector{p, q});
    const auto d = spectral_decompose(m);
    EXPECT_NEAR(d.eigenvalues[0], 5.0, 1e-12);
    EXPECT_NEAR(d.eigenvalues[1], 1.0, 1e-12);
    EXPECT_NEAR(d.eigenvalues[2], 0.5, 1e-12);
    EXPECT_NEAR(2.0 * std::atan2(d.quaternion.z(), d.quaternion.w()), oracle, 1e-5);
    EXPECT_LT((m.matrix() - congruence(about_z(0.2).rotation(), a).matrix()).norm(), 1e-12);
}

TEST(MeanSpectralQuaternion, SlotwiseGeometricMeanOfEigenvalues) {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ts = random_spd_list(rng, 6, 0.8);
        std::array<double, 3> logs{};
        for (const auto& t : ts) {
            const auto d = spectral_decompose(t);
            for (int k = 0; k < 3; ++k) logs[k] += std::log(d.eigenvalues[k]);
        }
        const auto dm = spectral_decompose(mean_spectral_quaternion(ts));
        for (int k = 0; k < 3; ++k) {
            const double expected = std::exp(logs[k] / 6.0);
            ASSERT_NEAR(dm.eigenvalues[k], expected, 1e-9 * expected);
        }
    }
}

TEST(MeanKarcher, Fixtures) {
    const SpdTensor a = SpdTensor::diagonal(5, 1, 0.5);
    for (auto metric : {KarcherMetric::LogEuclidean, KarcherMetric::AffineInvariant}) {
        EXPECT_LT(rel_frobenius(mean_karcher(std::vector{a, a}, metric).matrix(), a.matrix()), 1e-12);
        // Commuting family: eigenvalue-wise geometric mean.
        const SpdTensor m = mean_karcher(std::vector{SpdTensor::diagonal(1, 2, 9), SpdTensor::diagonal(4, 8, 1)}, metric);
        EXPECT_LT((m.matrix() - SpdTensor::diagonal(2, 4, 3).matrix()).norm(), 1e-9);
    }
}

TEST(MeanKarcher, LogEuclideanIsClosedForm) {
    Rng rng(15);
    const auto ts = random_spd_list(rng, 5);
    EXPECT_EQ(mean_karcher(ts, KarcherMetric::LogEuclidean).matrix(), mean_log_euclidean(ts).matrix());
}

TEST(MeanKarcher, RandomTriplesSatisfyStationarity) {
    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ts = random_spd_list(rng, 3);
        const SpdTensor mu = mean_karcher(ts, KarcherMetric::AffineInvariant);
        ASSERT_LT(karcher_gradient(ts, mu).norm(), 1e-8);
    }
}

TEST(MeanKarcher, ReportsNoConvergence) {
    Rng rng(23);
    const auto ts = random_spd_list(rng, 4, 2.0);
    try {
        mean_karcher(ts, KarcherMetric::AffineInvariant, {1e-300, 1});
        FAIL() << "expected NoConvergence";
    } catch (const NoConvergence& e) {
        EXPECT_EQ(e.iterations(), 1);
        EXPECT_GT(e.step_norm(), 0.0);
        EXPECT_GT(e.last_iterate().xx(), 0.0);
    }
    EXPECT_THROW(MeanKind::karcher_mean(KarcherMetric::AffineInvariant, {0.0, 10}), InvalidArgument);
    EXPECT_THROW(MeanKind::karcher_mean(KarcherMetric::AffineInvariant, {1e-10, 0}), InvalidArgument);
}

TEST(AllMeans, IdempotentAndPermutationInvariant) {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const SpdTensor a = random_spd(rng);
        auto ts = random_spd_list(rng, 5, 0.7);
        for (const auto& kind : kAllMeans) {
            ASSERT_LT(rel_frobenius(compute_mean(std::vector(4, a), kind).matrix(), a.matrix()), 1e-9);
            const SpdTensor m = compute_mean(ts, kind);
            auto shuffled = ts;
            std::reverse(shuffled.begin(), shuffled.end());
            std::swap(shuffled[0], shuffled[2]);
            ASSERT_LT(rel_frobenius(compute_mean(shuffled, kind).matrix(), m.matrix()), 1e-9);
        }
    }
}

TEST(AllMeans, RotationEquivariance) {
    Rng rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ts = random_spd_list(rng, 5);
        const Matrix3 r = random_rotation(rng);
        std::vector<SpdTensor> rotated;
        for (const auto& t : ts) rotated.push_back(congruence(r, t));
        for (const auto& kind : {MeanKind::log_euclidean(), MeanKind::karcher_mean(), MeanKind::arithmetic()}) {
            const Matrix3 lhs = compute_mean(rotated, kind).matrix();
            const Matrix3 rhs = r * compute_mean(ts, kind).matrix() * r.transpose();
            ASSERT_LT((lhs - rhs).norm(), 1e-8 * (1.0 + rhs.norm()));
        }
    }
}

TEST(MeanLogEuclidean, ScaleEquivariant) {
    Rng rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        const auto ts = random_spd_list(rng, 4);
        std::vector<SpdTensor> scaled;
        for (const auto& t : ts) scaled.push_back(t.scaled(3.5));
        EXPECT_LT(rel_frobenius(mean_log_euclidean(scaled).matrix(), 3.5 * mean_log_euclidean(ts).matrix()), 1e-9);
    }
}

TEST(AffineInvariantDistance, BasicProperties) {
    Rng rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        const SpdTensor a = random_spd(rng), b = random_spd(rng);
        EXPECT_NEAR(affine_invariant_distance(a, a), 0.0, 1e-12);
        EXPECT_NEAR(affine_invariant_distance(a, b), affine_invariant_distance(b, a), 1e-9);
        EXPECT_NEAR(affine_invariant_distance(a, b), affine_invariant_distance(a.inverse(), b.inverse()), 1e-9);
    }
}

TEST(MeanKindNames, Parse) {
    EXPECT_EQ(parse_mean_kind("arithmetic").tag, MeanTag::Arithmetic);
    EXPECT_EQ(parse_mean_kind("le").tag, MeanTag::LogEuclidean);
    EXPECT_EQ(parse_mean_kind("sq").tag, MeanTag::SpectralQuaternion);
    EXPECT_EQ(parse_mean_kind("karcher").tag, MeanTag::Karcher);
    EXPECT_THROW(parse_mean_kind("median"), ParseError);
}
