#pragma once

// Means of SPD tensor families: arithmetic, Log-Euclidean (closed form),
// spectral-quaternion, and the affine-invariant Karcher mean.

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spdperm/errors.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

enum class KarcherMetric { LogEuclidean, AffineInvariant };

struct KarcherOptions {
    double tolerance = 1e-10;  // on the Frobenius norm of the tangent step
    int max_iterations = 100;
};

enum class MeanTag { Arithmetic, LogEuclidean, SpectralQuaternion, Karcher };

struct MeanKind {
    MeanTag tag = MeanTag::Arithmetic;
    KarcherMetric metric = KarcherMetric::AffineInvariant;  // Karcher only
    KarcherOptions karcher;

    static MeanKind arithmetic() { return {MeanTag::Arithmetic, KarcherMetric::AffineInvariant, {}}; }
    static MeanKind log_euclidean() { return {MeanTag::LogEuclidean, KarcherMetric::AffineInvariant, {}}; }
    static MeanKind spectral_quaternion() { return {MeanTag::SpectralQuaternion, KarcherMetric::AffineInvariant, {}}; }
    static MeanKind karcher_mean(KarcherMetric metric = KarcherMetric::AffineInvariant,
                                 KarcherOptions opts = {}) {
        if (!(opts.tolerance > 0.0) || opts.max_iterations < 1) {
            throw InvalidArgument("Karcher options: tolerance > 0 and max_iterations >= 1");
        }
        return {MeanTag::Karcher, metric, opts};
    }
};

inline MeanKind parse_mean_kind(std::string_view name) {
    if (name == "arithmetic") return MeanKind::arithmetic();
    if (name == "le" || name == "logeuclidean") return MeanKind::log_euclidean();
    if (name == "sq") return MeanKind::spectral_quaternion();
    if (name == "karcher") return MeanKind::karcher_mean();
    throw ParseError("unknown mean kind '" + std::string(name) + "'");
}

/// Raised when the Karcher iteration exhausts its budget.
class NoConvergence : public Error {
public:
    NoConvergence(const std::string& what, SpdTensor last, double step_norm, int iterations)
        : Error(what), last_(std::move(last)), step_norm_(step_norm), iterations_(iterations) {}

    const SpdTensor& last_iterate() const noexcept { return last_; }
    double step_norm() const noexcept { return step_norm_; }
    int iterations() const noexcept { return iterations_; }

private:
    SpdTensor last_;
    double step_norm_;
    int iterations_;
};

namespace detail {

template <class F>
Matrix3 apply_spectral(const Matrix3& sym, F&& f) {
    Eigen::SelfAdjointEigenSolver<Matrix3> solver(sym);
    Vector3 l = solver.eigenvalues();
    for (int i = 0; i < 3; ++i) l(i) = f(l(i));
    const Matrix3& v = solver.eigenvectors();
    return symmetrize(v * l.asDiagonal() * v.transpose());
}

inline void require_nonempty(std::size_t n, const char* who) {
    if (n == 0) throw EmptyInput(std::string(who) + ": empty input");
}

}  // namespace detail

/// sign-aligned copy of q, i.e. q or -q whichever is closer to ref.
inline Eigen::Vector4d align_to(const UnitQuaternion& q, const Eigen::Vector4d& ref) {
    const Eigen::Vector4d v = q.vector();
    return v.dot(ref) < 0.0 ? Eigen::Vector4d(-v) : v;
}

inline SpdTensor mean_arithmetic(std::span<const SpdTensor> tensors) {
    detail::require_nonempty(tensors.size(), "mean_arithmetic");
    std::array<double, 6> sum{};
    for (const auto& t : tensors) {
        for (int k = 0; k < 6; ++k) sum[k] += t.components()[k];
    }
    for (double& v : sum) v /= static_cast<double>(tensors.size());
    return SpdTensor::from_components(sum);
}

/// exp( (1/N) sum log x_i ).
inline SpdTensor mean_log_euclidean(std::span<const SpdTensor> tensors) {
    detail::require_nonempty(tensors.size(), "mean_log_euclidean");
    Matrix3 acc = Matrix3::Zero();
    for (const auto& t : tensors) acc += log_spd(t);
    return exp_sym(acc / static_cast<double>(tensors.size()));
}

/// Sign-aligned average of unit quaternions, renormalized. Signs are first
/// aligned to the first element, then re-aligned to the running mean until
/// the sign pattern stops changing.
inline UnitQuaternion chordal_mean_quaternions(std::span<const UnitQuaternion> qs) {
    detail::require_nonempty(qs.size(), "chordal_mean_quaternions");
    // Seed from the principal axis of sum q q^T, which ignores both the sign of
    // each q and the input order; then alternate sign choice and averaging.
    Eigen::Matrix4d scatter = Eigen::Matrix4d::Zero();
    for (const auto& q : qs) scatter += q.vector() * q.vector().transpose();
    Eigen::Vector4d ref = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d>(scatter).eigenvectors().col(3);
    std::vector<bool> signs(qs.size(), true);
    for (int iter = 0; iter < 64; ++iter) {
        Eigen::Vector4d sum = Eigen::Vector4d::Zero();
        bool changed = false;
        for (std::size_t i = 0; i < qs.size(); ++i) {
            const Eigen::Vector4d v = qs[i].vector();
            const bool positive = v.dot(ref) >= 0.0;
            if (positive != signs[i]) changed = true;
            signs[i] = positive;
            sum += positive ? v : Eigen::Vector4d(-v);
        }
        const double n = sum.norm();
        if (n < 1e-8) throw DegenerateMean("chordal_mean_quaternions: aligned sum vanishes");
        ref = sum / n;
        if (!changed && iter > 0) break;
    }
    return UnitQuaternion::from_components(ref(0), ref(1), ref(2), ref(3));
}

/// R_mu diag(L_mu) R_mu^T with per-slot geometric-mean eigenvalues and the
/// chordal mean of the eigenframes.
inline SpdTensor mean_spectral_quaternion(std::span<const SpdTensor> tensors) {
    detail::require_nonempty(tensors.size(), "mean_spectral_quaternion");
    std::array<double, 3> log_sum{};
    std::vector<UnitQuaternion> qs;
    qs.reserve(tensors.size());
    for (const auto& t : tensors) {
        const auto d = spectral_decompose(t);
        for (int k = 0; k < 3; ++k) log_sum[k] += std::log(d.eigenvalues[k]);
        qs.push_back(d.quaternion);
    }
    const double n = static_cast<double>(tensors.size());
    const Vector3 l(std::exp(log_sum[0] / n), std::exp(log_sum[1] / n), std::exp(log_sum[2] / n));
    const Matrix3 r = chordal_mean_quaternions(qs).rotation();
    return SpdTensor::from_matrix(r * l.asDiagonal() * r.transpose());
}

/// Affine-invariant geodesic distance || log(a^{-1/2} b a^{-1/2}) ||_F.
inline double affine_invariant_distance(const SpdTensor& a, const SpdTensor& b) {
    const Matrix3 isq = detail::apply_spectral(a.matrix(), [](double x) { return 1.0 / std::sqrt(x); });
    const Matrix3 inner = detail::symmetrize(isq * b.matrix() * isq);
    return detail::apply_spectral(inner, [](double x) { return std::log(x); }).norm();
}

/// (1/N) sum log(mu^{-1/2} x_i mu^{-1/2}); zero at the affine-invariant mean.
inline Matrix3 karcher_gradient(std::span<const SpdTensor> tensors, const SpdTensor& mu) {
    const Matrix3 isq =
        detail::apply_spectral(mu.matrix(), [](double x) { return 1.0 / std::sqrt(x); });
    Matrix3 acc = Matrix3::Zero();
    for (const auto& t : tensors) {
        const Matrix3 inner = detail::symmetrize(isq * t.matrix() * isq);
        acc += detail::apply_spectral(inner, [](double x) { return std::log(x); });
    }
    return acc / static_cast<double>(tensors.size());
}

/// Frechet mean. The Log-Euclidean metric has a closed form; the
/// affine-invariant mean runs the fixed-point iteration
///   mu <- mu^{1/2} exp(G(mu)) mu^{1/2}
/// from the arithmetic mean until ||G(mu)||_F < tolerance.
inline SpdTensor mean_karcher(std::span<const SpdTensor> tensors, KarcherMetric metric,
                              const KarcherOptions& opts = {}) {
    detail::require_nonempty(tensors.size(), "mean_karcher");
    if (metric == KarcherMetric::LogEuclidean) return mean_log_euclidean(tensors);
    if (!(opts.tolerance > 0.0) || opts.max_iterations < 1) {
        throw InvalidArgument("mean_karcher: tolerance > 0 and max_iterations >= 1");
    }

    SpdTensor mu = mean_arithmetic(tensors);
    double step = 0.0;
    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        const Matrix3 g = karcher_gradient(tensors, mu);
        step = g.norm();
        if (step < opts.tolerance) return mu;
        const Matrix3 sq = detail::apply_spectral(mu.matrix(), [](double x) { return std::sqrt(x); });
        const Matrix3 e = detail::apply_spectral(g, [](double x) { return std::exp(x); });
        mu = SpdTensor::from_matrix(sq * e * sq);
    }
    const double final_step = karcher_gradient(tensors, mu).norm();
    if (final_step < opts.tolerance) return mu;
    std::ostringstream os;
    os << "mean_karcher: no convergence after " << opts.max_iterations
       << " iterations (step norm " << final_step << ")";
    throw NoConvergence(os.str(), mu, final_step, opts.max_iterations);
}

inline SpdTensor compute_mean(std::span<const SpdTensor> tensors, const MeanKind& kind) {
    switch (kind.tag) {
        case MeanTag::Arithmetic: return mean_arithmetic(tensors);
        case MeanTag::LogEuclidean: return mean_log_euclidean(tensors);
        case MeanTag::SpectralQuaternion: return mean_spectral_quaternion(tensors);
        case MeanTag::Karcher: return mean_karcher(tensors, kind.metric, kind.karcher);
    }
    throw InvalidArgument("unknown mean kind");
}

}  // namespace spdperm
