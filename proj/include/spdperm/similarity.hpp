#pragma once

// Pairwise dissimilarities between SPD tensors and the dense similarity
// matrix consumed by the dispersion tests. All measures are 0 for identical
// inputs and grow with difference.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spdperm/errors.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

enum class MeasureKind { Euclidean, LogEuclidean, SpectralQuaternion, FractionalAnisotropy };

struct SimilarityMeasure {
    MeasureKind kind = MeasureKind::Euclidean;
    // Orientation-weight scale; only read by SpectralQuaternion.
    double k0 = 1.0;

    static SimilarityMeasure euclidean() { return {MeasureKind::Euclidean, 1.0}; }
    static SimilarityMeasure log_euclidean() { return {MeasureKind::LogEuclidean, 1.0}; }
    static SimilarityMeasure spectral_quaternion(double k0 = 1.0) {
        if (!(k0 > 0.0) || !std::isfinite(k0)) {
            throw InvalidArgument("spectral-quaternion k0 must be positive");
        }
        return {MeasureKind::SpectralQuaternion, k0};
    }
    static SimilarityMeasure fractional_anisotropy() {
        return {MeasureKind::FractionalAnisotropy, 1.0};
    }
};

inline std::string measure_name(MeasureKind kind) {
    switch (kind) {
        case MeasureKind::Euclidean: return "euclidean";
        case MeasureKind::LogEuclidean: return "logeuclidean";
        case MeasureKind::SpectralQuaternion: return "sq";
        case MeasureKind::FractionalAnisotropy: return "fa";
    }
    return "unknown";
}

inline MeasureKind parse_measure_kind(std::string_view name) {
    if (name == "euclidean" || name == "e") return MeasureKind::Euclidean;
    if (name == "logeuclidean" || name == "le") return MeasureKind::LogEuclidean;
    if (name == "sq" || name == "spectral-quaternion") return MeasureKind::SpectralQuaternion;
    if (name == "fa") return MeasureKind::FractionalAnisotropy;
    throw ParseError("unknown similarity measure '" + std::string(name) + "'");
}

// --- scalar building blocks -------------------------------------------------

/// |log(lambda / mu)| for positive scalars.
inline double eigenvalue_log_similarity(double lambda, double mu) {
    if (!(lambda > 0.0) || !(mu > 0.0)) {
        throw NonPositiveInput("eigenvalue_log_similarity: arguments must be positive");
    }
    return std::abs(std::log(lambda / mu));
}

/// Chordal distance with the q / -q ambiguity resolved.
inline double chordal_quaternion_distance(const UnitQuaternion& p, const UnitQuaternion& q) {
    const Eigen::Vector4d a = p.vector();
    const Eigen::Vector4d b = q.vector();
    return std::min((a - b).norm(), (a + b).norm());
}

// --- per-tensor cached quantities -------------------------------------------

/// Everything a pairwise measure needs from one tensor, computed once.
struct TensorFeatures {
    Matrix3 matrix;
    Matrix3 log;
    SpectralDecomposition spectral;
    double fa = 0.0;

    static TensorFeatures of(const SpdTensor& t) {
        TensorFeatures f;
        f.matrix = t.matrix();
        f.log = log_spd(t);
        f.spectral = spectral_decompose(t);
        f.fa = fractional_anisotropy(f.spectral.eigenvalues);
        return f;
    }
};

/// Weight of the orientation term: k0 * (FA(a) * FA(b))^2. Vanishes when
/// either tensor is isotropic and falls off quadratically in each FA, so
/// noise-driven frames of near-isotropic tensors barely contribute.
inline double orientation_weight(double fa_a, double fa_b, double k0) {
    const double p = fa_a * fa_b;
    return k0 * p * p;
}

inline double spectral_quaternion_distance(const TensorFeatures& a, const TensorFeatures& b,
                                           double k0) {
    double eig = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double r = std::log(a.spectral.eigenvalues[i] / b.spectral.eigenvalues[i]);
        eig += r * r;
    }
    const double k = orientation_weight(a.fa, b.fa, k0);
    const double dq = chordal_quaternion_distance(a.spectral.quaternion, b.spectral.quaternion);
    return std::sqrt(eig + k * dq * dq);
}

inline double distance(const TensorFeatures& a, const TensorFeatures& b,
                       const SimilarityMeasure& m) {
    switch (m.kind) {
        case MeasureKind::Euclidean: return (a.matrix - b.matrix).norm();
        case MeasureKind::LogEuclidean: return (a.log - b.log).norm();
        case MeasureKind::SpectralQuaternion: return spectral_quaternion_distance(a, b, m.k0);
        case MeasureKind::FractionalAnisotropy: return std::abs(a.fa - b.fa);
    }
    throw InvalidArgument("unknown measure kind");
}

// --- tensor-level measures --------------------------------------------------

inline double dist_euclidean(const SpdTensor& a, const SpdTensor& b) {
    return (a.matrix() - b.matrix()).norm();
}

inline double dist_log_euclidean(const SpdTensor& a, const SpdTensor& b) {
    return (log_spd(a) - log_spd(b)).norm();
}

/// sqrt( sum_i log^2(la_i / lb_i) + k * d_chordal(qa, qb)^2 ) with k from
/// orientation_weight.
inline double dist_spectral_quaternion(const SpdTensor& a, const SpdTensor& b, double k0 = 1.0) {
    if (!(k0 > 0.0)) throw InvalidArgument("dist_spectral_quaternion: k0 must be positive");
    return spectral_quaternion_distance(TensorFeatures::of(a), TensorFeatures::of(b), k0);
}

inline double fa_similarity(const SpdTensor& a, const SpdTensor& b) {
    return std::abs(fractional_anisotropy(a) - fractional_anisotropy(b));
}

inline double dissimilarity(const SpdTensor& a, const SpdTensor& b, const SimilarityMeasure& m) {
    return distance(TensorFeatures::of(a), TensorFeatures::of(b), m);
}

// --- similarity matrix ------------------------------------------------------

/// Dense symmetric N x N matrix with zero diagonal.
class SimilarityMatrix {
public:
    SimilarityMatrix() = default;
    explicit SimilarityMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * n_ + j]; }

    void set(std::size_t i, std::size_t j, double v) {
        if (i == j) throw InvalidArgument("SimilarityMatrix: diagonal is fixed at zero");
        if (!(v >= 0.0)) throw InvalidArgument("SimilarityMatrix: entries must be nonnegative");
        data_[i * n_ + j] = v;
        data_[j * n_ + i] = v;
    }

    const double* row(std::size_t i) const noexcept { return data_.data() + i * n_; }

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// Fills the upper triangle with `pair(i, j)` for i < j, each pair evaluated
/// exactly once.
template <class PairFn>
SimilarityMatrix build_similarity_matrix(std::size_t n, PairFn&& pair) {
    SimilarityMatrix s(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) s.set(i, j, pair(i, j));
    }
    return s;
}

inline std::vector<TensorFeatures> compute_features(std::span<const SpdTensor> tensors) {
    std::vector<TensorFeatures> out;
    out.reserve(tensors.size());
    for (const auto& t : tensors) out.push_back(TensorFeatures::of(t));
    return out;
}

inline SimilarityMatrix similarity_matrix(std::span<const SpdTensor> tensors,
                                          const SimilarityMeasure& measure) {
    if (tensors.size() < 2) throw InvalidArgument("similarity_matrix: need at least 2 tensors");
    const auto features = compute_features(tensors);
    return build_similarity_matrix(tensors.size(), [&](std::size_t i, std::size_t j) {
        return distance(features[i], features[j], measure);
    });
}

}  // namespace spdperm
