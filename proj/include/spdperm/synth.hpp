#pragma once

// Synthetic two-group cohorts: reference tensors in three anisotropy
// regimes, parametric deformations of the reference, and Wishart noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include "spdperm/errors.hpp"
#include "spdperm/permutation.hpp"
#include "spdperm/rng.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

enum class Regime { High, Low, NearIso };

inline SpdTensor reference_tensor(Regime regime) {
    switch (regime) {
        case Regime::High: return SpdTensor::diagonal(5.0, 1.0, 0.5);
        case Regime::Low: return SpdTensor::diagonal(3.0, 1.0, 1.0);
        case Regime::NearIso: return SpdTensor::diagonal(1.3, 1.0, 1.0);
    }
    throw InvalidArgument("unknown regime");
}

inline std::string regime_name(Regime r) {
    switch (r) {
        case Regime::High: return "high";
        case Regime::Low: return "low";
        case Regime::NearIso: return "neariso";
    }
    return "unknown";
}

inline Regime parse_regime(std::string_view s) {
    if (s == "high") return Regime::High;
    if (s == "low") return Regime::Low;
    if (s == "neariso" || s == "near-iso" || s == "nearisotropic") return Regime::NearIso;
    throw ParseError("unknown regime '" + std::string(s) + "'");
}

/// DL: decrease of longitudinal diffusion, IR: increase of radial diffusion,
/// IM: increase of mean diffusion, CO: change of orientation.
enum class DeformationKind { DL, IR, IM, CO };

struct DeformationSpec {
    DeformationKind kind = DeformationKind::CO;
    // For kind in {DL, IR, IM}: also apply the CO rotation with the same gamma.
    bool with_rotation = false;
    double gamma = 0.0;
    // Eigenvector (0-based, descending order) used as the CO rotation axis.
    int rotation_axis = 2;

    static DeformationSpec simple(DeformationKind kind, double gamma) {
        return {kind, false, gamma, 2};
    }
    static DeformationSpec combined(DeformationKind eigen_kind, double gamma) {
        if (eigen_kind == DeformationKind::CO) {
            throw InvalidArgument("combined deformation pairs CO with DL, IR or IM");
        }
        return {eigen_kind, true, gamma, 2};
    }

    bool rotates() const noexcept { return kind == DeformationKind::CO || with_rotation; }
};

inline std::string deformation_name(const DeformationSpec& d) {
    const char* names[] = {"dl", "ir", "im", "co"};
    std::string s = names[static_cast<int>(d.kind)];
    return d.with_rotation ? "co+" + s : s;
}

/// Parses "dl", "ir", "im", "co" or "co+dl" / "co+ir" / "co+im".
inline DeformationSpec parse_deformation(std::string_view s, double gamma = 0.0) {
    bool combined = false;
    if (s.starts_with("co+")) {
        combined = true;
        s.remove_prefix(3);
    }
    DeformationKind k;
    if (s == "dl") k = DeformationKind::DL;
    else if (s == "ir") k = DeformationKind::IR;
    else if (s == "im") k = DeformationKind::IM;
    else if (s == "co") k = DeformationKind::CO;
    else throw ParseError("unknown deformation '" + std::string(s) + "'");
    return combined ? DeformationSpec::combined(k, gamma) : DeformationSpec::simple(k, gamma);
}

/// Eigenvalue part of a deformation; input and output in descending slots.
inline std::array<double, 3> deform_eigenvalues(std::array<double, 3> l, DeformationKind kind,
                                                double gamma) {
    switch (kind) {
        case DeformationKind::DL: l[0] = l[0] - gamma * (l[0] - l[1]); break;
        case DeformationKind::IR:
            l[1] = l[1] + gamma * (l[0] - l[1]) / 2.0;
            l[2] = l[2] + gamma * (l[0] - l[2]) / 2.0;
            break;
        case DeformationKind::IM:
            for (double& v : l) v = (1.0 + gamma) * v;
            break;
        case DeformationKind::CO: break;
    }
    return l;
}

inline SpdTensor deform(const SpdTensor& reference, const DeformationSpec& spec) {
    if (!(spec.gamma >= 0.0 && spec.gamma <= 1.0)) {
        throw InvalidArgument("deformation gamma must lie in [0, 1]");
    }
    if (spec.rotation_axis < 0 || spec.rotation_axis > 2) {
        throw InvalidArgument("rotation axis must be 0, 1 or 2");
    }
    if (spec.gamma == 0.0) return reference;
    const auto d = spectral_decompose(reference);
    const auto l = deform_eigenvalues(d.eigenvalues, spec.kind, spec.gamma);
    Matrix3 r = d.rotation;
    if (spec.rotates()) {
        const Vector3 axis = d.rotation.col(spec.rotation_axis);
        const double angle = spec.gamma * std::numbers::pi / 2.0;
        r = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * r;
    }
    const Vector3 lv(l[0], l[1], l[2]);
    return SpdTensor::from_matrix(r * lv.asDiagonal() * r.transpose());
}

struct WishartNoise {
    int degrees_of_freedom = 30;
    std::uint64_t seed = 0;
};

/// X ~ Wishart_3(center / m, m) through the Bartlett decomposition, so that
/// E[X] = center.
inline SpdTensor wishart_sample(const SpdTensor& center, int degrees_of_freedom, Rng& rng) {
    if (degrees_of_freedom < 4) throw InvalidArgument("Wishart degrees of freedom must be >= 4");
    const double m = static_cast<double>(degrees_of_freedom);
    const Matrix3 l = Eigen::LLT<Matrix3>(center.matrix() / m).matrixL();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix3 a = Matrix3::Zero();
    for (int i = 0; i < 3; ++i) {
        std::chi_squared_distribution<double> chi2(m - i);
        a(i, i) = std::sqrt(chi2(rng));
        for (int j = 0; j < i; ++j) a(i, j) = normal(rng);
    }
    const Matrix3 la = l * a;
    return SpdTensor::from_matrix(la * la.transpose());
}

inline SpdTensor wishart_sample(const SpdTensor& center, const WishartNoise& noise) {
    Rng rng(noise.seed);
    return wishart_sample(center, noise.degrees_of_freedom, rng);
}

/// Group 0: n samples around the reference; group 1: n samples around the
/// deformed reference. Sample (g, i) draws from derive_seed(seed, {g, i}).
inline Cohort make_cohort(Regime regime, const DeformationSpec& spec, std::size_t n_per_group,
                          const WishartNoise& noise) {
    if (n_per_group < 2) throw InvalidArgument("make_cohort: n_per_group must be >= 2");
    const SpdTensor ref = reference_tensor(regime);
    const SpdTensor centers[2] = {ref, deform(ref, spec)};
    Cohort c;
    c.tensors.reserve(2 * n_per_group);
    c.labels.reserve(2 * n_per_group);
    for (int g = 0; g < 2; ++g) {
        for (std::size_t i = 0; i < n_per_group; ++i) {
            Rng rng(derive_seed(noise.seed, {static_cast<std::uint64_t>(g), i}));
            c.tensors.push_back(wishart_sample(centers[g], noise.degrees_of_freedom, rng));
            c.labels.push_back(g);
        }
    }
    return c;
}

}  // namespace spdperm
