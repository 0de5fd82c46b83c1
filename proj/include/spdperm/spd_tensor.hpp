#pragma once

// 3x3 symmetric positive-definite tensors and their spectral derivates:
// ordered eigendecomposition, rotation <-> quaternion conversion, matrix
// log/exp and fractional anisotropy.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <sstream>

#include "spdperm/errors.hpp"

namespace spdperm {

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

// Eigenvalues below this fraction of the largest one are treated as zero.
inline constexpr double kSpdRelativeThreshold = 1e-12;
inline constexpr double kRotationTolerance = 1e-8;

namespace detail {

inline Matrix3 symmetrize(const Matrix3& m) { return 0.5 * (m + m.transpose()); }

inline Vector3 eigenvalues_of(const Matrix3& m) {
    Eigen::SelfAdjointEigenSolver<Matrix3> solver(m, Eigen::EigenvaluesOnly);
    return solver.eigenvalues();  // ascending
}

}  // namespace detail

/// Symmetric positive-definite 3x3 matrix stored as its six independent
/// components (xx, yy, zz, xy, xz, yz). Instances are always valid: the
/// factories reject non-finite input and numerically singular matrices.
class SpdTensor {
public:
    static SpdTensor from_components(double xx, double yy, double zz, double xy, double xz,
                                     double yz) {
        return SpdTensor(std::array<double, 6>{xx, yy, zz, xy, xz, yz});
    }

    static SpdTensor from_components(const std::array<double, 6>& c) { return SpdTensor(c); }

    /// Symmetrizes `m` before validation.
    static SpdTensor from_matrix(const Matrix3& m) {
        const Matrix3 s = detail::symmetrize(m);
        return SpdTensor(
            std::array<double, 6>{s(0, 0), s(1, 1), s(2, 2), s(0, 1), s(0, 2), s(1, 2)});
    }

    static SpdTensor diagonal(double a, double b, double c) {
        return from_components(a, b, c, 0.0, 0.0, 0.0);
    }

    static SpdTensor identity() { return diagonal(1.0, 1.0, 1.0); }

    double xx() const noexcept { return c_[0]; }
    double yy() const noexcept { return c_[1]; }
    double zz() const noexcept { return c_[2]; }
    double xy() const noexcept { return c_[3]; }
    double xz() const noexcept { return c_[4]; }
    double yz() const noexcept { return c_[5]; }

    const std::array<double, 6>& components() const noexcept { return c_; }

    Matrix3 matrix() const {
        Matrix3 m;
        m << c_[0], c_[3], c_[4],
             c_[3], c_[1], c_[5],
             c_[4], c_[5], c_[2];
        return m;
    }

    SpdTensor scaled(double c) const {
        if (!(c > 0.0)) throw NonPositiveInput("SpdTensor::scaled: factor must be positive");
        std::array<double, 6> s = c_;
        for (double& v : s) v *= c;
        return SpdTensor(s);
    }

    SpdTensor inverse() const { return from_matrix(matrix().inverse()); }

    friend bool operator==(const SpdTensor&, const SpdTensor&) = default;

private:
    explicit SpdTensor(const std::array<double, 6>& c) : c_(c) {
        for (double v : c_) {
            if (!std::isfinite(v)) throw NonFiniteInput("SpdTensor: non-finite component");
        }
        const Vector3 ev = detail::eigenvalues_of(matrix());
        const double lmax = ev(2);
        const double lmin = ev(0);
        if (!(lmax > 0.0) || !(lmin > kSpdRelativeThreshold * lmax)) {
            std::ostringstream os;
            os << "SpdTensor: not positive definite (eigenvalues " << ev(2) << ", " << ev(1)
               << ", " << ev(0) << ")";
            throw NotPositiveDefinite(os.str());
        }
    }

    std::array<double, 6> c_;
};

inline std::ostream& operator<<(std::ostream& os, const SpdTensor& t) {
    return os << "SpdTensor(" << t.xx() << ", " << t.yy() << ", " << t.zz() << ", " << t.xy()
              << ", " << t.xz() << ", " << t.yz() << ")";
}

/// Same as SpdTensor::from_components; kept as the named validation entry point.
inline SpdTensor validate_spd(double xx, double yy, double zz, double xy, double xz, double yz) {
    return SpdTensor::from_components(xx, yy, zz, xy, xz, yz);
}

/// R * t * R^T.
inline SpdTensor congruence(const Matrix3& r, const SpdTensor& t) {
    return SpdTensor::from_matrix(r * t.matrix() * r.transpose());
}

/// Unit quaternion (w, x, y, z) with canonical sign: w >= 0, and when w == 0
/// the first nonzero of (x, y, z) is positive. q and -q canonicalize to the
/// same value.
class UnitQuaternion {
public:
    UnitQuaternion() = default;

    /// Normalizes and canonicalizes; throws InvalidArgument for a zero vector.
    static UnitQuaternion from_components(double w, double x, double y, double z) {
        const double n = std::sqrt(w * w + x * x + y * y + z * z);
        if (!std::isfinite(n) || n < 1e-300) {
            throw InvalidArgument("UnitQuaternion: zero or non-finite vector");
        }
        std::array<double, 4> q{w / n, x / n, y / n, z / n};
        canonicalize(q);
        return UnitQuaternion(q);
    }

    static UnitQuaternion from_axis_angle(const Vector3& axis, double angle) {
        const Vector3 u = axis.normalized();
        const double s = std::sin(0.5 * angle);
        return from_components(std::cos(0.5 * angle), s * u.x(), s * u.y(), s * u.z());
    }

    double w() const noexcept { return q_[0]; }
    double x() const noexcept { return q_[1]; }
    double y() const noexcept { return q_[2]; }
    double z() const noexcept { return q_[3]; }

    const std::array<double, 4>& components() const noexcept { return q_; }
    Eigen::Vector4d vector() const { return {q_[0], q_[1], q_[2], q_[3]}; }

    Matrix3 rotation() const {
        const double w = q_[0], x = q_[1], y = q_[2], z = q_[3];
        Matrix3 r;
        r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
             2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
             2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
        return r;
    }

    friend bool operator==(const UnitQuaternion&, const UnitQuaternion&) = default;

private:
    explicit UnitQuaternion(const std::array<double, 4>& q) : q_(q) {}

    static void canonicalize(std::array<double, 4>& q) {
        bool flip = false;
        if (q[0] != 0.0) {
            flip = q[0] < 0.0;
        } else {
            for (int i = 1; i < 4; ++i) {
                if (q[i] != 0.0) {
                    flip = q[i] < 0.0;
                    break;
                }
            }
        }
        if (flip) {
            for (double& v : q) v = -v;
        }
        // -0.0 and 0.0 compare equal but print differently; normalize.
        for (double& v : q) {
            if (v == 0.0) v = 0.0;
        }
    }

    std::array<double, 4> q_{1.0, 0.0, 0.0, 0.0};
};

inline std::ostream& operator<<(std::ostream& os, const UnitQuaternion& q) {
    return os << "UnitQuaternion(" << q.w() << ", " << q.x() << ", " << q.y() << ", " << q.z()
              << ")";
}

inline Matrix3 quaternion_to_rotation(const UnitQuaternion& q) { return q.rotation(); }

inline bool is_rotation(const Matrix3& r, double tol = kRotationTolerance) {
    if (!r.allFinite()) return false;
    const double ortho = (r.transpose() * r - Matrix3::Identity()).norm();
    return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// Shepperd's method: picks the numerically largest of w, x, y, z as pivot.
inline UnitQuaternion rotation_to_quaternion(const Matrix3& r) {
    if (!is_rotation(r)) throw NotARotation("rotation_to_quaternion: matrix is not a proper rotation");
    const double tr = r.trace();
    double w, x, y, z;
    if (tr >= r(0, 0) && tr >= r(1, 1) && tr >= r(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + tr);
        w = 0.25 * s;
        x = (r(2, 1) - r(1, 2)) / s;
        y = (r(0, 2) - r(2, 0)) / s;
        z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) >= r(1, 1) && r(0, 0) >= r(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
        w = (r(2, 1) - r(1, 2)) / s;
        x = 0.25 * s;
        y = (r(0, 1) + r(1, 0)) / s;
        z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) >= r(2, 2)) {
        const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
        w = (r(0, 2) - r(2, 0)) / s;
        x = (r(0, 1) + r(1, 0)) / s;
        y = 0.25 * s;
        z = (r(1, 2) + r(2, 1)) / s;
    } else {
        const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
        w = (r(1, 0) - r(0, 1)) / s;
        x = (r(0, 2) + r(2, 0)) / s;
        y = (r(1, 2) + r(2, 1)) / s;
        z = 0.25 * s;
    }
    return UnitQuaternion::from_components(w, x, y, z);
}

/// Eigenvalues in descending order, the matching proper-rotation eigenframe
/// (columns are eigenvectors) and its canonical quaternion.
struct SpectralDecomposition {
    std::array<double, 3> eigenvalues;
    Matrix3 rotation;
    UnitQuaternion quaternion;

    Matrix3 reconstruct() const {
        const Vector3 l(eigenvalues[0], eigenvalues[1], eigenvalues[2]);
        return rotation * l.asDiagonal() * rotation.transpose();
    }
};

/// Deterministic ordered decomposition. Each eigenvector is signed so that its
/// largest-magnitude entry is positive; if the resulting frame is improper the
/// third eigenvector is negated.
inline SpectralDecomposition spectral_decompose(const SpdTensor& t) {
    Eigen::SelfAdjointEigenSolver<Matrix3> solver(t.matrix());
    const Vector3& ev = solver.eigenvalues();
    const Matrix3& vecs = solver.eigenvectors();

    SpectralDecomposition d;
    for (int k = 0; k < 3; ++k) {
        d.eigenvalues[k] = ev(2 - k);
        Vector3 col = vecs.col(2 - k);
        int pivot = 0;
        for (int i = 1; i < 3; ++i) {
            if (std::abs(col(i)) > std::abs(col(pivot))) pivot = i;
        }
        if (col(pivot) < 0.0) col = -col;
        d.rotation.col(k) = col;
    }
    if (d.rotation.determinant() < 0.0) d.rotation.col(2) = -d.rotation.col(2);
    d.quaternion = rotation_to_quaternion(d.rotation);
    return d;
}

/// Matrix logarithm R * diag(log L) * R^T.
inline Matrix3 log_spd(const SpdTensor& t) {
    Eigen::SelfAdjointEigenSolver<Matrix3> solver(t.matrix());
    const Vector3 l = solver.eigenvalues().array().log().matrix();
    const Matrix3& v = solver.eigenvectors();
    return detail::symmetrize(v * l.asDiagonal() * v.transpose());
}

/// Matrix exponential of a symmetric matrix (symmetrized first).
inline SpdTensor exp_sym(const Matrix3& m) {
    if (!m.allFinite()) throw NonFiniteInput("exp_sym: non-finite input");
    Eigen::SelfAdjointEigenSolver<Matrix3> solver(detail::symmetrize(m));
    const Vector3 l = solver.eigenvalues().array().exp().matrix();
    const Matrix3& v = solver.eigenvectors();
    return SpdTensor::from_matrix(v * l.asDiagonal() * v.transpose());
}

/// Fractional anisotropy from already ordered eigenvalues.
inline double fractional_anisotropy(const std::array<double, 3>& l) {
    const double mean = (l[0] + l[1] + l[2]) / 3.0;
    const double dev = (l[0] - mean) * (l[0] - mean) + (l[1] - mean) * (l[1] - mean) +
                       (l[2] - mean) * (l[2] - mean);
    const double norm = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
    return std::clamp(std::sqrt(1.5 * dev / norm), 0.0, 1.0);
}

inline double fractional_anisotropy(const SpdTensor& t) {
    const Vector3 ev = detail::eigenvalues_of(t.matrix());
    return fractional_anisotropy(std::array<double, 3>{ev(2), ev(1), ev(0)});
}

}  // namespace spdperm
