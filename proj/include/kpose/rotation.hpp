#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kpose/geom.hpp"

namespace kpose {

// Rotation representations and the maps between them. A rotation matrix is a
// plain Mat3 satisfying R^T R = I, det R = +1; the predicates below check
// that. Quaternions are kept unit-norm and canonicalized to the w >= 0
// hemisphere so round trips are deterministic.

using RotMatrix = Mat3;

struct NotARotation : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RankDeficient : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Quaternion() = default;
    Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::invalid_argument("zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Quaternion operator-() const { return {-w, -x, -y, -z}; }

    double dot(const Quaternion& o) const {
        return w * o.w + x * o.x + y * o.y + z * o.z;
    }

    /// Hemisphere canonicalization: w >= 0, ties broken by the first nonzero
    /// of (x, y, z) being positive.
    Quaternion canonical() const {
        if (w > 0.0) return *this;
        if (w < 0.0) return -*this;
        if (x != 0.0) return x > 0.0 ? *this : -*this;
        if (y != 0.0) return y > 0.0 ? *this : -*this;
        if (z != 0.0) return z > 0.0 ? *this : -*this;
        return *this;
    }

    static Quaternion from_axis_angle(const Vec3& axis, double angle) {
        const Vec3 a = axis.normalized();
        const double h = 0.5 * angle;
        const double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }
};

/// Two 3-vectors whose orthonormalization spans the first two rotation columns.
struct Sixd {
    Vec3 a1;
    Vec3 a2;
};

/// An unconstrained 3x3 matrix to be projected onto SO(3).
using Nined = Mat3;

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
    const Mat3 gram = r.transposed() * r;
    return (gram - Mat3::identity()).max_abs() < tol && std::abs(r.det() - 1.0) < tol;
}

inline RotMatrix quat_to_matrix(const Quaternion& q_in) {
    const Quaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    return Mat3{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                 2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                 2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

/// Shepperd's method: pick the branch with the largest pivot for stability.
inline Quaternion matrix_to_quat(const RotMatrix& r) {
    const Mat3 gram = r.transposed() * r;
    if ((gram - Mat3::identity()).max_abs() > 1e-4 || r.det() < 0.0)
        throw NotARotation("matrix is not orthonormal with det +1");

    const double t = r.trace();
    double w, x, y, z;
    if (t > 0.0) {
        double s = std::sqrt(t + 1.0) * 2.0;
        w = 0.25 * s;
        x = (r(2, 1) - r(1, 2)) / s;
        y = (r(0, 2) - r(2, 0)) / s;
        z = (r(1, 0) - r(0, 1)) / s;
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        w = (r(2, 1) - r(1, 2)) / s;
        x = 0.25 * s;
        y = (r(0, 1) + r(1, 0)) / s;
        z = (r(0, 2) + r(2, 0)) / s;
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        w = (r(0, 2) - r(2, 0)) / s;
        x = (r(0, 1) + r(1, 0)) / s;
        y = 0.25 * s;
        z = (r(1, 2) + r(2, 1)) / s;
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        w = (r(1, 0) - r(0, 1)) / s;
        x = (r(0, 2) + r(2, 0)) / s;
        y = (r(1, 2) + r(2, 1)) / s;
        z = 0.25 * s;
    }
    return Quaternion{w, x, y, z}.normalized().canonical();
}

inline RotMatrix gram_schmidt_6d(const Sixd& a) {
    const double n1 = a.a1.norm();
    if (n1 <= 1e-9) throw DegenerateInput("first 6d vector has near-zero norm");
    const Vec3 c0 = a.a1 / n1;
    const Vec3 residual = a.a2 - c0 * a.a2.dot(c0);
    const double n2 = residual.norm();
    if (n2 <= 1e-9) throw DegenerateInput("second 6d vector is near-parallel to the first");
    const Vec3 c1 = residual / n2;
    return Mat3::from_cols(c0, c1, c0.cross(c1));
}

/// Nearest special-orthogonal matrix in Frobenius norm:
/// M = U S V^T  ->  U diag(1, 1, det(U V^T)) V^T.
inline RotMatrix svd_orthogonalize(const Nined& m) {
    Eigen::Matrix3d em;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) em(i, j) = m(i, j);

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(1) < 1e-12)
        throw RankDeficient("rank < 2: nearest rotation is not unique");

    Eigen::Matrix3d u = svd.matrixU();
    Eigen::Matrix3d v = svd.matrixV();
    const double d = (u * v.transpose()).determinant();
    Eigen::Matrix3d r = u * Eigen::Vector3d(1.0, 1.0, d).asDiagonal() * v.transpose();

    Mat3 out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out(i, j) = r(i, j);
    return out;
}

/// Angle of Ra^T Rb, the geodesic distance on SO(3), in [0, pi].
inline double geodesic_angle(const RotMatrix& ra, const RotMatrix& rb) {
    const double t = (ra.transposed() * rb).trace();
    return std::acos(std::clamp((t - 1.0) * 0.5, -1.0, 1.0));
}

/// min(|qp - qr|, |qp + qr|): Euclidean 4-distance respecting the double cover.
inline double quat_loss_double_cover(const Quaternion& qp_in, const Quaternion& qr_in) {
    const Quaternion qp = qp_in.normalized();
    const Quaternion qr = qr_in.normalized();
    const auto dist = [](const Quaternion& a, const Quaternion& b) {
        const double dw = a.w - b.w, dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
        return std::sqrt(dw * dw + dx * dx + dy * dy + dz * dz);
    };
    return std::min(dist(qp, qr), dist(qp, -qr));
}

inline Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}

inline Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

inline Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

/// Convention: R = Rz(cyclo) * Rx(elevation) * Ry(azimuth).
inline RotMatrix rotation_from_euler(double azimuth, double elevation, double cyclo) {
    return rot_z(cyclo) * rot_x(elevation) * rot_y(azimuth);
}

/// Inverse of rotation_from_euler. At the |elevation| = pi/2 gimbal lock the
/// split between azimuth and cyclo is arbitrary; cyclo is set to 0 there.
inline void euler_from_rotation(const RotMatrix& r, double& azimuth, double& elevation,
                                double& cyclo) {
    const double se = std::clamp(r(2, 1), -1.0, 1.0);
    elevation = std::asin(se);
    if (std::abs(se) < 1.0 - 1e-12) {
        azimuth = std::atan2(-r(2, 0), r(2, 2));
        cyclo = std::atan2(-r(0, 1), r(1, 1));
    } else {
        cyclo = 0.0;
        azimuth = std::atan2(r(0, 2), r(0, 0));
    }
}

}  // namespace kpose
