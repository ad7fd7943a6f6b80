#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace kpose {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double c) const { return {x * c, y * c}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

inline Vec2 operator*(double c, const Vec2& v) { return v * c; }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double c) const { return {x * c, y * c, z * c}; }
    Vec3 operator/(double c) const { return {x / c, y / c, z / c}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double squared_norm() const { return dot(*this); }
    Vec3 normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
        return *this / n;
    }
};

inline Vec3 operator*(double c, const Vec3& v) { return v * c; }

/// 3x3 matrix, row-major storage.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    Mat3() = default;
    explicit Mat3(const std::array<double, 9>& a) : m(a) {}

    static Mat3 identity() { return Mat3{}; }
    static Mat3 zero() { return Mat3{{0, 0, 0, 0, 0, 0, 0, 0, 0}}; }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        return Mat3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }
    static Mat3 from_cols(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
        return Mat3{{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
    }

    double operator()(int r, int c) const { return m[static_cast<size_t>(r) * 3 + static_cast<size_t>(c)]; }
    double& operator()(int r, int c) { return m[static_cast<size_t>(r) * 3 + static_cast<size_t>(c)]; }

    Vec3 row(int r) const { return {(*this)(r, 0), (*this)(r, 1), (*this)(r, 2)}; }
    Vec3 col(int c) const { return {(*this)(0, c), (*this)(1, c), (*this)(2, c)}; }

    Mat3 transposed() const {
        return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r = Mat3::zero();
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) {
                const double a = (*this)(i, k);
                for (int j = 0; j < 3; ++j) r(i, j) += a * o(k, j);
            }
        return r;
    }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator+(const Mat3& o) const {
        Mat3 r;
        for (size_t i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
        return r;
    }

    Mat3 operator-(const Mat3& o) const {
        Mat3 r;
        for (size_t i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
        return r;
    }

    Mat3 operator*(double c) const {
        Mat3 r;
        for (size_t i = 0; i < 9; ++i) r.m[i] = m[i] * c;
        return r;
    }

    double trace() const { return m[0] + m[4] + m[8]; }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    /// Max absolute entry, used for infinity-norm style checks.
    double max_abs() const {
        double v = 0.0;
        for (double e : m) v = std::max(v, std::abs(e));
        return v;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (double e : m) s += e * e;
        return std::sqrt(s);
    }
};

inline Mat3 operator*(double c, const Mat3& a) { return a * c; }

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

}  // namespace kpose
