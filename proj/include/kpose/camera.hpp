#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "kpose/geom.hpp"
#include "kpose/rng.hpp"
#include "kpose/rotation.hpp"

namespace kpose {

// Scaled-orthographic camera. The normalized image frame spans [-1, 1]^2 with
// x right and y down; pixel (i, j) of a WxH raster has center
// x = (2j+1)/W - 1, y = (2i+1)/H - 1.

struct EmptyMultiplex : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CameraPose {
    double s = 1.0;  // scale, > 0
    Vec2 t{0.0, 0.0};
    RotMatrix R = Mat3::identity();
};

inline Vec2 project(const CameraPose& pose, const Vec3& x) {
    const Vec3 xc = pose.R * x;
    return Vec2{pose.s * xc.x + pose.t.x, pose.s * xc.y + pose.t.y};
}

inline std::vector<Vec2> project(const CameraPose& pose, const std::vector<Vec3>& pts) {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const Vec3& x : pts) out.push_back(project(pose, x));
    return out;
}

/// Camera-frame depth key used by the rasterizer: the camera looks down -z,
/// so larger camera-frame z is closer and this key is smaller for nearer points.
inline double depth_key(const CameraPose& pose, const Vec3& x) { return -(pose.R * x).z; }

inline Vec2 pixel_center(int i, int j, int w, int h) {
    return Vec2{(2.0 * j + 1.0) / w - 1.0, (2.0 * i + 1.0) / h - 1.0};
}

/// Continuous pixel coordinates (col, row) of a normalized point; the inverse
/// of pixel_center maps (j, i) -> (x, y) and this maps back.
inline Vec2 norm_to_pixel(const Vec2& p, int w, int h) {
    return Vec2{((p.x + 1.0) * w - 1.0) * 0.5, ((p.y + 1.0) * h - 1.0) * 0.5};
}

/// Grid-plus-jitter initialization: azimuth cells cover [0, 2pi), elevation
/// cells cover [-80, 80] degrees, each sample jittered by up to half a grid
/// step. cyclo = 0, s = 0.7, t = (0, 0).
inline std::vector<CameraPose> multiplex_init(int n_az, int n_el, std::uint64_t seed) {
    if (n_az < 1 || n_el < 1) throw std::invalid_argument("multiplex grid must be at least 1x1");
    Rng g(seed);
    const double az_step = 2.0 * kPi / n_az;
    const double el_lo = deg_to_rad(-80.0), el_hi = deg_to_rad(80.0);
    const double el_step = (el_hi - el_lo) / n_el;

    std::vector<CameraPose> poses;
    poses.reserve(static_cast<size_t>(n_az) * n_el);
    for (int i = 0; i < n_az; ++i) {
        for (int j = 0; j < n_el; ++j) {
            const double az = (i + 0.5) * az_step + uniform(g, -0.5, 0.5) * az_step;
            const double el = el_lo + (j + 0.5) * el_step + uniform(g, -0.5, 0.5) * el_step;
            CameraPose p;
            p.s = 0.7;
            p.t = Vec2{0.0, 0.0};
            p.R = rotation_from_euler(az, el, 0.0);
            poses.push_back(p);
        }
    }
    return poses;
}

/// p_k = exp(-L_k / sigma) / sum_j exp(-L_j / sigma), computed with
/// max-subtraction so large losses cannot overflow.
inline std::vector<double> multiplex_weights(const std::vector<double>& losses, double sigma) {
    if (losses.empty()) throw EmptyMultiplex("multiplex_weights on empty loss list");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    double lo = losses.front();
    for (double l : losses) lo = std::min(lo, l);
    std::vector<double> w(losses.size());
    double total = 0.0;
    for (size_t k = 0; k < losses.size(); ++k) {
        w[k] = std::exp(-(losses[k] - lo) / sigma);
        total += w[k];
    }
    for (double& v : w) v /= total;
    return w;
}

struct Multiplex {
    std::vector<CameraPose> poses;
    std::vector<double> losses;
    double sigma = 0.05;

    std::vector<double> weights() const { return multiplex_weights(losses, sigma); }
};

}  // namespace kpose
