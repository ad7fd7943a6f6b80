#pragma once

// Brute-force rendering and distance-field references. Per-pixel loops over
// every face / every mask pixel: slow, simple, and independent of the
// scanline code under test.

#include <limits>
#include <optional>

#include "kpose/camera.hpp"
#include "kpose/mesh.hpp"
#include "kpose/raster.hpp"
#include "support/oracles.hpp"

namespace kpose::oracle {

/// For one pixel: the face whose interpolated camera-frame z is largest
/// (closest) among all faces covering the pixel center, inclusive boundaries.
inline std::optional<int> nearest_face_at_pixel(const TriMesh& mesh, const CameraPose& pose,
                                                int i, int j, int w, int h) {
    const Vec2 p = pixel_center(i, j, w, h);
    std::optional<int> best;
    double best_z = -std::numeric_limits<double>::infinity();
    for (size_t f = 0; f < mesh.F.size(); ++f) {
        const auto& [ia, ib, ic] = mesh.F[f];
        const Vec3 a3 = pose.R * mesh.V[ia];
        const Vec3 b3 = pose.R * mesh.V[ib];
        const Vec3 c3 = pose.R * mesh.V[ic];
        const Vec2 a{pose.s * a3.x + pose.t.x, pose.s * a3.y + pose.t.y};
        const Vec2 b{pose.s * b3.x + pose.t.x, pose.s * b3.y + pose.t.y};
        const Vec2 c{pose.s * c3.x + pose.t.x, pose.s * c3.y + pose.t.y};
        if (!point_in_triangle(p, a, b, c)) continue;
        const auto cross = [](const Vec2& u, const Vec2& v, const Vec2& q) {
            return (v.x - u.x) * (q.y - u.y) - (v.y - u.y) * (q.x - u.x);
        };
        const double area = cross(a, b, c);
        const double w0 = cross(b, c, p) / area;
        const double w1 = cross(c, a, p) / area;
        const double w2 = cross(a, b, p) / area;
        const double z = w0 * a3.z + w1 * b3.z + w2 * c3.z;
        if (z > best_z) {
            best_z = z;
            best = static_cast<int>(f);
        }
    }
    return best;
}

/// Occlusion test for a vertex: true when no face that excludes the vertex
/// covers its exact projection strictly nearer the camera (larger camera z).
inline bool vertex_visible(const TriMesh& mesh, const CameraPose& pose, int vid,
                           double eps = 1e-9) {
    const Vec3 xc = pose.R * mesh.V[vid];
    const Vec2 u{pose.s * xc.x + pose.t.x, pose.s * xc.y + pose.t.y};
    for (const auto& [ia, ib, ic] : mesh.F) {
        if (ia == vid || ib == vid || ic == vid) continue;
        const Vec3 a3 = pose.R * mesh.V[ia];
        const Vec3 b3 = pose.R * mesh.V[ib];
        const Vec3 c3 = pose.R * mesh.V[ic];
        const Vec2 a{pose.s * a3.x + pose.t.x, pose.s * a3.y + pose.t.y};
        const Vec2 b{pose.s * b3.x + pose.t.x, pose.s * b3.y + pose.t.y};
        const Vec2 c{pose.s * c3.x + pose.t.x, pose.s * c3.y + pose.t.y};
        if (!point_in_triangle(u, a, b, c)) continue;
        const auto cross = [](const Vec2& p, const Vec2& q, const Vec2& r) {
            return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        };
        const double area = cross(a, b, c);
        if (area == 0.0) continue;
        const double w0 = cross(b, c, u) / area;
        const double w1 = cross(c, a, u) / area;
        const double w2 = cross(a, b, u) / area;
        const double z = w0 * a3.z + w1 * b3.z + w2 * c3.z;
        if (z > xc.z + eps) return false;
    }
    return true;
}

/// O(n^2) exact Euclidean distance field; the sentinel convention matches
/// distance_transform.
inline DistanceField brute_distance_field(const Mask& mask) {
    DistanceField field(mask.width, mask.height);
    std::vector<std::pair<int, int>> set_pixels;
    for (int i = 0; i < mask.height; ++i)
        for (int j = 0; j < mask.width; ++j)
            if (mask.at(i, j)) set_pixels.emplace_back(i, j);
    if (set_pixels.empty()) {
        std::fill(field.d.begin(), field.d.end(), double(mask.width) * mask.height);
        return field;
    }
    for (int i = 0; i < mask.height; ++i) {
        for (int j = 0; j < mask.width; ++j) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [si, sj] : set_pixels) {
                const double di = i - si, dj = j - sj;
                best = std::min(best, di * di + dj * dj);
            }
            field.d[size_t(i) * mask.width + j] = std::sqrt(best);
        }
    }
    return field;
}

}  // namespace kpose::oracle
