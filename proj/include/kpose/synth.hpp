#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "kpose/camera.hpp"
#include "kpose/geom.hpp"
#include "kpose/heatmap.hpp"
#include "kpose/json_io.hpp"
#include "kpose/mesh.hpp"
#include "kpose/pnp.hpp"
#include "kpose/raster.hpp"
#include "kpose/rng.hpp"

namespace kpose {

enum class ShapeKind { icosphere, ellipsoid, bird_blob };

namespace detail {

inline TriMesh icosahedron() {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& p : v) p = p.normalized();
    std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                           {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                           {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                           {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return TriMesh(std::move(v), std::move(f));
}

/// One midpoint-subdivision level; new vertices are re-projected to the unit
/// sphere, shared edges reuse the same midpoint vertex.
inline TriMesh subdivide_unit_sphere(const TriMesh& mesh) {
    std::vector<Vec3> v = mesh.V;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
        const int idx = static_cast<int>(v.size());
        v.push_back(((mesh.V[a] + mesh.V[b]) * 0.5).normalized());
        midpoint.emplace(key, idx);
        return idx;
    };
    std::vector<Face> f;
    f.reserve(mesh.F.size() * 4);
    for (const auto& [a, b, c] : mesh.F) {
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        f.push_back({a, ab, ca});
        f.push_back({b, bc, ab});
        f.push_back({c, ca, bc});
        f.push_back({ab, bc, ca});
    }
    return TriMesh(std::move(v), std::move(f));
}

inline TriMesh unit_icosphere(int subdivisions) {
    TriMesh m = icosahedron();
    for (int i = 0; i < subdivisions; ++i) m = subdivide_unit_sphere(m);
    return m;
}

}  // namespace detail

/// Closed genus-0 shapes centered at the origin with max radius exactly 1.
/// bird_blob adds head/tail bumps plus one off-plane bump so no rotation or
/// mirror symmetry survives; pose recovery needs that asymmetry.
inline TriMesh make_shape(ShapeKind kind, int subdivisions) {
    if (subdivisions < 0 || subdivisions > 5)
        throw std::invalid_argument("subdivisions outside [0, 5]");
    TriMesh m = detail::unit_icosphere(subdivisions);
    if (kind == ShapeKind::icosphere) return m;

    const Vec3 axes = (kind == ShapeKind::ellipsoid) ? Vec3{1.0, 0.4, 0.4} : Vec3{1.0, 0.45, 0.45};
    if (kind == ShapeKind::bird_blob) {
        struct Bump {
            Vec3 dir;
            double amp, width;
        };
        const Bump bumps[] = {
            {Vec3{1.0, -0.35, 0.0}.normalized(), 0.45, 0.08},
            {Vec3{-1.0, 0.15, 0.0}.normalized(), 0.35, 0.06},
            {Vec3{0.0, 0.5, 0.8}.normalized(), 0.25, 0.12},
        };
        for (Vec3& p : m.V) {
            double grow = 1.0;
            for (const Bump& b : bumps) grow += b.amp * std::exp((p.dot(b.dir) - 1.0) / b.width);
            p = p * grow;
        }
    }
    double max_r = 0.0;
    for (Vec3& p : m.V) {
        p = Vec3{p.x * axes.x, p.y * axes.y, p.z * axes.z};
        max_r = std::max(max_r, p.norm());
    }
    for (Vec3& p : m.V) p = p / max_r;
    return m;
}

/// Smooth seeded pose sequence: steady azimuth sweep with gentle elevation,
/// roll, scale, and translation oscillation. Consecutive poses stay within
/// 5 degrees geodesic.
inline std::vector<CameraPose> make_trajectory(int n_frames, std::uint64_t seed) {
    if (n_frames < 1) throw BadCount("trajectory needs at least one frame");
    Rng g(seed);
    const double az0 = uniform(g, 0.0, 2.0 * kPi);
    const double el0 = uniform(g, deg_to_rad(-25.0), deg_to_rad(25.0));
    const double phase_el = uniform(g, 0.0, 2.0 * kPi);
    const double phase_cy = uniform(g, 0.0, 2.0 * kPi);
    const double daz = deg_to_rad(2.5);
    const double period = std::max(n_frames, 16);

    std::vector<CameraPose> poses;
    poses.reserve(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        const double w = 2.0 * kPi * k / period;
        CameraPose p;
        p.R = rotation_from_euler(az0 + k * daz,
                                  el0 + deg_to_rad(4.0) * std::sin(w + phase_el),
                                  deg_to_rad(3.0) * std::sin(w + phase_cy));
        p.s = 0.65 + 0.05 * std::sin(w * 0.5 + phase_el);
        p.t = Vec2{0.05 * std::sin(w + phase_cy), 0.05 * std::cos(w + phase_el)};
        poses.push_back(p);
    }
    return poses;
}

/// A fully synthetic ground-truth bundle: mesh + keypoints + per-frame truth.
/// Stands in for a dataset plus a trained predictor in end-to-end tests.
struct Scenario {
    TriMesh mesh;
    KeypointSet keypoints;
    ColorMap cmap;
    std::vector<int> labels;  // per-face nearest-keypoint id
    std::vector<CameraPose> true_poses;
    std::vector<Mask> masks;
    std::vector<HeatmapStack> heatmaps;
};

/// Deterministic scenario assembly. Sub-seeds are fixed offsets of `seed`, so
/// any one field can be regenerated independently without replaying the rest.
inline Scenario build_scenario(ShapeKind kind, int n_kp, int n_frames, double noise_std,
                               double outlier_rate, std::uint64_t seed,
                               int resolution = 256, int subdivisions = 3,
                               const HeatmapSpec& spec = {}) {
    Scenario sc;
    sc.mesh = make_shape(kind, subdivisions);
    sc.keypoints = farthest_point_sampling(sc.mesh, n_kp, seed);
    sc.cmap = make_color_map(n_kp, 0.05, seed + 1);
    sc.labels = face_labels(sc.mesh, sc.keypoints);
    sc.true_poses = make_trajectory(n_frames, seed + 2);
    sc.masks.reserve(n_frames);
    sc.heatmaps.reserve(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        sc.masks.push_back(
            render_silhouette(sc.mesh, sc.true_poses[k], resolution, resolution));
        sc.heatmaps.push_back(synthetic_predictor(sc.true_poses[k], sc.keypoints, sc.mesh,
                                                  noise_std, outlier_rate,
                                                  seed + 1000 + std::uint64_t(k), spec));
    }
    return sc;
}

namespace detail {

inline std::string frame_stem(const std::string& dir, int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", k);
    return dir + "/frames/" + buf;
}

}  // namespace detail

/// Directory layout: mesh.obj, keypoints.json, cmap.json, poses.json, and
/// frames/%04d_mask.pgm + frames/%04d_hm.kph, one pair per frame.
inline void save_scenario(const std::string& dir, const Scenario& sc) {
    std::error_code ec;
    std::filesystem::create_directories(dir + "/frames", ec);
    if (ec) throw ParseError("cannot create " + dir + "/frames: " + ec.message());
    save_obj(sc.mesh, dir + "/mesh.obj");
    save_keypoints(dir + "/keypoints.json", sc.keypoints);
    save_color_map(dir + "/cmap.json", sc.cmap);
    save_poses(dir + "/poses.json", sc.true_poses);
    for (size_t k = 0; k < sc.masks.size(); ++k) {
        const std::string stem = detail::frame_stem(dir, int(k));
        save_pgm(sc.masks[k], stem + "_mask.pgm");
        save_kph(sc.heatmaps[k], stem + "_hm.kph");
    }
}

/// Pipeline glue between a predicted heatmap stack and the pose solver:
/// decode every channel, then keep keypoints whose score clears the floor.
inline Correspondences build_frame_correspondences(const TriMesh& mesh,
                                                   const KeypointSet& kp,
                                                   const HeatmapStack& hm,
                                                   double score_floor = 0.1) {
    const auto [points, scores] = decode_keypoints(hm);
    const std::vector<Vec3> xyz = kp.positions(mesh);
    if (points.size() != xyz.size())
        throw ShapeMismatch("heatmap channel count differs from keypoint count");
    Correspondences c;
    for (size_t i = 0; i < points.size(); ++i) {
        if (scores[i] <= score_floor) continue;
        c.X.push_back(xyz[i]);
        c.U.push_back(points[i]);
        c.scores.push_back(scores[i]);
    }
    return c;
}

/// Rebuilds a Scenario from disk. Face labels are derived, not stored.
/// poses.json is optional (external scenarios may lack ground truth); frames
/// are required and must be contiguous from 0000.
inline Scenario load_scenario(const std::string& dir) {
    Scenario sc;
    sc.mesh = load_obj(dir + "/mesh.obj");
    sc.keypoints = load_keypoints(dir + "/keypoints.json");
    sc.cmap = load_color_map(dir + "/cmap.json");
    sc.labels = face_labels(sc.mesh, sc.keypoints);
    if (std::filesystem::exists(dir + "/poses.json"))
        sc.true_poses = load_poses(dir + "/poses.json");
    for (int k = 0;; ++k) {
        const std::string stem = detail::frame_stem(dir, k);
        if (!std::filesystem::exists(stem + "_hm.kph")) break;
        sc.masks.push_back(load_pgm(stem + "_mask.pgm"));
        sc.heatmaps.push_back(load_kph(stem + "_hm.kph"));
    }
    if (sc.heatmaps.empty()) throw ParseError("no frames found under " + dir + "/frames");
    return sc;
}

}  // namespace kpose
