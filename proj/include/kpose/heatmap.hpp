#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kpose/camera.hpp"
#include "kpose/mesh.hpp"
#include "kpose/raster.hpp"
#include "kpose/rng.hpp"

namespace kpose {

struct HeatmapSpec {
    int width = 64;
    int height = 64;
    double sigma = 0.05;  // Gaussian width in normalized image units

    void validate() const {
        if (width < 8 || height < 8) throw std::invalid_argument("heatmap resolution below 8x8");
        if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    }
};

struct HeatmapStack {
    int channels = 0;
    int width = 0;
    int height = 0;
    std::vector<double> data;  // channel-major, row-major within channel

    HeatmapStack() = default;
    HeatmapStack(int n, int w, int h)
        : channels(n), width(w), height(h), data(size_t(n) * w * h, 0.0) {}

    double& at(int ch, int i, int j) {
        return data[(size_t(ch) * height + i) * width + j];
    }
    double at(int ch, int i, int j) const {
        return data[(size_t(ch) * height + i) * width + j];
    }
};

using WeightMask = std::vector<bool>;

/// Channel i is the Gaussian exp(-|p - kp_i|^2 / (2 sigma^2)) evaluated at
/// every pixel center in normalized coordinates. Off-frame keypoints just
/// leave their tail (possibly all ~0) on the grid.
inline HeatmapStack proxy_heatmaps(const std::vector<Vec2>& kp2d, const HeatmapSpec& spec) {
    spec.validate();
    HeatmapStack hm(static_cast<int>(kp2d.size()), spec.width, spec.height);
    const double inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    for (size_t k = 0; k < kp2d.size(); ++k) {
        for (int i = 0; i < spec.height; ++i) {
            for (int j = 0; j < spec.width; ++j) {
                const Vec2 p = pixel_center(i, j, spec.width, spec.height);
                const double dx = p.x - kp2d[k].x, dy = p.y - kp2d[k].y;
                hm.at(int(k), i, j) = std::exp(-(dx * dx + dy * dy) * inv);
            }
        }
    }
    return hm;
}

/// Visibility gate: render the per-face label colors, look up the pixel each
/// keypoint projects into, and accept when the sampled color sits within
/// epsilon of that keypoint's own color. Off-frame projections and background
/// hits are invisible.
inline WeightMask weight_mask(const CameraPose& pose, const KeypointSet& kp, const TriMesh& mesh,
                              const std::vector<int>& labels, const ColorMap& cmap, int w, int h) {
    const ColorImage rendered = render_labels(mesh, pose, labels, cmap, w, h);
    const std::vector<Vec3> kpos = kp.positions(mesh);
    WeightMask out(kpos.size(), false);
    for (size_t k = 0; k < kpos.size(); ++k) {
        const Vec2 u = project(pose, kpos[k]);
        const int j = int(std::floor((u.x + 1.0) * w / 2.0));
        const int i = int(std::floor((u.y + 1.0) * h / 2.0));
        if (i < 0 || i >= h || j < 0 || j >= w) continue;
        const Rgb& sampled = rendered.at(i, j);
        if (sampled == Rgb{0, 0, 0}) continue;  // background sentinel
        out[k] = color_dist(sampled, cmap.colors.at(k)) < cmap.epsilon;
    }
    return out;
}

/// Sum over keypoints of w_i times the per-pixel mean squared difference
/// between proxy and prediction; w_i are the Boolean visibility weights.
inline double keypoint_loss(const HeatmapStack& pred, const HeatmapStack& proxy,
                            const WeightMask& weights) {
    if (pred.channels != proxy.channels || pred.width != proxy.width ||
        pred.height != proxy.height || weights.size() != size_t(pred.channels))
        throw ShapeMismatch("heatmap stacks and weights disagree in shape");
    const size_t per_channel = size_t(pred.width) * pred.height;
    double total = 0.0;
    for (int ch = 0; ch < pred.channels; ++ch) {
        if (!weights[ch]) continue;
        double sum = 0.0;
        const size_t base = size_t(ch) * per_channel;
        for (size_t p = 0; p < per_channel; ++p) {
            const double d = proxy.data[base + p] - pred.data[base + p];
            sum += d * d;
        }
        total += sum / double(per_channel);
    }
    return total;
}

/// Per channel: argmax pixel, then sub-pixel refinement by fitting a parabola
/// to the log of the 3x3 cross values (exact for Gaussian peaks). Scores are
/// the raw channel maxima; an all-zero channel decodes to the frame center
/// with score 0.
inline std::pair<std::vector<Vec2>, std::vector<double>> decode_keypoints(const HeatmapStack& hm) {
    std::vector<Vec2> points(hm.channels, Vec2{0.0, 0.0});
    std::vector<double> scores(hm.channels, 0.0);

    const auto refine = [](double lo, double mid, double hi) {
        constexpr double kFloor = 1e-300;
        const double a = std::log(std::max(lo, kFloor));
        const double b = std::log(std::max(mid, kFloor));
        const double c = std::log(std::max(hi, kFloor));
        const double den = a - 2.0 * b + c;
        if (std::abs(den) < 1e-12) return 0.0;
        return std::clamp(0.5 * (a - c) / den, -0.5, 0.5);
    };

    for (int ch = 0; ch < hm.channels; ++ch) {
        int bi = 0, bj = 0;
        double best = -1.0;
        for (int i = 0; i < hm.height; ++i) {
            for (int j = 0; j < hm.width; ++j) {
                const double v = hm.at(ch, i, j);
                if (v > best) {
                    best = v;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (best <= 0.0) continue;  // all-zero channel: center, score 0
        scores[ch] = best;
        double dx = 0.0, dy = 0.0;
        if (bj > 0 && bj < hm.width - 1)
            dx = refine(hm.at(ch, bi, bj - 1), best, hm.at(ch, bi, bj + 1));
        if (bi > 0 && bi < hm.height - 1)
            dy = refine(hm.at(ch, bi - 1, bj), best, hm.at(ch, bi + 1, bj));
        points[ch] = Vec2{(2.0 * (bj + dx) + 1.0) / hm.width - 1.0,
                          (2.0 * (bi + dy) + 1.0) / hm.height - 1.0};
    }
    return {std::move(points), std::move(scores)};
}

/// Stand-in for a trained keypoint predictor: project the true keypoints,
/// blur each with Gaussian position noise, replace round(outlier_rate * N)
/// channels with uniform frame positions, and emit proxy heatmaps. The RNG
/// draw order (noise, outlier choice, outlier positions) is fixed, so equal
/// seeds give bit-identical stacks.
inline HeatmapStack synthetic_predictor(const CameraPose& pose_true, const KeypointSet& kp,
                                        const TriMesh& mesh, double noise_std,
                                        double outlier_rate, std::uint64_t seed,
                                        const HeatmapSpec& spec = {}) {
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
    if (outlier_rate < 0.0 || outlier_rate >= 1.0)
        throw std::invalid_argument("outlier_rate outside [0, 1)");
    Rng g(seed);
    std::vector<Vec2> pts = project(pose_true, kp.positions(mesh));
    for (Vec2& p : pts) {
        const double nx = normal01(g), ny = normal01(g);
        p.x += noise_std * nx;
        p.y += noise_std * ny;
    }
    const int n = static_cast<int>(pts.size());
    const int n_out = int(std::lround(outlier_rate * n));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = 0; i < n_out; ++i) {  // partial Fisher-Yates picks the outlier set
        const int j = i + int(uniform_index(g, std::uint64_t(n - i)));
        std::swap(order[i], order[j]);
    }
    std::vector<int> outliers(order.begin(), order.begin() + n_out);
    std::sort(outliers.begin(), outliers.end());
    for (int idx : outliers) pts[idx] = Vec2{uniform(g, -1.0, 1.0), uniform(g, -1.0, 1.0)};
    return proxy_heatmaps(pts, spec);
}

// KPH1 container: ASCII header "KPH1 <N> <w> <h>\n", then N*w*h little-endian
// float32 values, channel-major, row-major within each channel.

inline void save_kph(const HeatmapStack& hm, const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "KPH1 writer assumes a little-endian host");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "KPH1 " << hm.channels << " " << hm.width << " " << hm.height << "\n";
    std::vector<float> raw(hm.data.size());
    for (size_t p = 0; p < hm.data.size(); ++p) raw[p] = float(hm.data[p]);
    out.write(reinterpret_cast<const char*>(raw.data()),
              std::streamsize(raw.size() * sizeof(float)));
    if (!out) throw ParseError("write failed for " + path);
}

inline HeatmapStack load_kph(const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "KPH1 reader assumes a little-endian host");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string magic;
    int n, w, h;
    in >> magic >> n >> w >> h;
    if (magic != "KPH1" || n < 0 || w < 1 || h < 1)
        throw ParseError(path + ": bad KPH1 header");
    in.get();  // newline
    HeatmapStack hm(n, w, h);
    std::vector<float> raw(hm.data.size());
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size() * sizeof(float)));
    if (!in) throw ParseError(path + ": truncated heatmap data");
    for (size_t p = 0; p < raw.size(); ++p) {
        if (!(raw[p] >= 0.0f) || raw[p] > 1.0f)
            throw ParseError(path + ": heatmap value outside [0, 1]");
        hm.data[p] = raw[p];
    }
    return hm;
}

}  // namespace kpose
