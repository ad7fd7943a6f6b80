#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpose/raster.hpp"
#include "kpose/rotation.hpp"

namespace kpose {

struct EmptyForeground : std::runtime_error {
    EmptyForeground() : std::runtime_error("foreground mask is empty") {}
};

struct WeightMismatch : std::runtime_error {
    explicit WeightMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySequence : std::runtime_error {
    EmptySequence() : std::runtime_error("per-frame sequence is empty") {}
};

/// Weighted recomposition of one optimization step's loss terms. `mask` and
/// `pixel` are already camera-weighted sums; total = mask + pixel + def + lap.
struct LossBreakdown {
    double mask = 0.0;
    double pixel = 0.0;
    double def = 0.0;
    double lap = 0.0;
    double total = 0.0;
};

/// Video-segmentation quality summary over a temporally ordered sequence.
struct JaccardReport {
    double mean = 0.0;
    double recall = 0.0;
    double decay = 0.0;
    std::vector<double> per_frame;
};

/// Silhouette loss: mean squared mask difference plus a one-sided term that
/// charges rendered-on pixels by their distance from the target silhouette.
/// `dt` must be distance_transform(gt); it is zero inside gt, so the second
/// term penalizes only spill-over.
inline double mask_loss(const Mask& gt, const Mask& rendered, const DistanceField& dt) {
    if (gt.width != rendered.width || gt.height != rendered.height ||
        gt.width != dt.width || gt.height != dt.height)
        throw ShapeMismatch("mask_loss: dimensions disagree");
    double sq = 0.0, spill = 0.0;
    for (int i = 0; i < gt.height; ++i) {
        for (int j = 0; j < gt.width; ++j) {
            const double a = gt.at(i, j) ? 1.0 : 0.0;
            const double b = rendered.at(i, j) ? 1.0 : 0.0;
            sq += (a - b) * (a - b);
            spill += dt.at(i, j) * b;
        }
    }
    const double n = double(gt.width) * double(gt.height);
    return sq / n + spill / n;
}

inline double mask_loss(const Mask& gt, const Mask& rendered) {
    return mask_loss(gt, rendered, distance_transform(gt));
}

/// Appearance loss restricted to the true foreground: mean absolute
/// per-channel difference over gt_mask's set pixels.
inline double pixel_loss(const ColorImage& image, const ColorImage& rendered,
                         const Mask& gt_mask) {
    if (image.width != rendered.width || image.height != rendered.height ||
        image.width != gt_mask.width || image.height != gt_mask.height)
        throw ShapeMismatch("pixel_loss: dimensions disagree");
    double sum = 0.0;
    long fg = 0;
    for (int i = 0; i < gt_mask.height; ++i) {
        for (int j = 0; j < gt_mask.width; ++j) {
            if (!gt_mask.at(i, j)) continue;
            ++fg;
            const Rgb& a = image.at(i, j);
            const Rgb& b = rendered.at(i, j);
            for (int ch = 0; ch < 3; ++ch) sum += std::abs(a[ch] - b[ch]);
        }
    }
    if (fg == 0) throw EmptyForeground();
    return sum / (3.0 * double(fg));
}

struct CameraLosses {
    double mask = 0.0;
    double pixel = 0.0;
};

/// Scalarizes the multi-camera objective: sum over cameras of
/// p_k * (mask_k + pixel_k), plus the shared shape regularizers.
inline LossBreakdown total_loss(const std::vector<CameraLosses>& per_camera,
                                const std::vector<double>& p, double def, double lap) {
    if (per_camera.size() != p.size())
        throw WeightMismatch("total_loss: one weight per camera required");
    if (per_camera.empty()) throw WeightMismatch("total_loss: no cameras");
    double wsum = 0.0;
    for (double w : p) wsum += w;
    if (std::abs(wsum - 1.0) > 1e-9)
        throw WeightMismatch("total_loss: camera weights must sum to 1");

    LossBreakdown out;
    out.def = def;
    out.lap = lap;
    for (size_t k = 0; k < p.size(); ++k) {
        out.mask += p[k] * per_camera[k].mask;
        out.pixel += p[k] * per_camera[k].pixel;
        out.total += p[k] * (per_camera[k].mask + per_camera[k].pixel);
    }
    out.total += def + lap;
    return out;
}

inline double angular_error_deg(const Mat3& predicted, const Mat3& reference) {
    return rad_to_deg(geodesic_angle(predicted, reference));
}

/// Temporal quality summary. Recall counts frames strictly above threshold.
/// Decay compares the first and last temporal quartiles (floor(n/4) frames
/// each); sequences shorter than 4 compare the first frame to the last.
inline JaccardReport jaccard_stats(const std::vector<double>& per_frame,
                                   double threshold = 0.5) {
    if (per_frame.empty()) throw EmptySequence();
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("threshold must lie in (0,1)");

    JaccardReport r;
    r.per_frame = per_frame;
    long above = 0;
    for (double v : per_frame) {
        r.mean += v;
        if (v > threshold) ++above;
    }
    const size_t n = per_frame.size();
    r.mean /= double(n);
    r.recall = double(above) / double(n);

    const size_t q = n / 4;
    if (q == 0) {
        r.decay = per_frame.front() - per_frame.back();
    } else {
        double head = 0.0, tail = 0.0;
        for (size_t i = 0; i < q; ++i) {
            head += per_frame[i];
            tail += per_frame[n - q + i];
        }
        r.decay = (head - tail) / double(q);
    }
    return r;
}

}  // namespace kpose
