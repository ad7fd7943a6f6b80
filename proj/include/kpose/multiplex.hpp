#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "kpose/camera.hpp"
#include "kpose/mesh.hpp"
#include "kpose/metrics.hpp"
#include "kpose/raster.hpp"
#include "kpose/rotation.hpp"

namespace kpose {

struct EmptyTarget : std::runtime_error {
    EmptyTarget() : std::runtime_error("target silhouette is empty") {}
};

/// Initial simplex displacement per parameter group of the 6-vector
/// (s, t_x, t_y, azimuth, elevation, cyclo). Angles are in radians.
struct SimplexSteps {
    double scale = 0.1;
    double shift = 0.1;
    double angle = 0.4;
};

struct MultiplexConfig {
    int n_az = 8;
    int n_el = 5;
    int prune_to = 4;
    int opt_budget = 300;
    SimplexSteps steps;
    double sigma = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_az < 1 || n_el < 1) throw std::invalid_argument("grid must be non-empty");
        if (prune_to < 1 || prune_to > n_az * n_el)
            throw std::invalid_argument("prune_to must lie in [1, n_az*n_el]");
        if (opt_budget < 1) throw std::invalid_argument("opt_budget must be >= 1");
        if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    }
};

namespace detail {

using Params6 = std::array<double, 6>;  // s, tx, ty, az, el, cy

inline CameraPose params_to_pose(const Params6& p) {
    CameraPose pose;
    pose.s = p[0];
    pose.t = Vec2{p[1], p[2]};
    pose.R = rotation_from_euler(p[3], p[4], p[5]);
    return pose;
}

inline Params6 pose_to_params(const CameraPose& pose) {
    double az, el, cy;
    euler_from_rotation(pose.R, az, el, cy);
    return {pose.s, pose.t.x, pose.t.y, az, el, cy};
}

/// Deterministic Nelder-Mead on 6 parameters. Every objective call counts
/// against the budget and updates the best-ever record, so the returned value
/// never exceeds the value at `start`.
template <typename F>
std::pair<Params6, double> nelder_mead6(F&& f, const Params6& start,
                                        const SimplexSteps& steps, int budget) {
    constexpr int kDim = 6;
    const double step_of[kDim] = {steps.scale, steps.shift, steps.shift,
                                  steps.angle, steps.angle, steps.angle};

    int evals = 0;
    Params6 best_x = start;
    double best_f = std::numeric_limits<double>::infinity();
    const auto eval = [&](const Params6& x) {
        const double v = f(x);
        ++evals;
        if (v < best_f) {
            best_f = v;
            best_x = x;
        }
        return v;
    };
    const auto exhausted = [&] { return evals >= budget; };

    std::array<Params6, kDim + 1> xs;
    std::array<double, kDim + 1> fs;
    std::array<int, kDim + 1> order;
    const auto sort_simplex = [&] {
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return fs[a] < fs[b]; });
    };

    // The rasterized objective is piecewise constant, so a simplex routinely
    // collapses inside one quantization cell with budget to spare. Restart
    // around the incumbent with progressively smaller steps until the budget
    // is spent; every restart is a deterministic function of the best point.
    double step_scale = 1.0;
    while (!exhausted()) {
        const Params6 origin = evals == 0 ? start : best_x;
        xs[0] = origin;
        fs[0] = eval(xs[0]);
        for (int i = 0; i < kDim && !exhausted(); ++i) {
            xs[i + 1] = origin;
            xs[i + 1][i] += step_scale * step_of[i];
            fs[i + 1] = eval(xs[i + 1]);
        }
        std::iota(order.begin(), order.end(), 0);

        while (!exhausted()) {
            sort_simplex();
            const int lo = order[0], hi = order[kDim], second_hi = order[kDim - 1];
            if (fs[hi] - fs[lo] < 1e-14) break;

            Params6 centroid{};
            for (int i = 0; i <= kDim; ++i)
                if (i != hi)
                    for (int d = 0; d < kDim; ++d) centroid[d] += xs[i][d] / kDim;

            const auto along = [&](double coef) {
                Params6 x;
                for (int d = 0; d < kDim; ++d)
                    x[d] = centroid[d] + coef * (xs[hi][d] - centroid[d]);
                return x;
            };

            const Params6 xr = along(-1.0);
            const double fr = eval(xr);
            if (exhausted()) break;

            if (fr < fs[lo]) {
                const Params6 xe = along(-2.0);
                const double fe = eval(xe);
                if (fe < fr) {
                    xs[hi] = xe;
                    fs[hi] = fe;
                } else {
                    xs[hi] = xr;
                    fs[hi] = fr;
                }
            } else if (fr < fs[second_hi]) {
                xs[hi] = xr;
                fs[hi] = fr;
            } else {
                const bool outside = fr < fs[hi];
                const Params6 xc = along(outside ? -0.5 : 0.5);
                const double fc = eval(xc);
                if (exhausted()) break;
                if (fc < (outside ? fr : fs[hi])) {
                    xs[hi] = xc;
                    fs[hi] = fc;
                } else {
                    // Shrink toward the best vertex.
                    for (int i = 1; i <= kDim && !exhausted(); ++i) {
                        const int k = order[i];
                        for (int d = 0; d < kDim; ++d)
                            xs[k][d] = xs[lo][d] + 0.5 * (xs[k][d] - xs[lo][d]);
                        fs[k] = eval(xs[k]);
                    }
                }
            }
        }

        step_scale = std::max(0.125, step_scale * 0.5);
    }
    return {best_x, best_f};
}

}  // namespace detail

/// Fits one camera to a target silhouette by derivative-free local search
/// over (s, t_x, t_y, azimuth, elevation, cyclo), minimizing the silhouette
/// mask loss at the target's own resolution. Deterministic; the returned loss
/// never exceeds the loss of `init`.
inline std::pair<CameraPose, double> optimize_camera(const CameraPose& init,
                                                     const Mask& target,
                                                     const TriMesh& mesh,
                                                     int budget = 300,
                                                     const SimplexSteps& steps = {}) {
    if (target.count() == 0) throw EmptyTarget();
    if (budget < 1) throw std::invalid_argument("budget must be >= 1");
    const DistanceField dt = distance_transform(target);

    const auto objective = [&](const detail::Params6& p) {
        // Nonpositive scale renders nothing; slope the penalty so the simplex
        // is pushed back rather than stranded on a plateau.
        if (p[0] < 1e-4) return 1e6 * (1.0 + (1e-4 - p[0]));
        const Mask rendered =
            render_silhouette(mesh, detail::params_to_pose(p), target.width, target.height);
        return mask_loss(target, rendered, dt);
    };

    const auto [best_p, best_f] =
        detail::nelder_mead6(objective, detail::pose_to_params(init), steps, budget);
    return {detail::params_to_pose(best_p), best_f};
}

struct MultiplexRun {
    std::vector<CameraPose> poses;   // sorted by loss ascending
    std::vector<double> losses;      // same order
    std::vector<double> weights;     // softmax over losses, descending
};

/// Full multiplex pass: seed a grid of cameras, refine each against the
/// target independently, keep the best prune_to by loss. Camera fits are
/// independent work units; the merge is a deterministic (loss, index) sort,
/// so threading cannot change the result.
inline MultiplexRun run_multiplex(const TriMesh& mesh, const Mask& target,
                                  const MultiplexConfig& cfg = {}) {
    cfg.validate();
    if (target.count() == 0) throw EmptyTarget();

    const std::vector<CameraPose> inits = multiplex_init(cfg.n_az, cfg.n_el, cfg.seed);
    const int n = int(inits.size());
    std::vector<std::pair<CameraPose, double>> fitted(n);

    const auto fit_range = [&](int begin, int stride) {
        for (int i = begin; i < n; i += stride)
            fitted[i] = optimize_camera(inits[i], target, mesh, cfg.opt_budget, cfg.steps);
    };
    const int workers =
        std::max(1, std::min<int>(n, int(std::thread::hardware_concurrency())));
    if (workers == 1) {
        fit_range(0, 1);
    } else {
        std::vector<std::future<void>> tasks;
        for (int w = 0; w < workers; ++w)
            tasks.push_back(std::async(std::launch::async, fit_range, w, workers));
        for (auto& t : tasks) t.get();
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return fitted[a].second < fitted[b].second;
    });

    MultiplexRun out;
    for (int k = 0; k < cfg.prune_to; ++k) {
        out.poses.push_back(fitted[order[k]].first);
        out.losses.push_back(fitted[order[k]].second);
    }
    out.weights = multiplex_weights(out.losses, cfg.sigma);
    return out;
}

}  // namespace kpose
