#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kpose/camera.hpp"
#include "kpose/geom.hpp"
#include "kpose/rng.hpp"
#include "kpose/rotation.hpp"

namespace kpose {

struct Degenerate : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NoConsensus : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Correspondences {
    std::vector<Vec3> X;       // model-space keypoints
    std::vector<Vec2> U;       // observed normalized image points
    std::vector<double> scores;  // confidences in [0, 1]; empty = all 1

    size_t size() const { return X.size(); }

    void validate() const {
        if (U.size() != X.size()) throw std::invalid_argument("X/U length mismatch");
        if (!scores.empty() && scores.size() != X.size())
            throw std::invalid_argument("scores length mismatch");
    }
};

struct RansacParams {
    double inlier_threshold = 0.03;  // normalized reprojection distance
    int max_iterations = 200;
    double confidence = 0.999;
    int min_sample = 4;  // 3 points are always coplanar, so 4 is the floor
    std::uint64_t seed = 0;

    void validate() const {
        if (!(inlier_threshold > 0.0)) throw std::invalid_argument("threshold must be > 0");
        if (!(confidence > 0.0 && confidence < 1.0))
            throw std::invalid_argument("confidence outside (0, 1)");
        if (min_sample < 4) throw std::invalid_argument("min_sample must be >= 4");
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
    }
};

struct PnpResult {
    CameraPose pose;
    bool planar_ambiguity = false;
    // The depth-reflected twin, present only for (near-)planar point sets.
    std::optional<CameraPose> alternate;
};

struct RansacResult {
    CameraPose pose;
    std::vector<bool> inliers;  // evaluated against the refined pose
    bool planar_ambiguity = false;
    int iterations_run = 0;
};

namespace detail {

struct CenteredLsq {
    Vec3 x_mean;
    Vec2 u_mean;
    Eigen::Matrix3d S;   // weighted scatter of centered X
    Eigen::Matrix<double, 2, 3> B;  // weighted cross-covariance U x X
};

inline CenteredLsq center_and_accumulate(const Correspondences& c,
                                         const std::vector<double>& w) {
    double wsum = 0.0;
    Vec3 xm{0, 0, 0};
    Vec2 um{0, 0};
    for (size_t i = 0; i < c.size(); ++i) {
        wsum += w[i];
        xm += c.X[i] * w[i];
        um = um + c.U[i] * w[i];
    }
    if (!(wsum > 0.0)) throw std::invalid_argument("total weight must be positive");
    xm = xm / wsum;
    um = um * (1.0 / wsum);

    CenteredLsq out;
    out.x_mean = xm;
    out.u_mean = um;
    out.S.setZero();
    out.B.setZero();
    for (size_t i = 0; i < c.size(); ++i) {
        const Vec3 xc = c.X[i] - xm;
        const Vec2 uc = c.U[i] - um;
        const Eigen::Vector3d ex(xc.x, xc.y, xc.z);
        const Eigen::Vector2d eu(uc.x, uc.y);
        out.S += w[i] * ex * ex.transpose();
        out.B += w[i] * eu * ex.transpose();
    }
    return out;
}

inline CameraPose assemble_pose(const Vec3& r1, const Vec3& r2, double s, const Vec3& x_mean,
                                const Vec2& u_mean) {
    CameraPose pose;
    pose.s = s;
    pose.R = Mat3::from_rows(r1, r2, r1.cross(r2));
    const Vec3 rx = pose.R * x_mean;
    pose.t = Vec2{u_mean.x - s * rx.x, u_mean.y - s * rx.y};
    return pose;
}

}  // namespace detail

/// Weighted least squares for the scaled-orthographic camera: center both
/// point sets, fit the unconstrained 2x3 map A = B S^-1, then factor A into
/// scale times two orthonormal rows. Coplanar points admit two depth-mirrored
/// factorizations; both are returned with the ambiguity flagged.
inline PnpResult solve_orthographic_pnp(const Correspondences& c,
                                        const std::vector<double>& weights = {}) {
    c.validate();
    if (c.size() < 3) throw std::invalid_argument("need at least 3 correspondences");
    std::vector<double> w = weights;
    if (w.empty()) w.assign(c.size(), 1.0);
    if (w.size() != c.size()) throw std::invalid_argument("weights length mismatch");

    const auto acc = detail::center_and_accumulate(c, w);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(acc.S);
    const Eigen::Vector3d lam = eig.eigenvalues();  // ascending
    if (!(lam(2) > 0.0) || lam(1) < 1e-10 * lam(2))
        throw Degenerate("3D points are collinear or coincident");

    PnpResult result;
    if (lam(0) >= 1e-6 * lam(2)) {
        // Full-rank scatter: A is unique and so is its factorization.
        const Eigen::Matrix<double, 2, 3> A = acc.B * acc.S.inverse();
        Eigen::JacobiSVD<Eigen::Matrix<double, 2, 3>> svd(
            A, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double s = 0.5 * (svd.singularValues()(0) + svd.singularValues()(1));
        if (!(s > 0.0)) throw Degenerate("projection collapses to a point");
        const Eigen::Matrix<double, 2, 3> R12 =
            svd.matrixU() * svd.matrixV().leftCols<2>().transpose();
        const Vec3 r1{R12(0, 0), R12(0, 1), R12(0, 2)};
        const Vec3 r2{R12(1, 0), R12(1, 1), R12(1, 2)};
        result.pose = detail::assemble_pose(r1, r2, s, acc.x_mean, acc.u_mean);
        return result;
    }

    // Planar branch: solve in the plane spanned by the two dominant principal
    // directions, then reconstruct the out-of-plane row components. e1/e2 span
    // the plane, n is its normal; keep the basis right-handed.
    Vec3 e1{eig.eigenvectors()(0, 2), eig.eigenvectors()(1, 2), eig.eigenvectors()(2, 2)};
    Vec3 e2{eig.eigenvectors()(0, 1), eig.eigenvectors()(1, 1), eig.eigenvectors()(2, 1)};
    Vec3 n = e1.cross(e2);

    Eigen::Matrix2d S2 = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d B2 = Eigen::Matrix2d::Zero();
    for (size_t i = 0; i < c.size(); ++i) {
        const Vec3 xc = c.X[i] - acc.x_mean;
        const Eigen::Vector2d xi(xc.dot(e1), xc.dot(e2));
        const Eigen::Vector2d uc(c.U[i].x - acc.u_mean.x, c.U[i].y - acc.u_mean.y);
        S2 += w[i] * xi * xi.transpose();
        B2 += w[i] * uc * xi.transpose();
    }
    const Eigen::Matrix2d G = B2 * S2.inverse();

    // Rows of s*R restricted to the plane are known: u = s*(r1.e1, r1.e2),
    // v = s*(r2.e1, r2.e2). The normal components a = s*r1.n, b = s*r2.n obey
    // a^2 - b^2 = |v|^2 - |u|^2 and a*b = -u.v.
    const Eigen::Vector2d u(G(0, 0), G(0, 1));
    const Eigen::Vector2d v(G(1, 0), G(1, 1));
    const double d = v.squaredNorm() - u.squaredNorm();
    const double cc = -u.dot(v);
    const double g1 = std::sqrt(std::max(0.0, (d + std::sqrt(d * d + 4.0 * cc * cc)) * 0.5));
    const double g2 = g1 > 1e-12 ? cc / g1 : std::sqrt(std::max(-d, 0.0));
    const double s = std::sqrt(u.squaredNorm() + g1 * g1);
    if (!(s > 0.0)) throw Degenerate("projection collapses to a point");

    const auto make = [&](double a, double b) {
        const Vec3 r1 = (e1 * u(0) + e2 * u(1) + n * a) / s;
        const Vec3 r2 = (e1 * v(0) + e2 * v(1) + n * b) / s;
        return detail::assemble_pose(r1, r2, s, acc.x_mean, acc.u_mean);
    };
    result.pose = make(g1, g2);
    result.alternate = make(-g1, -g2);
    result.planar_ambiguity = true;
    return result;
}

namespace detail {

inline double reprojection_error(const CameraPose& pose, const Vec3& x, const Vec2& u) {
    const Vec2 p = project(pose, x);
    return std::hypot(p.x - u.x, p.y - u.y);
}

/// Smallest/largest eigenvalue ratio test for a minimal sample's scatter.
inline bool sample_near_coplanar(const Correspondences& c, const std::vector<int>& idx) {
    Vec3 mean{0, 0, 0};
    for (int i : idx) mean += c.X[i];
    mean = mean / double(idx.size());
    Eigen::Matrix3d S = Eigen::Matrix3d::Zero();
    for (int i : idx) {
        const Vec3 d = c.X[i] - mean;
        const Eigen::Vector3d e(d.x, d.y, d.z);
        S += e * e.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(S);
    const Eigen::Vector3d lam = eig.eigenvalues();
    return !(lam(2) > 0.0) || lam(0) < 1e-3 * lam(2);
}

}  // namespace detail

/// Classic hypothesize-and-verify loop over seeded minimal samples. Hypotheses
/// are ranked by (inlier count desc, inlier residual asc, iteration asc), the
/// winner is re-solved on its inliers weighted by the correspondence scores,
/// and the reported inlier flags come from that refined pose. RNG draws are
/// consumed for every iteration, including rejected samples, so a fixed seed
/// fixes the whole schedule.
inline RansacResult ransac_pnp(const Correspondences& c, const RansacParams& params) {
    c.validate();
    params.validate();
    const int n = static_cast<int>(c.size());
    if (n < params.min_sample)
        throw std::invalid_argument("fewer correspondences than the minimal sample size");

    Rng g(params.seed);
    std::vector<int> idx(n);
    std::vector<int> sample(params.min_sample);

    int best_count = -1;
    double best_residual = std::numeric_limits<double>::infinity();
    CameraPose best_pose;
    int needed = params.max_iterations;
    int it = 0;
    for (; it < params.max_iterations && it < needed; ++it) {
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int k = 0; k < params.min_sample; ++k) {
            const int j = k + int(uniform_index(g, std::uint64_t(n - k)));
            std::swap(idx[k], idx[j]);
            sample[k] = idx[k];
        }
        if (detail::sample_near_coplanar(c, sample)) continue;

        Correspondences minimal;
        for (int i : sample) {
            minimal.X.push_back(c.X[i]);
            minimal.U.push_back(c.U[i]);
        }
        CameraPose hypo;
        try {
            hypo = solve_orthographic_pnp(minimal).pose;
        } catch (const Degenerate&) {
            continue;
        }

        int count = 0;
        double residual = 0.0;
        for (int i = 0; i < n; ++i) {
            const double e = detail::reprojection_error(hypo, c.X[i], c.U[i]);
            if (e < params.inlier_threshold) {
                ++count;
                residual += e;
            }
        }
        if (count > best_count || (count == best_count && residual < best_residual)) {
            best_count = count;
            best_residual = residual;
            best_pose = hypo;
        }
        // Adaptive schedule from the current inlier ratio.
        if (best_count > 0) {
            const double w_in = double(best_count) / double(n);
            const double p_good = std::pow(w_in, params.min_sample);
            if (p_good >= 1.0) {
                needed = it + 1;
            } else if (p_good > 0.0) {
                const double want = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
                needed = int(std::min<double>(params.max_iterations, std::ceil(want)));
            }
        }
    }

    if (best_count < params.min_sample + 1)
        throw NoConsensus("best consensus has " + std::to_string(std::max(best_count, 0)) +
                          " inliers");

    // Refine on the winning consensus set, weighting by decoder scores.
    Correspondences inlier_set;
    std::vector<double> weights;
    for (int i = 0; i < n; ++i) {
        if (detail::reprojection_error(best_pose, c.X[i], c.U[i]) < params.inlier_threshold) {
            inlier_set.X.push_back(c.X[i]);
            inlier_set.U.push_back(c.U[i]);
            weights.push_back(c.scores.empty() ? 1.0 : c.scores[i]);
        }
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (!(wsum > 0.0)) weights.assign(weights.size(), 1.0);  // all-zero scores: fall back

    RansacResult out;
    out.iterations_run = it;
    PnpResult refined;
    try {
        refined = solve_orthographic_pnp(inlier_set, weights);
    } catch (const Degenerate&) {
        refined.pose = best_pose;  // consensus degenerated; keep the sample pose
    }
    out.pose = refined.pose;
    out.planar_ambiguity = refined.planar_ambiguity;
    if (refined.alternate) {
        // Disambiguate the planar twin by total residual over the consensus.
        double r_main = 0.0, r_alt = 0.0;
        for (size_t i = 0; i < inlier_set.size(); ++i) {
            r_main += detail::reprojection_error(refined.pose, inlier_set.X[i], inlier_set.U[i]);
            r_alt +=
                detail::reprojection_error(*refined.alternate, inlier_set.X[i], inlier_set.U[i]);
        }
        if (r_alt < r_main) out.pose = *refined.alternate;
    }

    out.inliers.assign(n, false);
    for (int i = 0; i < n; ++i)
        out.inliers[i] =
            detail::reprojection_error(out.pose, c.X[i], c.U[i]) < params.inlier_threshold;
    return out;
}

}  // namespace kpose
