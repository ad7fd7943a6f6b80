#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kpose/metrics.hpp"
#include "kpose/multiplex.hpp"
#include "kpose/synth.hpp"

namespace {

// Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 property failure.
constexpr int kOk = 0;
constexpr int kIoError = 1;
constexpr int kUsage = 2;
constexpr int kPropertyFailure = 3;

struct GlobalOpts {
    std::uint64_t seed = 0;
    int resolution = 256;
    std::string out_dir = ".";
    bool json = false;
    bool quiet = false;
};

/// Human-readable text. With --json, standard output carries exactly one JSON
/// document, so prose is diverted to standard error.
std::ostream& human(const GlobalOpts& g) { return g.json ? std::cerr : std::cout; }

void emit_json(const GlobalOpts& g, const nlohmann::json& doc) {
    if (g.json) std::cout << doc.dump(2) << '\n';
}

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

kpose::ShapeKind parse_shape(const std::string& name) {
    if (name == "icosphere") return kpose::ShapeKind::icosphere;
    if (name == "ellipsoid") return kpose::ShapeKind::ellipsoid;
    if (name == "bird_blob") return kpose::ShapeKind::bird_blob;
    throw CLI::ValidationError("--shape", "unknown shape: " + name);
}

nlohmann::json pose_with_stats(const kpose::CameraPose& pose) {
    return kpose::pose_to_json(pose);
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    if (v.size() % 2 == 1) return v[mid];
    const double hi = v[mid];
    std::nth_element(v.begin(), v.begin() + mid - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const GlobalOpts& g, const std::string& shape, int kp, int frames,
              double noise, double outliers, int subdivisions) {
    const kpose::Scenario sc =
        kpose::build_scenario(parse_shape(shape), kp, frames, noise, outliers, g.seed,
                              g.resolution, subdivisions);
    kpose::save_scenario(g.out_dir, sc);
    if (!g.quiet)
        human(g) << "wrote scenario: " << g.out_dir << " (" << sc.mesh.V.size()
                 << " vertices, " << frames << " frames, " << kp << " keypoints)\n";
    emit_json(g, {{"out_dir", g.out_dir},
                  {"shape", shape},
                  {"frames", frames},
                  {"keypoints", kp},
                  {"vertices", sc.mesh.V.size()},
                  {"faces", sc.mesh.F.size()},
                  {"resolution", g.resolution}});
    return kOk;
}

// ---------------------------------------------------------------------------
// pose

int pose_from_correspondences(const GlobalOpts& g, const std::string& corr_file,
                              const kpose::RansacParams& params) {
    const kpose::Correspondences corr = kpose::load_correspondences(corr_file);
    const kpose::RansacResult r = kpose::ransac_pnp(corr, params);
    const long inliers = std::count(r.inliers.begin(), r.inliers.end(), true);
    if (!g.quiet)
        human(g) << "pose from " << corr.size() << " correspondences: " << inliers
                 << " inliers, " << r.iterations_run << " iterations\n";
    nlohmann::json doc = pose_with_stats(r.pose);
    doc["inliers"] = inliers;
    doc["iterations"] = r.iterations_run;
    doc["planar_ambiguity"] = r.planar_ambiguity;
    emit_json(g, doc);
    if (!g.json) {
        kpose::save_poses(g.out_dir + "/pose_pred.json", {r.pose});
        if (!g.quiet) human(g) << "wrote " << g.out_dir << "/pose_pred.json\n";
    }
    return kOk;
}

int cmd_pose(const GlobalOpts& g, const std::string& scenario_dir,
             const std::string& corr_file, double score_floor, double thresh,
             int max_iters) {
    kpose::RansacParams params;
    params.inlier_threshold = thresh;
    params.max_iterations = max_iters;
    params.seed = g.seed;
    params.validate();

    if (!corr_file.empty()) return pose_from_correspondences(g, corr_file, params);

    const kpose::Scenario sc = kpose::load_scenario(scenario_dir);
    const int n = int(sc.heatmaps.size());
    const bool have_truth = int(sc.true_poses.size()) == n;

    std::vector<kpose::CameraPose> predicted(n);
    std::vector<double> errors;
    std::vector<double> ious;
    nlohmann::json per_frame = nlohmann::json::array();
    int no_consensus = 0;

    for (int k = 0; k < n; ++k) {
        const kpose::Correspondences corr = kpose::build_frame_correspondences(
            sc.mesh, sc.keypoints, sc.heatmaps[k], score_floor);
        nlohmann::json row{{"frame", k}, {"keypoints_used", corr.size()}};
        params.seed = g.seed + std::uint64_t(k);
        try {
            const kpose::RansacResult r = kpose::ransac_pnp(corr, params);
            predicted[k] = r.pose;
            row["solved"] = true;
            if (have_truth) {
                const double err =
                    kpose::angular_error_deg(r.pose.R, sc.true_poses[k].R);
                errors.push_back(err);
                row["angular_error_deg"] = err;
            }
            if (k < int(sc.masks.size()) && sc.masks[k].count() > 0) {
                const kpose::Mask re = kpose::render_silhouette(
                    sc.mesh, r.pose, sc.masks[k].width, sc.masks[k].height);
                const double v = kpose::iou(sc.masks[k], re);
                ious.push_back(v);
                row["iou"] = v;
            }
        } catch (const kpose::NoConsensus&) {
            ++no_consensus;
            row["solved"] = false;
            if (!g.quiet)
                human(g) << "warning: frame " << k << ": no consensus\n";
        }
        per_frame.push_back(row);
    }

    kpose::save_poses(scenario_dir + "/poses_pred.json", predicted);
    nlohmann::json doc{{"frames", n},
                       {"no_consensus", no_consensus},
                       {"per_frame", per_frame},
                       {"poses_pred", scenario_dir + "/poses_pred.json"}};
    if (!errors.empty()) doc["median_angular_error_deg"] = median(errors);
    if (!ious.empty()) {
        double mean = 0.0;
        for (double v : ious) mean += v;
        doc["mean_iou"] = mean / double(ious.size());
    }
    if (!g.quiet) {
        human(g) << "solved " << (n - no_consensus) << "/" << n << " frames";
        if (!errors.empty())
            human(g) << ", median angular error " << median(errors) << " deg";
        human(g) << "\n";
        if (no_consensus > 0)
            human(g) << no_consensus << " frame(s) without consensus\n";
    }
    emit_json(g, doc);
    return kOk;
}

// ---------------------------------------------------------------------------
// multiplex

int cmd_multiplex(const GlobalOpts& g, const std::string& mesh_file,
                  const std::string& target_file, kpose::MultiplexConfig cfg,
                  const std::string& render_dir) {
    const kpose::TriMesh mesh = kpose::load_obj(mesh_file);
    const kpose::Mask target = kpose::load_pgm(target_file);
    cfg.seed = g.seed;
    const kpose::MultiplexRun run = kpose::run_multiplex(mesh, target, cfg);

    nlohmann::json arr = nlohmann::json::array();
    for (size_t k = 0; k < run.poses.size(); ++k) {
        nlohmann::json row = pose_with_stats(run.poses[k]);
        row["loss"] = run.losses[k];
        row["weight"] = run.weights[k];
        arr.push_back(row);
    }
    const std::string out_file = g.out_dir + "/multiplex.json";
    {
        std::ofstream out(out_file);
        if (!out) throw kpose::ParseError("cannot open " + out_file + " for writing");
        out << arr.dump(2) << '\n';
    }
    if (!render_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(render_dir, ec);
        if (ec) throw kpose::ParseError("cannot create " + render_dir);
        for (size_t k = 0; k < run.poses.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "/cam%02d.pgm", int(k));
            kpose::save_pgm(kpose::render_silhouette(mesh, run.poses[k], target.width,
                                                     target.height),
                            render_dir + name);
        }
    }
    if (!g.quiet)
        human(g) << "kept " << run.poses.size() << " cameras, best loss "
                 << run.losses.front() << ", wrote " << out_file << "\n";
    emit_json(g, {{"out_file", out_file}, {"cameras", arr}});
    return kOk;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const GlobalOpts& g, const std::string& scenario_dir,
             const std::string& pred_file, double threshold) {
    const kpose::Scenario sc = kpose::load_scenario(scenario_dir);
    const std::string pred_path =
        pred_file.empty() ? scenario_dir + "/poses_pred.json" : pred_file;
    const std::vector<kpose::CameraPose> pred = kpose::load_poses(pred_path);

    if (pred.size() != sc.masks.size() || sc.true_poses.size() != sc.masks.size()) {
        std::cerr << "error: frame counts disagree (pred " << pred.size() << ", masks "
                  << sc.masks.size() << ", poses " << sc.true_poses.size() << ")\n";
        return kIoError;
    }

    std::vector<double> ious, errors;
    for (size_t k = 0; k < pred.size(); ++k) {
        const kpose::Mask re = kpose::render_silhouette(sc.mesh, pred[k],
                                                        sc.masks[k].width,
                                                        sc.masks[k].height);
        ious.push_back(kpose::iou(sc.masks[k], re));
        errors.push_back(kpose::angular_error_deg(pred[k].R, sc.true_poses[k].R));
    }
    const kpose::JaccardReport jr = kpose::jaccard_stats(ious, threshold);
    double mean_err = 0.0;
    for (double e : errors) mean_err += e;
    mean_err /= double(errors.size());

    const std::string csv_path = g.out_dir + "/eval.csv";
    {
        std::ofstream csv(csv_path);
        if (!csv) throw kpose::ParseError("cannot open " + csv_path + " for writing");
        csv << "frame,iou,angular_error_deg\n";
        for (size_t k = 0; k < ious.size(); ++k)
            csv << k << ',' << ious[k] << ',' << errors[k] << '\n';
    }

    const nlohmann::json doc{{"mean_iou", jr.mean},
                             {"angular_error_deg", mean_err},
                             {"jaccard",
                              {{"mean", jr.mean}, {"recall", jr.recall}, {"decay", jr.decay}}}};
    if (!g.quiet)
        human(g) << "mean IoU " << jr.mean << ", mean angular error " << mean_err
                 << " deg, decay " << jr.decay << ", wrote " << csv_path << "\n";
    emit_json(g, doc);
    return kOk;
}

// ---------------------------------------------------------------------------
// bench-rot

// Independent nearest-rotation oracle for the benchmark: Newton iteration on
// the polar factor, X <- (X + X^-T)/2. Deliberately not shared with the
// library's SVD path so the two routes stay independent.
kpose::Mat3 bench_inverse_transpose(const kpose::Mat3& a) {
    // Adjugate over determinant; cofactor rows land transposed directly.
    const double d = a.det();
    kpose::Mat3 r;
    r(0, 0) = (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / d;
    r(0, 1) = (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / d;
    r(0, 2) = (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / d;
    r(1, 0) = (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / d;
    r(1, 1) = (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / d;
    r(1, 2) = (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / d;
    r(2, 0) = (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / d;
    r(2, 1) = (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / d;
    r(2, 2) = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / d;
    return r;
}

kpose::Mat3 bench_polar_rotation(const kpose::Mat3& m) {
    kpose::Mat3 x = m;
    for (int it = 0; it < 100; ++it) {
        const kpose::Mat3 next = (x + bench_inverse_transpose(x)) * 0.5;
        if ((next - x).max_abs() < 1e-15) return next;
        x = next;
    }
    return x;
}

struct SuiteResult {
    std::string name;
    double worst = 0.0;
    double tol = 0.0;
    bool pass() const { return worst < tol; }
};

int cmd_bench_rot(const GlobalOpts& g, int trials, double tol_orth, double tol_oracle,
                  double tol_cover) {
    using namespace kpose;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(g.seed);
    std::vector<SuiteResult> suites;

    {
        SuiteResult s{"orthonormality", 0.0, tol_orth};
        for (int i = 0; i < trials; ++i) {
            const Sixd six{Vec3{normal01(rng), normal01(rng), normal01(rng)},
                           Vec3{normal01(rng), normal01(rng), normal01(rng)}};
            Mat3 m;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) m(r, c) = normal01(rng);
            for (const Mat3& R : {gram_schmidt_6d(six), svd_orthogonalize(m)}) {
                s.worst = std::max(s.worst,
                                   (R.transposed() * R - Mat3::identity()).max_abs());
                s.worst = std::max(s.worst, std::abs(R.det() - 1.0));
            }
        }
        suites.push_back(s);
    }
    {
        SuiteResult s{"nearest-rotation-oracle", 0.0, tol_oracle};
        for (int i = 0; i < trials; ++i) {
            Quaternion q{normal01(rng), normal01(rng), normal01(rng), normal01(rng)};
            while (q.norm() < 1e-6)
                q = Quaternion{normal01(rng), normal01(rng), normal01(rng), normal01(rng)};
            Mat3 noisy = quat_to_matrix(q.normalized());
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) noisy(r, c) += 0.01 * normal01(rng);
            const Mat3 diff = svd_orthogonalize(noisy) - bench_polar_rotation(noisy);
            double fro = 0.0;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) fro += diff(r, c) * diff(r, c);
            s.worst = std::max(s.worst, std::sqrt(fro));
        }
        suites.push_back(s);
    }
    {
        SuiteResult s{"double-cover-continuity", 0.0, tol_cover};
        const double eps = 1e-4;
        for (int i = 0; i < trials; ++i) {
            Quaternion q{normal01(rng), normal01(rng), normal01(rng), normal01(rng)};
            while (q.norm() < 1e-6)
                q = Quaternion{normal01(rng), normal01(rng), normal01(rng), normal01(rng)};
            q = q.normalized();
            Quaternion qe{q.w + eps * normal01(rng), q.x + eps * normal01(rng),
                          q.y + eps * normal01(rng), q.z + eps * normal01(rng)};
            qe = qe.normalized();
            const Quaternion neg{-qe.w, -qe.x, -qe.y, -qe.z};
            s.worst = std::max(s.worst, std::abs(quat_loss_double_cover(q, qe) -
                                                 quat_loss_double_cover(q, neg)));
        }
        suites.push_back(s);
    }

    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    bool all_pass = true;
    nlohmann::json rows = nlohmann::json::array();
    for (const SuiteResult& s : suites) {
        all_pass = all_pass && s.pass();
        if (!g.quiet)
            human(g) << (s.pass() ? "[PASS] " : "[FAIL] ") << s.name << "  worst "
                     << s.worst << "  tol " << s.tol << "\n";
        rows.push_back({{"name", s.name},
                        {"worst", s.worst},
                        {"tol", s.tol},
                        {"pass", s.pass()}});
    }
    if (!g.quiet)
        human(g) << trials << " trials per suite, " << ms << " ms total\n";
    emit_json(g, {{"trials", trials}, {"runtime_ms", ms}, {"suites", rows}});
    return all_pass ? kOk : kPropertyFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Keypoint-driven camera pose toolkit"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Master RNG seed");
    app.add_option("--resolution", g.resolution,
                   "Render resolution, power of two in [64, 1024]")
        ->check([](const std::string& v) -> std::string {
            const int value = std::atoi(v.c_str());
            if (value < 64 || value > 1024 || !power_of_two(value))
                return "must be a power of two in [64, 1024]";
            return {};
        });
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_flag("--json", g.json, "Emit one JSON document on stdout");
    app.add_flag("--quiet", g.quiet, "Suppress human-readable output");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scenario directory");
    std::string shape = "bird_blob";
    int kp = 32, frames = 16, subdivisions = 3;
    double noise = 0.0, outliers = 0.0;
    synth->add_option("--shape", shape, "icosphere | ellipsoid | bird_blob");
    synth->add_option("--kp", kp, "Number of keypoints (>= 3)");
    synth->add_option("--frames", frames, "Number of frames (>= 1)");
    synth->add_option("--noise", noise, "Keypoint noise std, normalized units");
    synth->add_option("--outliers", outliers, "Outlier fraction in [0, 1)");
    synth->add_option("--subdivisions", subdivisions, "Mesh subdivision level [0, 5]");

    // pose
    auto* pose = app.add_subcommand("pose", "Recover per-frame poses from heatmaps");
    std::string scenario_dir, corr_file;
    double score_floor = 0.1, thresh = 0.03;
    int max_iters = 200;
    pose->add_option("dir", scenario_dir, "Scenario directory");
    pose->add_option("--corr", corr_file, "Single correspondences JSON file instead");
    pose->add_option("--score-floor", score_floor, "Minimum keypoint score");
    pose->add_option("--thresh", thresh, "RANSAC inlier threshold");
    pose->add_option("--max-iters", max_iters, "RANSAC iteration cap");

    // multiplex
    auto* mux = app.add_subcommand("multiplex", "Fit a camera multiplex to a silhouette");
    std::string mesh_file, target_file, render_dir;
    kpose::MultiplexConfig cfg;
    mux->add_option("--mesh", mesh_file, "OBJ mesh")->required();
    mux->add_option("--target", target_file, "Target silhouette PGM")->required();
    mux->add_option("--budget", cfg.opt_budget, "Loss evaluations per camera");
    mux->add_option("--prune", cfg.prune_to, "Cameras kept after optimization");
    mux->add_option("--naz", cfg.n_az, "Azimuth grid size");
    mux->add_option("--nel", cfg.n_el, "Elevation grid size");
    mux->add_option("--sigma", cfg.sigma, "Softmax temperature for weights");
    mux->add_option("--render-dir", render_dir, "Write kept-camera silhouettes here");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predicted poses against ground truth");
    std::string eval_dir, pred_file;
    double jac_threshold = 0.5;
    eval->add_option("dir", eval_dir, "Scenario directory")->required();
    eval->add_option("--pred", pred_file, "Predicted poses JSON (default: dir/poses_pred.json)");
    eval->add_option("--threshold", jac_threshold, "Jaccard recall threshold");

    // bench-rot
    auto* bench = app.add_subcommand("bench-rot", "Rotation representation property suites");
    int trials = 10000;
    double tol_orth = 1e-9, tol_oracle = 1e-8, tol_cover = 1e-6;
    bench->add_option("--trials", trials, "Random inputs per suite");
    bench->add_option("--tol-orth", tol_orth, "Orthonormality tolerance");
    bench->add_option("--tol-oracle", tol_oracle, "Oracle agreement tolerance");
    bench->add_option("--tol-cover", tol_cover, "Double-cover continuity tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;  // --help exits 0; every parse error is usage
    }

    try {
        {
            std::error_code ec;
            std::filesystem::create_directories(g.out_dir, ec);
            if (ec) {
                std::cerr << "error: cannot create --out-dir " << g.out_dir << "\n";
                return kIoError;
            }
        }
        if (*synth) {
            if (kp < 3) {
                std::cerr << "error: --kp must be >= 3 (got " << kp << ")\n";
                return kUsage;
            }
            if (frames < 1) {
                std::cerr << "error: --frames must be >= 1\n";
                return kUsage;
            }
            if (noise < 0.0 || outliers < 0.0 || outliers >= 1.0 || subdivisions < 0 ||
                subdivisions > 5) {
                std::cerr << "error: invalid noise/outliers/subdivisions\n";
                return kUsage;
            }
            return cmd_synth(g, shape, kp, frames, noise, outliers, subdivisions);
        }
        if (*pose) {
            if (scenario_dir.empty() && corr_file.empty()) {
                std::cerr << "error: give a scenario directory or --corr FILE\n";
                return kUsage;
            }
            if (thresh <= 0.0 || max_iters < 1 || score_floor < 0.0) {
                std::cerr << "error: invalid --thresh/--max-iters/--score-floor\n";
                return kUsage;
            }
            return cmd_pose(g, scenario_dir, corr_file, score_floor, thresh, max_iters);
        }
        if (*mux) {
            try {
                cfg.validate();
            } catch (const std::invalid_argument& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kUsage;
            }
            return cmd_multiplex(g, mesh_file, target_file, cfg, render_dir);
        }
        if (*eval) {
            if (!(jac_threshold > 0.0 && jac_threshold < 1.0)) {
                std::cerr << "error: --threshold must lie in (0, 1)\n";
                return kUsage;
            }
            return cmd_eval(g, eval_dir, pred_file, jac_threshold);
        }
        if (*bench) {
            if (trials < 1) {
                std::cerr << "error: --trials must be >= 1\n";
                return kUsage;
            }
            if (tol_orth <= 0.0 || tol_oracle <= 0.0 || tol_cover <= 0.0) {
                std::cerr << "error: tolerances must be positive\n";
                return kUsage;
            }
            return cmd_bench_rot(g, trials, tol_orth, tol_oracle, tol_cover);
        }
    } catch (const kpose::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    }
    return kUsage;
}
