#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kpose/camera.hpp"
#include "kpose/mesh.hpp"
#include "kpose/pnp.hpp"
#include "kpose/rotation.hpp"

namespace kpose {

/// JSON carries rotations as canonical unit quaternions [w, x, y, z]; the
/// matrix is reconstructed on load, so a round trip cannot denormalize R.
inline nlohmann::json pose_to_json(const CameraPose& pose) {
    const Quaternion q = matrix_to_quat(pose.R);
    return nlohmann::json{{"s", pose.s},
                          {"t", {pose.t.x, pose.t.y}},
                          {"q", {q.w, q.x, q.y, q.z}}};
}

inline CameraPose pose_from_json(const nlohmann::json& j) {
    try {
        CameraPose pose;
        pose.s = j.at("s").get<double>();
        const auto& t = j.at("t");
        const auto& q = j.at("q");
        if (t.size() != 2 || q.size() != 4) throw ParseError("pose: wrong array sizes");
        pose.t = Vec2{t[0].get<double>(), t[1].get<double>()};
        Quaternion quat{q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                        q[3].get<double>()};
        pose.R = quat_to_matrix(quat);
        return pose;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("pose: ") + e.what());
    }
}

namespace detail {

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw ParseError("write failed: " + path);
}

}  // namespace detail

inline void save_poses(const std::string& path, const std::vector<CameraPose>& poses) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CameraPose& p : poses) arr.push_back(pose_to_json(p));
    detail::save_json_file(path, arr);
}

inline std::vector<CameraPose> load_poses(const std::string& path) {
    const nlohmann::json arr = detail::load_json_file(path);
    if (!arr.is_array()) throw ParseError(path + ": expected a pose array");
    std::vector<CameraPose> poses;
    for (const auto& j : arr) poses.push_back(pose_from_json(j));
    return poses;
}

inline void save_keypoints(const std::string& path, const KeypointSet& kp) {
    detail::save_json_file(path, nlohmann::json{{"indices", kp.indices}});
}

inline KeypointSet load_keypoints(const std::string& path) {
    const nlohmann::json j = detail::load_json_file(path);
    try {
        KeypointSet kp;
        kp.indices = j.at("indices").get<std::vector<int>>();
        return kp;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_color_map(const std::string& path, const ColorMap& cmap) {
    nlohmann::json colors = nlohmann::json::array();
    for (const Rgb& c : cmap.colors) colors.push_back({c[0], c[1], c[2]});
    detail::save_json_file(path, {{"epsilon", cmap.epsilon}, {"colors", colors}});
}

inline ColorMap load_color_map(const std::string& path) {
    const nlohmann::json j = detail::load_json_file(path);
    try {
        ColorMap cmap;
        cmap.epsilon = j.at("epsilon").get<double>();
        for (const auto& c : j.at("colors")) {
            if (c.size() != 3) throw ParseError(path + ": color needs 3 components");
            cmap.colors.push_back(Rgb{c[0].get<double>(), c[1].get<double>(),
                                      c[2].get<double>()});
        }
        return cmap;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

inline void save_correspondences(const std::string& path, const Correspondences& c) {
    nlohmann::json x = nlohmann::json::array(), u = nlohmann::json::array();
    for (const Vec3& p : c.X) x.push_back({p.x, p.y, p.z});
    for (const Vec2& p : c.U) u.push_back({p.x, p.y});
    nlohmann::json j{{"X", x}, {"U", u}};
    if (!c.scores.empty()) j["scores"] = c.scores;
    detail::save_json_file(path, j);
}

inline Correspondences load_correspondences(const std::string& path) {
    const nlohmann::json j = detail::load_json_file(path);
    try {
        Correspondences c;
        for (const auto& p : j.at("X")) {
            if (p.size() != 3) throw ParseError(path + ": X entries need 3 components");
            c.X.push_back(Vec3{p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
        }
        for (const auto& p : j.at("U")) {
            if (p.size() != 2) throw ParseError(path + ": U entries need 2 components");
            c.U.push_back(Vec2{p[0].get<double>(), p[1].get<double>()});
        }
        if (j.contains("scores")) c.scores = j["scores"].get<std::vector<double>>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace kpose
