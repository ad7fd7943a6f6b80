#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpose/geom.hpp"
#include "kpose/rng.hpp"

namespace kpose {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IndexOutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadCount : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IsolatedVertex : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct Infeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Face = std::array<int, 3>;

struct TriMesh {
    std::vector<Vec3> V;
    std::vector<Face> F;
    std::vector<std::vector<int>> adjacency;  // sorted, unique, symmetric

    TriMesh() = default;

    TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
        : V(std::move(vertices)), F(std::move(faces)) {
        const int n = static_cast<int>(V.size());
        for (size_t f = 0; f < F.size(); ++f) {
            const auto& [a, b, c] = F[f];
            if (a < 0 || a >= n || b < 0 || b >= n || c < 0 || c >= n)
                throw IndexOutOfRange("face " + std::to_string(f) + " references a missing vertex");
            if (a == b || b == c || a == c)
                throw IndexOutOfRange("face " + std::to_string(f) + " repeats a vertex");
        }
        adjacency.assign(V.size(), {});
        for (const auto& [a, b, c] : F) {
            adjacency[a].push_back(b);
            adjacency[a].push_back(c);
            adjacency[b].push_back(a);
            adjacency[b].push_back(c);
            adjacency[c].push_back(a);
            adjacency[c].push_back(b);
        }
        for (auto& nbrs : adjacency) {
            std::sort(nbrs.begin(), nbrs.end());
            nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
        }
    }

    Vec3 face_centroid(int f) const {
        const auto& [a, b, c] = F[f];
        return (V[a] + V[b] + V[c]) / 3.0;
    }
};

struct Deformation {
    std::vector<Vec3> dv;
};

struct KeypointSet {
    std::vector<int> indices;

    std::vector<Vec3> positions(const TriMesh& mesh) const {
        std::vector<Vec3> out;
        out.reserve(indices.size());
        for (int i : indices) {
            if (i < 0 || i >= static_cast<int>(mesh.V.size()))
                throw IndexOutOfRange("keypoint index " + std::to_string(i));
            out.push_back(mesh.V[i]);
        }
        return out;
    }
};

using Rgb = std::array<double, 3>;

inline double color_dist(const Rgb& a, const Rgb& b) {
    const double dr = a[0] - b[0], dg = a[1] - b[1], db = a[2] - b[2];
    return std::sqrt(dr * dr + dg * dg + db * db);
}

struct ColorMap {
    std::vector<Rgb> colors;
    double epsilon = 0.05;

    bool separation_holds() const {
        for (size_t i = 0; i < colors.size(); ++i)
            for (size_t j = i + 1; j < colors.size(); ++j)
                if (color_dist(colors[i], colors[j]) <= 2.0 * epsilon) return false;
        return true;
    }
};

/// Wavefront OBJ subset: `v x y z` and `f i j k` (1-based). Other line types
/// are skipped; their count lands in *ignored_lines when provided.
inline TriMesh load_obj(const std::string& path, int* ignored_lines = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);

    std::vector<Vec3> verts;
    std::vector<Face> faces;
    int ignored = 0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;  // blank
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex");
            verts.push_back(v);
        } else if (tag == "f") {
            long a, b, c;
            if (!(ls >> a >> b >> c))
                throw ParseError(path + ":" + std::to_string(lineno) + ": malformed face");
            long extra;
            if (ls >> extra)
                throw ParseError(path + ":" + std::to_string(lineno) + ": non-triangular face");
            const long n = static_cast<long>(verts.size());
            for (long idx : {a, b, c})
                if (idx < 1 || idx > n)
                    throw IndexOutOfRange(path + ":" + std::to_string(lineno) +
                                          ": face index " + std::to_string(idx) +
                                          " out of range (1-based)");
            faces.push_back({static_cast<int>(a - 1), static_cast<int>(b - 1),
                             static_cast<int>(c - 1)});
        } else if (tag[0] == '#') {
            continue;
        } else {
            ++ignored;
        }
    }
    if (ignored_lines) *ignored_lines = ignored;
    return TriMesh(std::move(verts), std::move(faces));
}

inline void save_obj(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    char buf[128];
    for (const Vec3& v : mesh.V) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& [a, b, c] : mesh.F)
        out << "f " << a + 1 << " " << b + 1 << " " << c + 1 << "\n";
    if (!out) throw ParseError("write failed for " + path);
}

/// Greedy farthest-point sampling over Euclidean vertex distance. The first
/// vertex is drawn uniformly from the seed; later picks maximize the distance
/// to the chosen set, ties broken by lowest index.
inline KeypointSet farthest_point_sampling(const TriMesh& mesh, int n, std::uint64_t seed) {
    const int nv = static_cast<int>(mesh.V.size());
    if (n < 3 || n > nv)
        throw BadCount("keypoint count " + std::to_string(n) + " outside [3, " +
                       std::to_string(nv) + "]");
    Rng g(seed);
    std::vector<int> chosen;
    chosen.reserve(n);
    chosen.push_back(static_cast<int>(uniform_index(g, static_cast<std::uint64_t>(nv))));

    std::vector<double> min_d(nv, std::numeric_limits<double>::infinity());
    for (int pick = 1; pick < n; ++pick) {
        const Vec3& last = mesh.V[chosen.back()];
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < nv; ++i) {
            min_d[i] = std::min(min_d[i], (mesh.V[i] - last).norm());
            if (min_d[i] > best_d) {
                best_d = min_d[i];
                best = i;
            }
        }
        chosen.push_back(best);
    }
    return KeypointSet{std::move(chosen)};
}

/// Mean over vertices of the squared distance to the neighbor centroid.
inline double laplacian_loss(const TriMesh& mesh) {
    if (mesh.V.empty()) return 0.0;
    double total = 0.0;
    for (size_t i = 0; i < mesh.V.size(); ++i) {
        const auto& nbrs = mesh.adjacency[i];
        if (nbrs.empty()) throw IsolatedVertex("vertex " + std::to_string(i) + " has no neighbors");
        Vec3 centroid{0, 0, 0};
        for (int j : nbrs) centroid += mesh.V[j];
        centroid = centroid / static_cast<double>(nbrs.size());
        total += (mesh.V[i] - centroid).squared_norm();
    }
    return total / static_cast<double>(mesh.V.size());
}

/// Mean over vertices of the per-vertex displacement norm.
inline double deformation_loss(const Deformation& d) {
    if (d.dv.empty()) return 0.0;
    double total = 0.0;
    for (const Vec3& v : d.dv) total += v.norm();
    return total / static_cast<double>(d.dv.size());
}

/// N colors pairwise more than 2*epsilon apart, picked by farthest-point
/// sampling over an 8x8x8 RGB lattice. Pure black is excluded: renderers
/// reserve (0,0,0) as the background sentinel.
inline ColorMap make_color_map(int n, double epsilon, std::uint64_t seed) {
    if (n < 1) throw BadCount("color count must be >= 1");
    constexpr int kGrid = 8;
    std::vector<Rgb> lattice;
    lattice.reserve(kGrid * kGrid * kGrid - 1);
    for (int r = 0; r < kGrid; ++r)
        for (int gc = 0; gc < kGrid; ++gc)
            for (int b = 0; b < kGrid; ++b)
                if (r + gc + b > 0)
                    lattice.push_back({r / double(kGrid - 1), gc / double(kGrid - 1),
                                       b / double(kGrid - 1)});
    if (n > static_cast<int>(lattice.size()))
        throw Infeasible("lattice has only " + std::to_string(lattice.size()) + " colors");

    Rng g(seed);
    std::vector<Rgb> picked;
    picked.push_back(lattice[uniform_index(g, lattice.size())]);
    std::vector<double> min_d(lattice.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(picked.size()) < n) {
        size_t best = 0;
        double best_d = -1.0;
        for (size_t i = 0; i < lattice.size(); ++i) {
            min_d[i] = std::min(min_d[i], color_dist(lattice[i], picked.back()));
            if (min_d[i] > best_d) {
                best_d = min_d[i];
                best = i;
            }
        }
        if (best_d <= 2.0 * epsilon)
            throw Infeasible("cannot place " + std::to_string(n) + " colors more than " +
                             std::to_string(2.0 * epsilon) + " apart");
        picked.push_back(lattice[best]);
    }
    ColorMap cmap{std::move(picked), epsilon};
    if (!cmap.separation_holds())
        throw Infeasible("constructed map violates the separation bound");
    return cmap;
}

/// Per-face keypoint ids: each face takes the keypoint nearest its centroid,
/// ties to the lowest id.
inline std::vector<int> face_labels(const TriMesh& mesh, const KeypointSet& kp) {
    const std::vector<Vec3> kpos = kp.positions(mesh);
    std::vector<int> labels(mesh.F.size(), 0);
    for (size_t f = 0; f < mesh.F.size(); ++f) {
        const Vec3 c = mesh.face_centroid(static_cast<int>(f));
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < kpos.size(); ++k) {
            const double d = (kpos[k] - c).squared_norm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(k);
            }
        }
        labels[f] = best;
    }
    return labels;
}

}  // namespace kpose
