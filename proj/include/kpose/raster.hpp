#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kpose/camera.hpp"
#include "kpose/geom.hpp"
#include "kpose/mesh.hpp"

namespace kpose {

struct EmptyMesh : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Mask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;  // row-major, 0 or 1

    Mask() = default;
    Mask(int w, int h) : width(w), height(h), bits(size_t(w) * h, 0) {}

    std::uint8_t& at(int i, int j) { return bits[size_t(i) * width + j]; }
    std::uint8_t at(int i, int j) const { return bits[size_t(i) * width + j]; }

    size_t count() const {
        size_t n = 0;
        for (auto b : bits) n += b != 0;
        return n;
    }
};

struct ColorImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;  // row-major; background sentinel (0,0,0)

    ColorImage() = default;
    ColorImage(int w, int h) : width(w), height(h), pixels(size_t(w) * h, Rgb{0, 0, 0}) {}

    Rgb& at(int i, int j) { return pixels[size_t(i) * width + j]; }
    const Rgb& at(int i, int j) const { return pixels[size_t(i) * width + j]; }
};

struct DistanceField {
    int width = 0;
    int height = 0;
    std::vector<double> d;  // pixels

    DistanceField() = default;
    DistanceField(int w, int h) : width(w), height(h), d(size_t(w) * h, 0.0) {}

    double at(int i, int j) const { return d[size_t(i) * width + j]; }
};

namespace detail {

/// Edge function: twice the signed area of (a, b, p). Positive when p is on
/// the left of a->b in the y-down frame's clockwise orientation.
inline double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

/// Top-left fill rule for screen-clockwise triangles in a y-down frame: a
/// boundary pixel belongs to the triangle only on a left edge (running up,
/// dy < 0) or the top edge (horizontal, running right). Exactly one of the
/// two triangles sharing an interior edge claims its pixels.
inline bool edge_accepts(double e, const Vec2& a, const Vec2& b) {
    if (e > 0.0) return true;
    if (e < 0.0) return false;
    const double dy = b.y - a.y;
    const double dx = b.x - a.x;
    return dy < 0.0 || (dy == 0.0 && dx > 0.0);
}

template <typename PerPixel>
inline void rasterize_triangle(const Vec2& p0, const Vec2& p1, const Vec2& p2, int w, int h,
                               PerPixel&& emit) {
    // Orient consistently: make the triangle counterclockwise in pixel space
    // (positive doubled area) so the same fill rule serves both windings.
    Vec2 a = p0, b = p1, c = p2;
    bool swapped = false;
    double area2 = edge(a, b, c);
    if (area2 == 0.0) return;  // degenerate in projection: no interior
    if (area2 < 0.0) {
        std::swap(b, c);
        area2 = -area2;
        swapped = true;
    }

    const double min_x = std::min({a.x, b.x, c.x});
    const double max_x = std::max({a.x, b.x, c.x});
    const double min_y = std::min({a.y, b.y, c.y});
    const double max_y = std::max({a.y, b.y, c.y});
    // Pixel j covers centers x = (2j+1)/w - 1; invert and clamp.
    int j0 = std::max(0, int(std::floor(((min_x + 1.0) * w - 1.0) * 0.5)));
    int j1 = std::min(w - 1, int(std::ceil(((max_x + 1.0) * w - 1.0) * 0.5)));
    int i0 = std::max(0, int(std::floor(((min_y + 1.0) * h - 1.0) * 0.5)));
    int i1 = std::min(h - 1, int(std::ceil(((max_y + 1.0) * h - 1.0) * 0.5)));

    for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) {
            const Vec2 p = pixel_center(i, j, w, h);
            const double e0 = edge(a, b, p);
            const double e1 = edge(b, c, p);
            const double e2 = edge(c, a, p);
            if (!edge_accepts(e0, a, b) || !edge_accepts(e1, b, c) || !edge_accepts(e2, c, a))
                continue;
            // Barycentric weights of (a, b, c); w0 belongs to a, etc.
            double w0 = e1 / area2, w1 = e2 / area2, w2 = e0 / area2;
            if (swapped) std::swap(w1, w2);  // report in caller's (p0,p1,p2) order
            emit(i, j, w0, w1, w2);
        }
    }
}

struct ProjectedMesh {
    std::vector<Vec2> uv;
    std::vector<double> depth;  // depth key: smaller is closer
};

inline ProjectedMesh project_mesh(const TriMesh& mesh, const CameraPose& pose) {
    if (mesh.V.empty() || mesh.F.empty()) throw EmptyMesh("mesh has no geometry");
    ProjectedMesh out;
    out.uv.reserve(mesh.V.size());
    out.depth.reserve(mesh.V.size());
    for (const Vec3& v : mesh.V) {
        const Vec3 xc = pose.R * v;
        out.uv.push_back(Vec2{pose.s * xc.x + pose.t.x, pose.s * xc.y + pose.t.y});
        out.depth.push_back(-xc.z);
    }
    return out;
}

}  // namespace detail

/// Binary coverage of the whole mesh: a pixel is set when its center falls
/// inside any triangle's projection (pixel-center rule, top-left ties).
inline Mask render_silhouette(const TriMesh& mesh, const CameraPose& pose, int w, int h) {
    const auto pm = detail::project_mesh(mesh, pose);
    Mask mask(w, h);
    for (const auto& [a, b, c] : mesh.F) {
        detail::rasterize_triangle(pm.uv[a], pm.uv[b], pm.uv[c], w, h,
                                   [&](int i, int j, double, double, double) { mask.at(i, j) = 1; });
    }
    return mask;
}

/// Z-buffered flat shading by per-face label color. Coverage rule identical
/// to render_silhouette, so foreground support matches it exactly.
inline ColorImage render_labels(const TriMesh& mesh, const CameraPose& pose,
                                const std::vector<int>& labels, const ColorMap& cmap, int w,
                                int h) {
    if (labels.size() != mesh.F.size())
        throw ShapeMismatch("labels do not cover all faces");
    const auto pm = detail::project_mesh(mesh, pose);
    ColorImage img(w, h);
    std::vector<double> zbuf(size_t(w) * h, std::numeric_limits<double>::infinity());
    for (size_t f = 0; f < mesh.F.size(); ++f) {
        const auto& [a, b, c] = mesh.F[f];
        const Rgb color = cmap.colors.at(size_t(labels[f]));
        detail::rasterize_triangle(
            pm.uv[a], pm.uv[b], pm.uv[c], w, h, [&](int i, int j, double w0, double w1, double w2) {
                const double z = w0 * pm.depth[a] + w1 * pm.depth[b] + w2 * pm.depth[c];
                double& zref = zbuf[size_t(i) * w + j];
                if (z < zref) {
                    zref = z;
                    img.at(i, j) = color;
                }
            });
    }
    return img;
}

/// Z-buffered rendering with barycentric interpolation of per-vertex colors.
inline ColorImage render_vertex_colors(const TriMesh& mesh, const CameraPose& pose,
                                       const std::vector<Rgb>& vertex_colors, int w, int h) {
    if (vertex_colors.size() != mesh.V.size())
        throw ShapeMismatch("need one color per vertex");
    const auto pm = detail::project_mesh(mesh, pose);
    ColorImage img(w, h);
    std::vector<double> zbuf(size_t(w) * h, std::numeric_limits<double>::infinity());
    for (const auto& [a, b, c] : mesh.F) {
        detail::rasterize_triangle(
            pm.uv[a], pm.uv[b], pm.uv[c], w, h, [&](int i, int j, double w0, double w1, double w2) {
                const double z = w0 * pm.depth[a] + w1 * pm.depth[b] + w2 * pm.depth[c];
                double& zref = zbuf[size_t(i) * w + j];
                if (z < zref) {
                    zref = z;
                    const Rgb& ca = vertex_colors[a];
                    const Rgb& cb = vertex_colors[b];
                    const Rgb& cc = vertex_colors[c];
                    img.at(i, j) = Rgb{w0 * ca[0] + w1 * cb[0] + w2 * cc[0],
                                       w0 * ca[1] + w1 * cb[1] + w2 * cc[1],
                                       w0 * ca[2] + w1 * cb[2] + w2 * cc[2]};
                }
            });
    }
    return img;
}

/// Exact Euclidean distance transform (Felzenszwalb/Huttenlocher lower
/// envelope of parabolas, per dimension, on squared distances). Distances are
/// in pixels; zero exactly on mask pixels. An all-zero mask yields the
/// sentinel value width*height everywhere.
inline DistanceField distance_transform(const Mask& mask) {
    const int w = mask.width, h = mask.height;
    DistanceField field(w, h);
    constexpr double kInf = 1e20;

    bool any = false;
    for (auto b : mask.bits) any = any || b;
    if (!any) {
        std::fill(field.d.begin(), field.d.end(), double(w) * h);
        return field;
    }

    // 1D squared-distance transform along a strided slice.
    std::vector<double> f(std::max(w, h)), dd(std::max(w, h));
    std::vector<int> vx(std::max(w, h));
    std::vector<double> zx(std::max(w, h) + 1);
    auto dt1d = [&](int n) {
        int k = 0;
        vx[0] = 0;
        zx[0] = -kInf;
        zx[1] = kInf;
        for (int q = 1; q < n; ++q) {
            double s;
            while (true) {
                const int p = vx[k];
                s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
                if (s <= zx[k]) --k;
                else break;
            }
            ++k;
            vx[k] = q;
            zx[k] = s;
            zx[k + 1] = kInf;
        }
        k = 0;
        for (int q = 0; q < n; ++q) {
            while (zx[k + 1] < q) ++k;
            const int p = vx[k];
            dd[q] = double(q - p) * double(q - p) + f[p];
        }
    };

    std::vector<double> sq(size_t(w) * h);
    for (size_t p = 0; p < sq.size(); ++p) sq[p] = mask.bits[p] ? 0.0 : kInf;

    // Columns first, then rows.
    for (int j = 0; j < w; ++j) {
        for (int i = 0; i < h; ++i) f[i] = sq[size_t(i) * w + j];
        dt1d(h);
        for (int i = 0; i < h; ++i) sq[size_t(i) * w + j] = dd[i];
    }
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) f[j] = sq[size_t(i) * w + j];
        dt1d(w);
        for (int j = 0; j < w; ++j) field.d[size_t(i) * w + j] = std::sqrt(dd[j]);
    }
    return field;
}

inline double iou(const Mask& a, const Mask& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeMismatch("mask dimensions differ");
    size_t inter = 0, uni = 0;
    for (size_t p = 0; p < a.bits.size(); ++p) {
        const bool x = a.bits[p] != 0, y = b.bits[p] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// PGM (P5) masks: 0 = background, 255 = foreground. PPM (P6) color images.

inline void save_pgm(const Mask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> row(mask.bits.size());
    for (size_t p = 0; p < mask.bits.size(); ++p) row[p] = mask.bits[p] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    if (!out) throw ParseError("write failed for " + path);
}

inline Mask load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P5" || w < 1 || h < 1 || maxval != 255)
        throw ParseError(path + ": expected binary PGM (P5, maxval 255)");
    in.get();  // single whitespace after header
    Mask mask(w, h);
    std::vector<std::uint8_t> row(size_t(w) * h);
    in.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
    if (!in) throw ParseError(path + ": truncated pixel data");
    for (size_t p = 0; p < row.size(); ++p) mask.bits[p] = row[p] >= 128 ? 1 : 0;
    return mask;
}

inline void save_ppm(const ColorImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open " + path + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> raw;
    raw.reserve(img.pixels.size() * 3);
    for (const Rgb& c : img.pixels)
        for (double ch : c)
            raw.push_back(std::uint8_t(std::lround(std::clamp(ch, 0.0, 1.0) * 255.0)));
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    if (!out) throw ParseError("write failed for " + path);
}

inline ColorImage load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::string magic;
    int w, h, maxval;
    in >> magic >> w >> h >> maxval;
    if (magic != "P6" || w < 1 || h < 1 || maxval != 255)
        throw ParseError(path + ": expected binary PPM (P6, maxval 255)");
    in.get();
    ColorImage img(w, h);
    std::vector<std::uint8_t> raw(size_t(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw ParseError(path + ": truncated pixel data");
    for (size_t p = 0; p < img.pixels.size(); ++p)
        img.pixels[p] = Rgb{raw[3 * p] / 255.0, raw[3 * p + 1] / 255.0, raw[3 * p + 2] / 255.0};
    return img;
}

}  // namespace kpose
