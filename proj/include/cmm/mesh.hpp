#pragma once

#include <cmm/errors.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cmm {

using Face = std::array<int, 3>;

/// Smallest triangle area accepted by TriangleMesh, in mesh units squared.
inline constexpr double kMinTriangleArea = 1e-12;

/// Immutable, validated triangle mesh.
///
/// Construction checks index ranges, distinct corners, strictly positive
/// areas and edge-manifoldness (no undirected edge borders more than two
/// faces); any violation raises ValidationError.
class TriangleMesh {
public:
    TriangleMesh(std::vector<Eigen::Vector3d> vertices, std::vector<Face> faces)
        : vertices_(std::move(vertices)), faces_(std::move(faces)) {
        validate();
    }

    int n_vertices() const { return static_cast<int>(vertices_.size()); }
    int n_faces() const { return static_cast<int>(faces_.size()); }

    const std::vector<Eigen::Vector3d>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }

    const Eigen::Vector3d& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }
    const Face& face(int f) const { return faces_[static_cast<std::size_t>(f)]; }

    double face_area(int f) const {
        const Face& t = face(f);
        return 0.5 * (vertex(t[1]) - vertex(t[0])).cross(vertex(t[2]) - vertex(t[0])).norm();
    }

    double total_area() const {
        double sum = 0.0;
        for (int f = 0; f < n_faces(); ++f) sum += face_area(f);
        return sum;
    }

    /// Number of distinct undirected edges.
    int n_edges() const { return static_cast<int>(edge_face_counts().size()); }

    int euler_characteristic() const { return n_vertices() - n_edges() + n_faces(); }

    /// Undirected edges that border exactly one face.
    std::vector<std::pair<int, int>> boundary_edges() const {
        std::vector<std::pair<int, int>> out;
        for (const auto& [e, count] : edge_face_counts())
            if (count == 1) out.push_back(e);
        return out;
    }

private:
    std::map<std::pair<int, int>, int> edge_face_counts() const {
        std::map<std::pair<int, int>, int> counts;
        for (const Face& t : faces_) {
            for (int c = 0; c < 3; ++c) {
                int a = t[c], b = t[(c + 1) % 3];
                ++counts[{std::min(a, b), std::max(a, b)}];
            }
        }
        return counts;
    }

    void validate() const {
        const int n = n_vertices();
        for (std::size_t i = 0; i < vertices_.size(); ++i) {
            if (!vertices_[i].allFinite())
                throw ValidationError("vertex " + std::to_string(i) + " has non-finite coordinates");
        }
        for (int f = 0; f < n_faces(); ++f) {
            const Face& t = face(f);
            for (int idx : t) {
                if (idx < 0 || idx >= n)
                    throw ValidationError("face " + std::to_string(f) + " references vertex " +
                                          std::to_string(idx) + " outside [0, " + std::to_string(n) +
                                          ")");
            }
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                throw ValidationError("face " + std::to_string(f) + " repeats a vertex index");
            if (!(face_area(f) > kMinTriangleArea))
                throw ValidationError("face " + std::to_string(f) + " has zero area");
        }
        for (const auto& [e, count] : edge_face_counts()) {
            if (count > 2)
                throw ValidationError("edge (" + std::to_string(e.first) + ", " +
                                      std::to_string(e.second) + ") borders " +
                                      std::to_string(count) + " faces; mesh is not edge-manifold");
        }
    }

    std::vector<Eigen::Vector3d> vertices_;
    std::vector<Face> faces_;
};

/// Planar L-shaped domain made of the unit squares [0,1]^2, [1,2]x[0,1] and
/// [0,1]x[1,2]. Each square carries an m-by-m grid and every cell is split
/// along its diagonal into two triangles of area 1/(2m^2).
inline TriangleMesh generate_lshape(int m) {
    if (m < 1) throw ConfigError("lshape.m", "must be >= 1");

    // Vertices of the (2m+1)^2 lattice over [0,2]^2 restricted to the L.
    const int side = 2 * m + 1;
    std::vector<int> id(static_cast<std::size_t>(side * side), -1);
    std::vector<Eigen::Vector3d> vertices;
    auto inside = [m](int i, int j) { return i <= m || j <= m; };
    for (int j = 0; j < side; ++j) {
        for (int i = 0; i < side; ++i) {
            if (!inside(i, j)) continue;
            id[static_cast<std::size_t>(j * side + i)] = static_cast<int>(vertices.size());
            vertices.emplace_back(double(i) / m, double(j) / m, 0.0);
        }
    }
    auto at = [&](int i, int j) { return id[static_cast<std::size_t>(j * side + i)]; };

    std::vector<Face> faces;
    for (int j = 0; j < 2 * m; ++j) {
        for (int i = 0; i < 2 * m; ++i) {
            if (i >= m && j >= m) continue; // missing upper-right square
            const int a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

/// Icosahedron subdivided `level` times (each triangle split into four at
/// edge midpoints), with every vertex projected to the unit sphere.
inline TriangleMesh generate_sphere(int level) {
    if (level < 0) throw ConfigError("sphere.level", "must be >= 0");

    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& p : v) p.normalize();
    std::vector<Face> f = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1},
    };

    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            std::pair<int, int> key{std::min(a, b), std::max(a, b)};
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            const int idx = static_cast<int>(v.size());
            v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(f.size() * 4);
        for (const Face& tri : f) {
            const int ab = mid(tri[0], tri[1]), bc = mid(tri[1], tri[2]), ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    return TriangleMesh(std::move(v), std::move(f));
}

} // namespace cmm
