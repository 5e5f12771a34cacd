#pragma once

#include <cmm/errors.hpp>
#include <cmm/mesh.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace cmm {

enum class MeshFormat { off, obj };

namespace detail {

inline bool is_blank_or_comment(const std::string& line) {
    auto pos = line.find_first_not_of(" \t\r");
    return pos == std::string::npos || line[pos] == '#';
}

/// Next line that is neither blank nor a '#' comment.
inline bool next_content_line(std::istream& in, std::string& line, int& line_no) {
    while (std::getline(in, line)) {
        ++line_no;
        if (!is_blank_or_comment(line)) return true;
    }
    return false;
}

inline void fan_split(const std::vector<int>& polygon, std::vector<Face>& out) {
    for (std::size_t i = 1; i + 1 < polygon.size(); ++i) out.push_back({polygon[0], polygon[i], polygon[i + 1]});
}

inline std::string at_line(int line_no) { return " (line " + std::to_string(line_no) + ")"; }

} // namespace detail

/// Parses ASCII OFF. Comment lines starting with '#' and blank lines are
/// skipped; polygons with more than three corners are fan-split.
inline TriangleMesh read_off(std::istream& in) {
    std::string line;
    int line_no = 0;
    if (!detail::next_content_line(in, line, line_no)) throw ParseError("empty OFF input");

    std::istringstream header(line);
    std::string magic;
    header >> magic;
    if (magic != "OFF") throw ParseError("missing OFF header" + detail::at_line(line_no));

    // Counts may follow the magic word on the same line.
    long long n_vertices = -1, n_faces = -1, n_edges = 0;
    if (!(header >> n_vertices >> n_faces)) {
        if (!detail::next_content_line(in, line, line_no)) throw ParseError("missing OFF counts line");
        std::istringstream counts(line);
        if (!(counts >> n_vertices >> n_faces)) throw ParseError("malformed OFF counts" + detail::at_line(line_no));
        counts >> n_edges;
    }
    if (n_vertices < 0 || n_faces < 0) throw ParseError("negative OFF counts");

    std::vector<Eigen::Vector3d> vertices;
    vertices.reserve(static_cast<std::size_t>(n_vertices));
    for (long long i = 0; i < n_vertices; ++i) {
        if (!detail::next_content_line(in, line, line_no))
            throw ParseError("OFF ended after " + std::to_string(i) + " of " + std::to_string(n_vertices) +
                             " vertices");
        std::istringstream s(line);
        double x, y, z;
        if (!(s >> x >> y >> z)) throw ParseError("malformed vertex" + detail::at_line(line_no));
        vertices.emplace_back(x, y, z);
    }

    std::vector<Face> faces;
    for (long long f = 0; f < n_faces; ++f) {
        if (!detail::next_content_line(in, line, line_no))
            throw ParseError("OFF ended after " + std::to_string(f) + " of " + std::to_string(n_faces) + " faces");
        std::istringstream s(line);
        int corners = 0;
        if (!(s >> corners) || corners < 3) throw ParseError("malformed face" + detail::at_line(line_no));
        std::vector<int> polygon(static_cast<std::size_t>(corners));
        for (int& idx : polygon) {
            if (!(s >> idx)) throw ParseError("face has fewer indices than declared" + detail::at_line(line_no));
        }
        detail::fan_split(polygon, faces);
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

/// Parses the `v` and `f` records of a Wavefront OBJ file. Face corners may
/// use the `i/t/n` forms and negative (relative) indices; n-gons are fan-split.
inline TriangleMesh read_obj(std::istream& in) {
    std::vector<Eigen::Vector3d> vertices;
    std::vector<Face> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_blank_or_comment(line)) continue;
        std::istringstream s(line);
        std::string tag;
        s >> tag;
        if (tag == "v") {
            double x, y, z;
            if (!(s >> x >> y >> z)) throw ParseError("malformed vertex" + detail::at_line(line_no));
            vertices.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> polygon;
            std::string token;
            while (s >> token) {
                const std::string head = token.substr(0, token.find('/'));
                long long idx = 0;
                try {
                    std::size_t used = 0;
                    idx = std::stoll(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    throw ParseError("malformed face index '" + token + "'" + detail::at_line(line_no));
                }
                if (idx == 0) throw ParseError("OBJ indices are 1-based" + detail::at_line(line_no));
                polygon.push_back(static_cast<int>(idx > 0 ? idx - 1 : static_cast<long long>(vertices.size()) + idx));
            }
            if (polygon.size() < 3) throw ParseError("face with fewer than 3 corners" + detail::at_line(line_no));
            detail::fan_split(polygon, faces);
        }
    }
    return TriangleMesh(std::move(vertices), std::move(faces));
}

inline std::optional<MeshFormat> format_from_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off") return MeshFormat::off;
    if (ext == ".obj") return MeshFormat::obj;
    return std::nullopt;
}

inline TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt) {
    if (!format) format = format_from_extension(path);
    if (!format) throw ParseError("cannot infer mesh format from '" + path.string() + "'");
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return *format == MeshFormat::off ? read_off(in) : read_obj(in);
}

inline void write_off(std::ostream& out, const TriangleMesh& mesh) {
    out << "OFF\n" << mesh.n_vertices() << ' ' << mesh.n_faces() << " 0\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : mesh.vertices()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const Face& t : mesh.faces()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

/// Diverging colour map: positive values red, negative blue, zero white.
/// `scale` is the magnitude mapped to full saturation.
inline std::array<int, 3> diverging_color(double value, double scale) {
    const double s = scale > 0.0 ? std::clamp(value / scale, -1.0, 1.0) : 0.0;
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(s))));
    return s >= 0.0 ? std::array<int, 3>{255, fade, fade} : std::array<int, 3>{fade, fade, 255};
}

/// ASCII PLY. When `scalar` is given (one value per vertex) each vertex also
/// carries a `value` property and an RGB colour from diverging_color.
inline void write_ply(std::ostream& out, const TriangleMesh& mesh, const Eigen::VectorXd* scalar = nullptr) {
    if (scalar && scalar->size() != mesh.n_vertices())
        throw ValidationError("per-vertex scalar has " + std::to_string(scalar->size()) + " entries for " +
                              std::to_string(mesh.n_vertices()) + " vertices");
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << mesh.n_vertices() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (scalar) out << "property double value\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.n_faces() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";

    const double scale = scalar ? scalar->cwiseAbs().maxCoeff() : 0.0;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        const auto& p = mesh.vertex(i);
        out << p.x() << ' ' << p.y() << ' ' << p.z();
        if (scalar) {
            const double v = (*scalar)(i);
            const auto rgb = diverging_color(v, scale);
            out << ' ' << v << ' ' << rgb[0] << ' ' << rgb[1] << ' ' << rgb[2];
        }
        out << '\n';
    }
    for (const Face& t : mesh.faces()) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

} // namespace cmm
