#ifndef HMC_OBJ_IO_HPP
#define HMC_OBJ_IO_HPP

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc {

namespace detail {

inline bool parse_double(std::string_view token, double& out) {
    std::string tmp(token);
    char* end = nullptr;
    out = std::strtod(tmp.c_str(), &end);
    return end != tmp.c_str() && *end == '\0';
}

// Face tokens may carry texture/normal references ("3/1/2", "3//2"); only the
// position index is read.
inline bool parse_face_index(std::string_view token, long& out) {
    const auto slash = token.find('/');
    const auto head = token.substr(0, slash);
    const auto* first = head.data();
    const auto* last = head.data() + head.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

}  // namespace detail

/// Reads the geometric subset of Wavefront OBJ (v, f). Normals, texture
/// coordinates, groups and material statements are skipped. Polygons are
/// fan-triangulated from their first vertex.
inline TriMesh read_obj(std::istream& in) {
    std::vector<double> coords;
    struct RawFace {
        std::vector<long> idx;
        std::size_t line;
    };
    std::vector<RawFace> raw_faces;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key) || key[0] == '#') continue;
        if (key == "v") {
            double xyz[3];
            for (double& c : xyz) {
                std::string tok;
                if (!(ss >> tok) || !detail::parse_double(tok, c)) {
                    throw ParseError("malformed vertex record", line_no);
                }
            }
            coords.insert(coords.end(), xyz, xyz + 3);
        } else if (key == "f") {
            RawFace face{{}, line_no};
            std::string tok;
            while (ss >> tok) {
                long idx = 0;
                if (!detail::parse_face_index(tok, idx) || idx == 0) {
                    throw ParseError("malformed face index '" + tok + "'", line_no);
                }
                // Negative indices count back from the most recent vertex.
                if (idx < 0) idx = static_cast<long>(coords.size() / 3) + idx + 1;
                face.idx.push_back(idx - 1);
            }
            if (face.idx.size() < 3) {
                throw ParseError("face with fewer than three vertices", line_no);
            }
            raw_faces.push_back(std::move(face));
        } else if (key == "vn" || key == "vt" || key == "vp" || key == "g" || key == "o" || key == "s" ||
                   key == "usemtl" || key == "mtllib" || key == "l") {
            continue;
        } else {
            throw ParseError("unsupported record '" + key + "'", line_no);
        }
    }

    const long n = static_cast<long>(coords.size() / 3);
    TriMesh mesh;
    mesh.vertices.resize(n, 3);
    for (long i = 0; i < n; ++i) {
        mesh.vertices.row(i) << coords[3 * i], coords[3 * i + 1], coords[3 * i + 2];
    }
    for (const auto& face : raw_faces) {
        for (long idx : face.idx) {
            if (idx < 0 || idx >= n) {
                throw IndexError("line " + std::to_string(face.line) + ": face index " + std::to_string(idx + 1) +
                                 " out of range (" + std::to_string(n) + " vertices)");
            }
        }
        for (std::size_t k = 1; k + 1 < face.idx.size(); ++k) {
            Face tri{static_cast<int>(face.idx[0]), static_cast<int>(face.idx[k]), static_cast<int>(face.idx[k + 1])};
            if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
                throw IndexError("line " + std::to_string(face.line) + ": face repeats a vertex index");
            }
            mesh.faces.push_back(tri);
        }
    }
    if (n < 3 || mesh.faces.empty()) {
        throw EmptyMeshError("OBJ contains no usable triangle mesh");
    }
    validate(mesh);
    return mesh;
}

inline TriMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    return read_obj(in);
}

inline void write_obj(std::ostream& out, const TriMesh& mesh) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
    }
    for (const Face& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
}

inline void save_obj(const TriMesh& mesh, const std::filesystem::path& path) {
    validate(mesh, 1);
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    write_obj(out, mesh);
    out.flush();
    if (!out) {
        throw IoError("write to '" + path.string() + "' failed");
    }
}

}  // namespace hmc

#endif  // HMC_OBJ_IO_HPP
