#ifndef HMC_MESH_HPP
#define HMC_MESH_HPP

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hmc/error.hpp"

namespace hmc {

using Vec3 = Eigen::Vector3d;
/// Vertex positions, one row per vertex.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Face = std::array<int, 3>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TriMesh {
    Points vertices;
    std::vector<Face> faces;

    int vertex_count() const { return static_cast<int>(vertices.rows()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    Vec3 vertex(int i) const { return vertices.row(i).transpose(); }
};

/// Throws IndexError / EmptyMeshError when the mesh breaks the TriMesh invariants.
inline void validate(const TriMesh& mesh, int min_vertices = 3) {
    if (mesh.vertex_count() < min_vertices) {
        throw EmptyMeshError("mesh has " + std::to_string(mesh.vertex_count()) +
                             " vertices, need at least " + std::to_string(min_vertices));
    }
    const int n = mesh.vertex_count();
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& face = mesh.faces[f];
        for (int idx : face) {
            if (idx < 0 || idx >= n) {
                throw IndexError("face " + std::to_string(f) + " references vertex " +
                                 std::to_string(idx) + " of " + std::to_string(n));
            }
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
            throw IndexError("face " + std::to_string(f) + " has repeated vertex indices");
        }
    }
    if (!mesh.vertices.allFinite()) {
        throw DomainError("mesh has non-finite vertex coordinates");
    }
}

/// A time sequence of poses sharing one connectivity.
struct MotionSequence {
    std::vector<Points> frames;
    std::vector<Face> faces;

    int frame_count() const { return static_cast<int>(frames.size()); }
};

inline void validate(const MotionSequence& motion) {
    if (motion.frames.empty()) {
        throw EmptyMeshError("motion has no frames");
    }
    const auto n = motion.frames.front().rows();
    for (const auto& frame : motion.frames) {
        if (frame.rows() != n) {
            throw ShapeError("motion frames disagree on vertex count");
        }
    }
}

inline double bbox_diagonal(const Points& points) {
    if (points.rows() == 0) {
        return 0.0;
    }
    return (points.colwise().maxCoeff() - points.colwise().minCoeff()).norm();
}

inline double bbox_diagonal(const TriMesh& mesh) { return bbox_diagonal(mesh.vertices); }

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

/// Unique undirected face edges as (i, j) with i < j, sorted.
inline std::vector<std::pair<int, int>> edges(const TriMesh& mesh) {
    std::vector<std::pair<int, int>> out;
    out.reserve(mesh.faces.size() * 3);
    for (const Face& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k];
            int b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            out.emplace_back(a, b);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline double mean_edge_length(const TriMesh& mesh) {
    const auto e = edges(mesh);
    if (e.empty()) return 0.0;
    double total = 0.0;
    for (auto [a, b] : e) {
        total += (mesh.vertices.row(a) - mesh.vertices.row(b)).norm();
    }
    return total / static_cast<double>(e.size());
}

struct Adjacency {
    std::vector<std::vector<int>> neighbors;
    /// Row-stochastic mean over self + neighbors; entry 1/(1+deg(v)).
    SparseMatrix aggregation;
};

inline Adjacency adjacency(const TriMesh& mesh) {
    const int n = mesh.vertex_count();
    Adjacency adj;
    adj.neighbors.assign(static_cast<std::size_t>(n), {});
    for (auto [a, b] : edges(mesh)) {
        adj.neighbors[static_cast<std::size_t>(a)].push_back(b);
        adj.neighbors[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (int v = 0; v < n; ++v) {
        auto& nb = adj.neighbors[static_cast<std::size_t>(v)];
        std::sort(nb.begin(), nb.end());
        const double w = 1.0 / (1.0 + static_cast<double>(nb.size()));
        triplets.emplace_back(v, v, w);
        for (int u : nb) {
            triplets.emplace_back(v, u, w);
        }
    }
    adj.aggregation.resize(n, n);
    adj.aggregation.setFromTriplets(triplets.begin(), triplets.end());
    return adj;
}

/// Relabels vertices so that new vertex i is old vertex perm[i].
inline TriMesh permute_vertices(const TriMesh& mesh, const std::vector<int>& perm) {
    const int n = mesh.vertex_count();
    std::vector<int> inverse(static_cast<std::size_t>(n));
    TriMesh out;
    out.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i) {
        out.vertices.row(i) = mesh.vertices.row(perm[static_cast<std::size_t>(i)]);
        inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    }
    out.faces.reserve(mesh.faces.size());
    for (const Face& f : mesh.faces) {
        out.faces.push_back({inverse[static_cast<std::size_t>(f[0])], inverse[static_cast<std::size_t>(f[1])],
                             inverse[static_cast<std::size_t>(f[2])]});
    }
    return out;
}

}  // namespace hmc

#endif  // HMC_MESH_HPP
