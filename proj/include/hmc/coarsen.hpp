#ifndef HMC_COARSEN_HPP
#define HMC_COARSEN_HPP

#include <algorithm>
#include <cmath>
#include <istream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "hmc/error.hpp"
#include "hmc/geometry.hpp"
#include "hmc/mesh.hpp"

namespace hmc {

/// Sum of squared distances to a set of planes, as a symmetric 4x4 form
/// evaluated on homogeneous points (x, y, z, 1).
struct Quadric {
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();

    static Quadric from_plane(const Vec3& unit_normal, const Vec3& point_on_plane) {
        Eigen::Vector4d p;
        p << unit_normal, -unit_normal.dot(point_on_plane);
        return Quadric{p * p.transpose()};
    }

    double error(const Vec3& v) const {
        Eigen::Vector4d h;
        h << v, 1.0;
        return h.dot(m * h);
    }

    Quadric& operator+=(const Quadric& other) {
        m += other.m;
        return *this;
    }
    friend Quadric operator+(Quadric a, const Quadric& b) { return a += b; }
};

inline std::vector<Quadric> vertex_quadrics(const TriMesh& mesh) {
    std::vector<Quadric> q(static_cast<std::size_t>(mesh.vertex_count()));
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const Face& face = mesh.faces[f];
        const Vec3 a = mesh.vertex(face[0]);
        const Vec3 b = mesh.vertex(face[1]);
        const Vec3 c = mesh.vertex(face[2]);
        if (is_degenerate_triangle(a, b, c)) {
            throw DegenerateError("face " + std::to_string(f) + " has zero area");
        }
        const Quadric plane = Quadric::from_plane((b - a).cross(c - a).normalized(), a);
        for (int idx : face) q[static_cast<std::size_t>(idx)] += plane;
    }
    return q;
}

/// Face edges plus every non-edge pair closer than `eps`, as sorted (i < j) pairs.
inline std::vector<std::pair<int, int>> candidate_pairs(const TriMesh& mesh, double eps) {
    auto pairs = edges(mesh);
    if (eps > 0.0) {
        const int n = mesh.vertex_count();
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return std::tie(mesh.vertices(a, 0), a) < std::tie(mesh.vertices(b, 0), b);
        });
        const double eps_sq = eps * eps;
        for (std::size_t s = 0; s < order.size(); ++s) {
            const int a = order[s];
            for (std::size_t t = s + 1; t < order.size(); ++t) {
                const int b = order[t];
                if (mesh.vertices(b, 0) - mesh.vertices(a, 0) >= eps) break;
                if ((mesh.vertices.row(a) - mesh.vertices.row(b)).squaredNorm() < eps_sq) {
                    pairs.emplace_back(std::min(a, b), std::max(a, b));
                }
            }
        }
        std::sort(pairs.begin(), pairs.end());
        pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    }
    return pairs;
}

struct Contraction {
    Vec3 position = Vec3::Zero();
    double cost = 0.0;
};

/// Optimal merged position for the pair (vi, vj), vi being the lower-indexed
/// vertex. Falls back to {midpoint, vi, vj} when the 3x3 system is
/// ill-conditioned; ties resolve in that order.
inline Contraction optimal_contraction(const Quadric& qi, const Quadric& qj, const Vec3& vi, const Vec3& vj) {
    const Quadric q = qi + qj;
    const Eigen::Matrix3d a = q.m.topLeftCorner<3, 3>();
    const Vec3 b = q.m.topRightCorner<3, 1>();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s(0) > 0.0 && s(2) > 0.0 && s(0) / s(2) < 1e8) {
        Contraction out;
        out.position = svd.solve(-b);
        out.cost = std::max(0.0, q.error(out.position));
        return out;
    }

    const Vec3 candidates[3] = {0.5 * (vi + vj), vi, vj};
    Contraction best{candidates[0], q.error(candidates[0])};
    for (int k = 1; k < 3; ++k) {
        const double e = q.error(candidates[k]);
        if (e < best.cost - 1e-12 * (1.0 + std::abs(best.cost))) {
            best = Contraction{candidates[k], e};
        }
    }
    best.cost = std::max(0.0, best.cost);
    return best;
}

/// One pair contraction; indices refer to the input mesh numbering.
struct MergeRecord {
    int kept = -1;
    int removed = -1;
    double cost = 0.0;
    Vec3 position = Vec3::Zero();
};

struct CoarsenResult {
    TriMesh coarse;
    std::vector<MergeRecord> log;
    /// Input vertex -> output vertex after all merges.
    std::vector<int> vertex_map;
};

inline double default_pair_eps(const TriMesh& mesh) { return 0.01 * bbox_diagonal(mesh); }

/// Greedy minimum-cost pair contraction down to `n_target` vertices. The
/// merged vertex keeps the lower index. Queue entries carry the versions of
/// both endpoints and are discarded on pop when either has since changed.
inline CoarsenResult coarsen_to(const TriMesh& mesh, int n_target, double eps) {
    validate(mesh);
    const int n = mesh.vertex_count();
    if (n_target < 4 || n_target > n) {
        throw TargetTooSmallError("coarsening target " + std::to_string(n_target) + " outside [4, " +
                                  std::to_string(n) + "]");
    }

    std::vector<Quadric> quadrics = vertex_quadrics(mesh);
    std::vector<Vec3> pos(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pos[i] = mesh.vertex(i);
    std::vector<int> version(static_cast<std::size_t>(n), 0);
    std::vector<char> alive(static_cast<std::size_t>(n), 1);
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);

    std::vector<std::vector<int>> partners(static_cast<std::size_t>(n));
    for (auto [a, b] : candidate_pairs(mesh, eps)) {
        partners[a].push_back(b);
        partners[b].push_back(a);
    }

    std::vector<Face> faces = mesh.faces;
    std::vector<char> face_alive(faces.size(), 1);
    std::vector<std::vector<int>> incident(static_cast<std::size_t>(n));
    for (std::size_t f = 0; f < faces.size(); ++f) {
        for (int idx : faces[f]) incident[idx].push_back(static_cast<int>(f));
    }

    struct Entry {
        double cost;
        int i, j;
        int vi, vj;
        Vec3 position;
    };
    auto later = [](const Entry& a, const Entry& b) {
        return std::tie(a.cost, a.i, a.j) > std::tie(b.cost, b.i, b.j);
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(later)> queue(later);
    auto push_pair = [&](int a, int b) {
        const int i = std::min(a, b);
        const int j = std::max(a, b);
        const Contraction c = optimal_contraction(quadrics[i], quadrics[j], pos[i], pos[j]);
        queue.push(Entry{c.cost, i, j, version[i], version[j], c.position});
    };
    for (int i = 0; i < n; ++i) {
        for (int j : partners[i]) {
            if (i < j) push_pair(i, j);
        }
    }

    CoarsenResult result;
    int remaining = n;
    while (remaining > n_target) {
        if (queue.empty()) {
            throw TargetTooSmallError("no contractible pairs left at " + std::to_string(remaining) +
                                      " vertices (target " + std::to_string(n_target) + ")");
        }
        const Entry e = queue.top();
        queue.pop();
        if (!alive[e.i] || !alive[e.j] || version[e.i] != e.vi || version[e.j] != e.vj) continue;

        const int i = e.i;
        const int j = e.j;
        result.log.push_back(MergeRecord{i, j, e.cost, e.position});
        pos[i] = e.position;
        quadrics[i] += quadrics[j];
        ++version[i];
        alive[j] = 0;
        parent[j] = i;
        --remaining;

        for (int k : partners[j]) {
            auto& pk = partners[k];
            pk.erase(std::remove(pk.begin(), pk.end(), j), pk.end());
            if (k != i && std::find(pk.begin(), pk.end(), i) == pk.end()) {
                pk.push_back(i);
                partners[i].push_back(k);
            }
        }
        partners[j].clear();

        for (int f : incident[j]) {
            if (!face_alive[f]) continue;
            Face& face = faces[f];
            for (int& idx : face) {
                if (idx == j) idx = i;
            }
            if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
                face_alive[f] = 0;
            } else {
                incident[i].push_back(f);
            }
        }
        incident[j].clear();

        for (int k : partners[i]) push_pair(i, k);
    }

    std::vector<int> compact(static_cast<std::size_t>(n), -1);
    result.coarse.vertices.resize(remaining, 3);
    int next = 0;
    for (int v = 0; v < n; ++v) {
        if (!alive[v]) continue;
        compact[v] = next;
        result.coarse.vertices.row(next) = pos[v].transpose();
        ++next;
    }
    for (std::size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        const Face& face = faces[f];
        const Vec3 a = pos[face[0]];
        const Vec3 b = pos[face[1]];
        const Vec3 c = pos[face[2]];
        if (is_degenerate_triangle(a, b, c)) continue;
        result.coarse.faces.push_back({compact[face[0]], compact[face[1]], compact[face[2]]});
    }
    result.vertex_map.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        int root = v;
        while (parent[root] != root) root = parent[root];
        result.vertex_map[v] = compact[root];
    }
    return result;
}

inline CoarsenResult coarsen_to(const TriMesh& mesh, int n_target) {
    return coarsen_to(mesh, n_target, default_pair_eps(mesh));
}

/// Sparse row-stochastic map from source-resolution vertex values to
/// destination-resolution vertices. Each row holds the barycentric
/// coordinates of one destination vertex on its nearest source face.
struct AssignmentMap {
    SparseMatrix matrix;
    /// Source face that supplied each row; -1 when unknown (read from file).
    std::vector<int> row_face;

    int rows() const { return static_cast<int>(matrix.rows()); }
    int cols() const { return static_cast<int>(matrix.cols()); }

    Points apply(const Points& source) const {
        if (source.rows() != matrix.cols()) {
            throw ShapeError("assignment map expects " + std::to_string(matrix.cols()) + " rows, got " +
                             std::to_string(source.rows()));
        }
        return Points(matrix * source);
    }
};

namespace detail {

// Uniform grid over face bounding boxes for nearest-face queries.
class FaceGrid {
public:
    FaceGrid(const TriMesh& mesh, const std::vector<int>& face_ids, const Vec3& lo, const Vec3& hi, double cell)
        : mesh_(mesh), lo_(lo), cell_(cell) {
        for (int d = 0; d < 3; ++d) {
            dims_[d] = std::max(1, static_cast<int>(std::ceil((hi[d] - lo[d]) / cell_)) + 1);
        }
        cells_.resize(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2]);
        for (int f : face_ids) {
            const Face& face = mesh.faces[f];
            Vec3 flo = mesh.vertex(face[0]).cwiseMin(mesh.vertex(face[1])).cwiseMin(mesh.vertex(face[2]));
            Vec3 fhi = mesh.vertex(face[0]).cwiseMax(mesh.vertex(face[1])).cwiseMax(mesh.vertex(face[2]));
            auto a = cell_of(flo);
            auto b = cell_of(fhi);
            for (int x = a[0]; x <= b[0]; ++x)
                for (int y = a[1]; y <= b[1]; ++y)
                    for (int z = a[2]; z <= b[2]; ++z) cells_[index(x, y, z)].push_back(f);
        }
    }

    /// Nearest face by (distance, face index); identical to an exhaustive scan.
    BaryHit nearest(const Vec3& p) const {
        const auto c = cell_of(p);
        BaryHit best;
        best.distance_sq = std::numeric_limits<double>::infinity();
        const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
        for (int r = 0; r <= max_ring; ++r) {
            for (int x = c[0] - r; x <= c[0] + r; ++x) {
                for (int y = c[1] - r; y <= c[1] + r; ++y) {
                    for (int z = c[2] - r; z <= c[2] + r; ++z) {
                        const bool shell = std::abs(x - c[0]) == r || std::abs(y - c[1]) == r || std::abs(z - c[2]) == r;
                        if (!shell || x < 0 || y < 0 || z < 0 || x >= dims_[0] || y >= dims_[1] || z >= dims_[2]) {
                            continue;
                        }
                        for (int f : cells_[index(x, y, z)]) consider(p, f, best);
                    }
                }
            }
            // Faces outside rings 0..r lie at least r * cell away from p.
            const double bound = static_cast<double>(r) * cell_;
            if (best.face_index >= 0 && bound * bound > best.distance_sq) break;
        }
        return best;
    }

private:
    void consider(const Vec3& p, int f, BaryHit& best) const {
        if (f == best.face_index) return;
        const Face& face = mesh_.faces[f];
        BaryHit hit = closest_point_on_triangle(p, mesh_.vertex(face[0]), mesh_.vertex(face[1]), mesh_.vertex(face[2]));
        hit.face_index = f;
        if (hit.distance_sq < best.distance_sq ||
            (hit.distance_sq == best.distance_sq && f < best.face_index)) {
            best = hit;
        }
    }

    std::array<int, 3> cell_of(const Vec3& p) const {
        std::array<int, 3> c{};
        for (int d = 0; d < 3; ++d) {
            c[d] = std::clamp(static_cast<int>(std::floor((p[d] - lo_[d]) / cell_)), 0, dims_[d] - 1);
        }
        return c;
    }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(x) * dims_[1] + y) * dims_[2] + z;
    }

    const TriMesh& mesh_;
    Vec3 lo_;
    double cell_;
    std::array<int, 3> dims_{};
    std::vector<std::vector<int>> cells_;
};

}  // namespace detail

/// Expresses every destination point as the normalized barycentric
/// coordinates of its closest point on the nearest non-degenerate source face.
inline AssignmentMap assignment_map(const TriMesh& src, const Points& dst) {
    if (dst.rows() == 0) {
        throw EmptyMeshError("assignment map needs at least one destination vertex");
    }
    std::vector<int> usable;
    for (int f = 0; f < src.face_count(); ++f) {
        const Face& face = src.faces[f];
        if (!is_degenerate_triangle(src.vertex(face[0]), src.vertex(face[1]), src.vertex(face[2]))) {
            usable.push_back(f);
        }
    }
    if (usable.empty()) {
        throw EmptyMeshError("assignment map source has no usable faces");
    }

    Vec3 lo = src.vertices.colwise().minCoeff().transpose().cwiseMin(dst.colwise().minCoeff().transpose());
    Vec3 hi = src.vertices.colwise().maxCoeff().transpose().cwiseMax(dst.colwise().maxCoeff().transpose());
    double cell = 2.0 * mean_edge_length(src);
    const double extent = (hi - lo).maxCoeff();
    if (!(cell > 0.0)) cell = std::max(extent, 1.0);
    // Keep the grid bounded for meshes with a few very short edges.
    cell = std::max(cell, extent / 128.0);
    const detail::FaceGrid grid(src, usable, lo, hi, cell);

    AssignmentMap map;
    map.row_face.resize(static_cast<std::size_t>(dst.rows()));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(dst.rows()) * 3);
    for (Eigen::Index r = 0; r < dst.rows(); ++r) {
        const BaryHit hit = grid.nearest(dst.row(r).transpose());
        map.row_face[r] = hit.face_index;
        const Face& face = src.faces[hit.face_index];
        const double sum = hit.coords.sum();
        for (int k = 0; k < 3; ++k) {
            const double w = hit.coords[k] / sum;
            if (w > 0.0) triplets.emplace_back(static_cast<int>(r), face[k], w);
        }
    }
    map.matrix.resize(dst.rows(), src.vertex_count());
    map.matrix.setFromTriplets(triplets.begin(), triplets.end());
    map.matrix.makeCompressed();
    return map;
}

/// Exhaustive nearest-face variant used to cross-check the grid search.
inline AssignmentMap assignment_map_exhaustive(const TriMesh& src, const Points& dst) {
    AssignmentMap map;
    map.row_face.resize(static_cast<std::size_t>(dst.rows()));
    std::vector<Eigen::Triplet<double>> triplets;
    for (Eigen::Index r = 0; r < dst.rows(); ++r) {
        BaryHit best;
        best.distance_sq = std::numeric_limits<double>::infinity();
        for (int f = 0; f < src.face_count(); ++f) {
            const Face& face = src.faces[f];
            const Vec3 a = src.vertex(face[0]), b = src.vertex(face[1]), c = src.vertex(face[2]);
            if (is_degenerate_triangle(a, b, c)) continue;
            BaryHit hit = closest_point_on_triangle(dst.row(r).transpose(), a, b, c);
            if (hit.distance_sq < best.distance_sq) {
                best = hit;
                best.face_index = f;
            }
        }
        if (best.face_index < 0) throw EmptyMeshError("assignment map source has no usable faces");
        map.row_face[r] = best.face_index;
        const Face& face = src.faces[best.face_index];
        for (int k = 0; k < 3; ++k) {
            const double w = best.coords[k] / best.coords.sum();
            if (w > 0.0) triplets.emplace_back(static_cast<int>(r), face[k], w);
        }
    }
    map.matrix.resize(dst.rows(), src.vertex_count());
    map.matrix.setFromTriplets(triplets.begin(), triplets.end());
    map.matrix.makeCompressed();
    return map;
}

/// Levels 0..K of a recursively coarsened mesh with the maps between them.
/// down[k] takes level-k values to level k+1; up[k] takes level k+1 back to k.
struct MeshPyramid {
    std::vector<TriMesh> levels;
    std::vector<AssignmentMap> down;
    std::vector<AssignmentMap> up;
    double ratio = 0.6;

    int depth() const { return static_cast<int>(levels.size()) - 1; }
};

inline int next_level_count(int n, double ratio) {
    return std::max(4, static_cast<int>(std::lround(ratio * n)));
}

inline MeshPyramid build_pyramid(const TriMesh& mesh, double ratio, int levels) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw DomainError("coarsening ratio must lie in (0, 1)");
    }
    if (levels < 0) {
        throw DomainError("level count must be non-negative");
    }
    validate(mesh);
    MeshPyramid pyramid;
    pyramid.ratio = ratio;
    pyramid.levels.push_back(mesh);
    for (int k = 0; k < levels; ++k) {
        const TriMesh& fine = pyramid.levels.back();
        const int target = next_level_count(fine.vertex_count(), ratio);
        if (target >= fine.vertex_count()) {
            throw TargetTooSmallError("level " + std::to_string(k + 1) + " cannot shrink below " +
                                      std::to_string(fine.vertex_count()) + " vertices");
        }
        CoarsenResult res = coarsen_to(fine, target);
        pyramid.down.push_back(assignment_map(fine, res.coarse.vertices));
        pyramid.up.push_back(assignment_map(res.coarse, fine.vertices));
        pyramid.levels.push_back(std::move(res.coarse));
    }
    return pyramid;
}

/// Level-0 values carried to every level through the down maps.
inline std::vector<Points> push_down(const MeshPyramid& pyramid, const Points& level0) {
    std::vector<Points> out{level0};
    for (const auto& map : pyramid.down) out.push_back(map.apply(out.back()));
    return out;
}

/// Values at `level` lifted back to level 0 through the up maps.
inline Points pull_up(const MeshPyramid& pyramid, const Points& values, int level) {
    Points cur = values;
    for (int k = level - 1; k >= 0; --k) cur = pyramid.up[k].apply(cur);
    return cur;
}

inline void write_assignment_map(std::ostream& out, const AssignmentMap& map) {
    out << map.rows() << ' ' << map.cols() << ' ' << map.matrix.nonZeros() << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    // Row-major storage iterates (row, col) in sorted order.
    for (int r = 0; r < map.matrix.outerSize(); ++r) {
        for (SparseMatrix::InnerIterator it(map.matrix, r); it; ++it) {
            out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
        }
    }
}

inline AssignmentMap read_assignment_map(std::istream& in) {
    long rows = 0, cols = 0, nnz = 0;
    if (!(in >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
        throw ParseError("malformed assignment map header", 1);
    }
    std::vector<Eigen::Triplet<double>> triplets;
    for (long e = 0; e < nnz; ++e) {
        long r = 0, c = 0;
        double v = 0.0;
        if (!(in >> r >> c >> v)) throw ParseError("truncated assignment map", static_cast<std::size_t>(e + 2));
        if (r < 0 || r >= rows || c < 0 || c >= cols) {
            throw IndexError("assignment map entry out of range on line " + std::to_string(e + 2));
        }
        triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    }
    AssignmentMap map;
    map.matrix.resize(rows, cols);
    map.matrix.setFromTriplets(triplets.begin(), triplets.end());
    map.row_face.assign(static_cast<std::size_t>(rows), -1);
    return map;
}

}  // namespace hmc

#endif  // HMC_COARSEN_HPP
