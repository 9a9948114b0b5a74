#ifndef HMC_PRIMITIVES_HPP
#define HMC_PRIMITIVES_HPP

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc {

/// Unit icosphere; each subdivision splits every triangle into four.
inline TriMesh icosphere(int subdivisions) {
    if (subdivisions < 0) throw DomainError("subdivisions must be non-negative");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v{{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Face> f{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4}, {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Face> next;
        for (const Face& tri : f) {
            const int ab = mid(tri[0], tri[1]);
            const int bc = mid(tri[1], tri[2]);
            const int ca = mid(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(v.size()), 3);
    for (std::size_t i = 0; i < v.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = v[i].transpose();
    mesh.faces = std::move(f);
    return mesh;
}

/// Flat (nx + 1) x (ny + 1) vertex grid on the unit square in the z = 0 plane.
inline TriMesh plane_grid(int nx, int ny) {
    if (nx < 1 || ny < 1) throw DomainError("grid needs at least one cell per side");
    TriMesh mesh;
    mesh.vertices.resize((nx + 1) * (ny + 1), 3);
    for (int y = 0; y <= ny; ++y) {
        for (int x = 0; x <= nx; ++x) {
            mesh.vertices.row(y * (nx + 1) + x) << static_cast<double>(x) / nx, static_cast<double>(y) / ny, 0.0;
        }
    }
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const int a = y * (nx + 1) + x;
            const int b = a + 1;
            const int c = a + nx + 1;
            const int d = c + 1;
            mesh.faces.push_back({a, b, d});
            mesh.faces.push_back({a, d, c});
        }
    }
    return mesh;
}

}  // namespace hmc

#endif  // HMC_PRIMITIVES_HPP
