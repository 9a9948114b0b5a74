#ifndef HMC_GEOMETRY_HPP
#define HMC_GEOMETRY_HPP

#include <array>
#include <cmath>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc {

/// Closest point on a triangle, with its barycentric coordinates.
struct BaryHit {
    int face_index = -1;
    Vec3 point = Vec3::Zero();
    Vec3 coords = Vec3::Zero();
    double distance_sq = 0.0;
};

inline bool is_degenerate_triangle(const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 lo = a.cwiseMin(b).cwiseMin(c);
    Vec3 hi = a.cwiseMax(b).cwiseMax(c);
    const double diag_sq = (hi - lo).squaredNorm();
    return !(triangle_area(a, b, c) > 1e-12 * diag_sq) || diag_sq == 0.0;
}

/// Region-based closest point query over the closed triangle (a, b, c).
/// Vertex and edge regions yield exact zero coordinates.
inline BaryHit closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    if (is_degenerate_triangle(a, b, c)) {
        throw DegenerateError("closest point query on a degenerate triangle");
    }
    BaryHit hit;
    auto finish = [&](double u, double v, double w) {
        Vec3 bc = Vec3(u, v, w).cwiseMax(0.0).cwiseMin(1.0);
        hit.coords = bc / bc.sum();
        hit.point = hit.coords[0] * a + hit.coords[1] * b + hit.coords[2] * c;
        hit.distance_sq = (p - hit.point).squaredNorm();
        return hit;
    };

    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return finish(1.0, 0.0, 0.0);

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return finish(0.0, 1.0, 0.0);

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return finish(1.0 - v, v, 0.0);
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return finish(0.0, 0.0, 1.0);

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return finish(1.0 - w, 0.0, w);
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(0.0, 1.0 - w, w);
    }

    const double denom = 1.0 / (va + vb + vc);
    return finish(va * denom, vb * denom, vc * denom);
}

inline BaryHit closest_point_on_triangle(const Vec3& p, const std::array<Vec3, 3>& tri) {
    return closest_point_on_triangle(p, tri[0], tri[1], tri[2]);
}

}  // namespace hmc

#endif  // HMC_GEOMETRY_HPP
