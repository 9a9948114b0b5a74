#ifndef HMC_DEFORM_HPP
#define HMC_DEFORM_HPP

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hmc/coarsen.hpp"
#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc {

/// Parts x vertices; each column is one vertex's distribution over parts.
using SkinningWeights = Matrix;

/// Per-part pivot position and axis-angle rotation.
struct PartTransforms {
    Points positions;
    Points rotations;

    int part_count() const { return static_cast<int>(positions.rows()); }

    static PartTransforms identity_at(const Points& pivots) {
        return PartTransforms{pivots, Points::Zero(pivots.rows(), 3)};
    }
};

/// Rotation vector with the same rotation but angle in [0, pi].
inline Vec3 canonical_axis_angle(const Vec3& r) {
    const double angle = r.norm();
    if (angle <= std::numbers::pi) return r;
    const Vec3 axis = r / angle;
    double wrapped = std::fmod(angle, 2.0 * std::numbers::pi);
    if (wrapped > std::numbers::pi) return -(2.0 * std::numbers::pi - wrapped) * axis;
    return wrapped * axis;
}

inline void canonicalize(PartTransforms& parts) {
    for (Eigen::Index j = 0; j < parts.rotations.rows(); ++j) {
        parts.rotations.row(j) = canonical_axis_angle(parts.rotations.row(j).transpose()).transpose();
    }
}

/// Rodrigues' formula; the zero vector maps to the identity.
inline Eigen::Matrix3d rotation_matrix(const Vec3& axis_angle) {
    const double angle = axis_angle.norm();
    if (angle < 1e-300) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

inline Vec3 axis_angle(const Eigen::Matrix3d& rotation) {
    const Eigen::AngleAxisd aa(rotation);
    return canonical_axis_angle(aa.angle() * aa.axis());
}

inline void check_stochastic_columns(const SkinningWeights& w, double tol) {
    if ((w.array() < -tol).any()) throw DomainError("skinning weights contain negative entries");
    const Eigen::RowVectorXd sums = w.colwise().sum();
    for (Eigen::Index i = 0; i < sums.size(); ++i) {
        if (std::abs(sums(i) - 1.0) > tol) {
            throw DomainError("skinning weights column " + std::to_string(i) + " sums to " + std::to_string(sums(i)));
        }
    }
}

/// Weighted centroid of the rest vertices for every part.
inline Points joint_positions(const SkinningWeights& w, const Points& rest) {
    if (w.cols() != rest.rows()) {
        throw ShapeError("weights have " + std::to_string(w.cols()) + " columns for " + std::to_string(rest.rows()) +
                         " vertices");
    }
    const Eigen::VectorXd mass = w.rowwise().sum();
    for (Eigen::Index j = 0; j < mass.size(); ++j) {
        if (!(mass(j) > 1e-9)) throw DomainError("part " + std::to_string(j) + " has no skinning weight");
    }
    Points out = w * rest;
    out.array().colwise() /= mass.array();
    return out;
}

/// Blend of per-part rigid motions: each part rotates the rest vertex about
/// its rest pivot, then carries the pivot to the part's posed position.
inline Points lbs_apply(const Points& rest, const SkinningWeights& w, const Points& rest_pivots,
                        const PartTransforms& parts) {
    const Eigen::Index parts_n = w.rows();
    if (w.cols() != rest.rows() || rest_pivots.rows() != parts_n || parts.positions.rows() != parts_n ||
        parts.rotations.rows() != parts_n) {
        throw ShapeError("lbs_apply shape mismatch");
    }
    Points out = Points::Zero(rest.rows(), 3);
    for (Eigen::Index j = 0; j < parts_n; ++j) {
        const Eigen::Matrix3d r = rotation_matrix(parts.rotations.row(j).transpose());
        Points moved = (rest.rowwise() - rest_pivots.row(j)) * r.transpose();
        moved.rowwise() += parts.positions.row(j);
        out += (moved.array().colwise() * w.row(j).transpose().array()).matrix();
    }
    return out;
}

/// Concatenated multi-level part representation used to pose a level mesh.
struct HierarchicalRep {
    SkinningWeights weights;
    Points rest_pivots;
    PartTransforms parts;
    /// Pyramid level that produced each part.
    std::vector<int> part_level;

    int part_count() const { return static_cast<int>(weights.rows()); }
    bool empty() const { return weights.rows() == 0; }
};

/// Prepends this level's parts to the coarser representation. The coarser
/// weights are lifted through `up_map` (this level <- coarser level) and the
/// stacked columns renormalized to sum to one.
inline HierarchicalRep concat_representation(int level, const PartTransforms& level_parts,
                                             const SkinningWeights& level_w, const Points& level_pivots,
                                             const AssignmentMap* up_map, const HierarchicalRep& coarser) {
    const Eigen::Index parts_n = level_w.rows();
    if (level_parts.positions.rows() != parts_n || level_pivots.rows() != parts_n) {
        throw ShapeError("concat_representation part count mismatch");
    }
    HierarchicalRep rep;
    if (coarser.empty()) {
        rep.weights = level_w;
        rep.rest_pivots = level_pivots;
        rep.parts = level_parts;
        rep.part_level.assign(static_cast<std::size_t>(parts_n), level);
        return rep;
    }
    if (up_map == nullptr || up_map->rows() != level_w.cols() || up_map->cols() != coarser.weights.cols()) {
        throw ShapeError("up map does not connect the two levels");
    }
    const Matrix lifted = (up_map->matrix * coarser.weights.transpose()).transpose();
    const Eigen::Index total = parts_n + lifted.rows();
    rep.weights.resize(total, level_w.cols());
    rep.weights << level_w, lifted;
    const Eigen::RowVectorXd sums = rep.weights.colwise().sum();
    for (Eigen::Index i = 0; i < rep.weights.cols(); ++i) {
        if (sums(i) > 0.0) rep.weights.col(i) /= sums(i);
    }
    rep.rest_pivots.resize(total, 3);
    rep.rest_pivots << level_pivots, coarser.rest_pivots;
    rep.parts.positions.resize(total, 3);
    rep.parts.positions << level_parts.positions, coarser.parts.positions;
    rep.parts.rotations.resize(total, 3);
    rep.parts.rotations << level_parts.rotations, coarser.parts.rotations;
    rep.part_level.assign(static_cast<std::size_t>(parts_n), level);
    rep.part_level.insert(rep.part_level.end(), coarser.part_level.begin(), coarser.part_level.end());
    return rep;
}

inline Points hierarchical_pose(const Points& rest, const HierarchicalRep& rep) {
    return lbs_apply(rest, rep.weights, rep.rest_pivots, rep.parts);
}

inline void write_weights(std::ostream& out, const SkinningWeights& w) {
    out << w.rows() << ' ' << w.cols() << '\n' << std::setprecision(9);
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
        for (Eigen::Index i = 0; i < w.cols(); ++i) {
            out << w(j, i) << (i + 1 == w.cols() ? '\n' : ' ');
        }
    }
}

inline SkinningWeights read_weights(std::istream& in) {
    long parts = 0, verts = 0;
    if (!(in >> parts >> verts) || parts < 0 || verts < 0) throw ParseError("malformed weights header", 1);
    SkinningWeights w(parts, verts);
    for (long j = 0; j < parts; ++j) {
        for (long i = 0; i < verts; ++i) {
            if (!(in >> w(j, i))) throw ParseError("truncated weights", static_cast<std::size_t>(j + 2));
        }
    }
    return w;
}

}  // namespace hmc

#endif  // HMC_DEFORM_HPP
