#ifndef HMC_LOSSES_HPP
#define HMC_LOSSES_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hmc/deform.hpp"
#include "hmc/error.hpp"
#include "hmc/mesh.hpp"
#include "hmc/nn/ops.hpp"
#include "hmc/retarget.hpp"

namespace hmc {

inline constexpr double kKlFloor = 1e-12;

/// Linear interpolation from alpha (epoch 0) to beta (epoch x_max).
inline double schedule_weight(double alpha, double beta, double x, double x_max) {
    if (!(x >= 0.0 && x <= x_max)) {
        throw DomainError("epoch " + std::to_string(x) + " outside [0, " + std::to_string(x_max) + "]");
    }
    if (x_max == 0.0) return alpha;
    const double t = x / x_max;
    return (1.0 - t) * alpha + t * beta;
}

struct LossWeights {
    /// (alpha_k, beta_k) for coarse levels k = 1..K.
    std::vector<std::pair<double, double>> schedule{{0.6, 0.4}};
    double x_max = 400.0;
    double skinning = 0.1;
    double rigid = 0.01;
    double cycle = 1.0;

    /// Coarse-level weights at epoch x; index 0 is level 1.
    std::vector<double> level_weights(double x) const {
        std::vector<double> w;
        for (auto [a, b] : schedule) w.push_back(schedule_weight(a, b, x, x_max));
        return w;
    }

    /// The weights are linear in x, so checking both ends covers the range.
    void validate() const {
        for (auto [a, b] : schedule) {
            if (a < 0.0 || a > 1.0 || b < 0.0 || b > 1.0) throw ConfigError("schedule weights must lie in [0, 1]");
        }
        for (double x : {0.0, x_max}) {
            double total = 0.0;
            for (double w : level_weights(x)) total += w;
            if (!(total < 1.0)) throw ConfigError("coarse-level loss weights must sum below 1");
        }
    }
};

/// Mean-reduced L1 over vertices plus mean-reduced L1 over 6-D part transforms.
inline Var layer_retarget_loss(const Points& v_gt, const Var& v_pred, const Matrix& j_gt, const Var& j_pred) {
    if (v_pred.rows() != v_gt.rows() || v_pred.cols() != 3) throw ShapeError("layer loss: vertex shapes differ");
    if (j_pred.rows() != j_gt.rows() || j_pred.cols() != j_gt.cols()) throw ShapeError("layer loss: part shapes differ");
    Tape& t = *v_pred.tape();
    const Var vertex_term = nn::mean_abs(nn::sub(v_pred, t.constant(v_gt)));
    const Var part_term = nn::mean_abs(nn::sub(j_pred, t.constant(j_gt)));
    return nn::add(vertex_term, part_term);
}

inline double layer_retarget_loss(const Points& v_gt, const Points& v_pred, const Matrix& j_gt, const Matrix& j_pred) {
    Tape tape;
    return layer_retarget_loss(v_gt, tape.constant(v_pred), j_gt, tape.constant(j_pred)).value()(0, 0);
}

inline void check_distribution(const Eigen::VectorXd& p, const char* name) {
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-6) {
        throw DomainError(std::string(name) + " is not a probability distribution");
    }
}

/// KL(p || q) with q floored at 1e-12 and 0 log 0 = 0.
inline double kl_div(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) throw ShapeError("kl_div: lengths differ");
    check_distribution(p, "p");
    check_distribution(q, "q");
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0.0) total += p(i) * std::log(p(i) / std::max(q(i), kKlFloor));
    }
    return total;
}

/// Row-normalized per-part vertex distributions.
inline Matrix part_distributions(const Matrix& w) {
    Matrix out = w;
    const Eigen::VectorXd sums = w.rowwise().sum();
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
        if (sums(j) > 0.0) out.row(j) /= sums(j);
    }
    return out;
}

/// KL(part j || joint m) for every predicted part and ground-truth joint.
inline Matrix part_joint_kl(const Matrix& w_pred, const Matrix& w_gt) {
    if (w_pred.cols() != w_gt.cols()) throw ShapeError("match_gt_joints: vertex counts differ");
    const Matrix p = part_distributions(w_pred);
    const Matrix q = part_distributions(w_gt);
    const Matrix log_p = p.unaryExpr([](double x) { return x > 0.0 ? std::log(x) : 0.0; });
    const Matrix log_q = q.unaryExpr([](double x) { return std::log(std::max(x, kKlFloor)); });
    // KL(p_j || q_m) = sum p log p - sum p log q
    const Eigen::VectorXd self = (p.array() * log_p.array()).rowwise().sum();
    Matrix kl = -(p * log_q.transpose());
    kl.colwise() += self;
    return kl;
}

/// For every predicted part, the ground-truth joint whose vertex
/// distribution it is closest to under KL(part || joint).
inline std::vector<int> match_gt_joints(const Matrix& w_pred, const Matrix& w_gt) {
    const Matrix kl = part_joint_kl(w_pred, w_gt);
    std::vector<int> match(static_cast<std::size_t>(kl.rows()), 0);
    for (Eigen::Index j = 0; j < kl.rows(); ++j) {
        Eigen::Index best = 0;
        kl.row(j).minCoeff(&best);
        match[j] = static_cast<int>(best);
    }
    return match;
}

/// Like match_gt_joints, but every joint first claims one distinct part
/// (greedy by lowest KL, ties to the lower part then joint index) while
/// parts remain; leftover parts take their nearest joint.
inline std::vector<int> match_gt_joints_covering(const Matrix& w_pred, const Matrix& w_gt) {
    const Matrix kl = part_joint_kl(w_pred, w_gt);
    std::vector<int> match(static_cast<std::size_t>(kl.rows()), -1);
    std::vector<char> joint_taken(static_cast<std::size_t>(kl.cols()), 0);
    const Eigen::Index rounds = std::min(kl.rows(), kl.cols());
    for (Eigen::Index r = 0; r < rounds; ++r) {
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index bj = -1, bm = -1;
        for (Eigen::Index j = 0; j < kl.rows(); ++j) {
            if (match[j] >= 0) continue;
            for (Eigen::Index m = 0; m < kl.cols(); ++m) {
                if (!joint_taken[m] && kl(j, m) < best) {
                    best = kl(j, m);
                    bj = j;
                    bm = m;
                }
            }
        }
        match[bj] = static_cast<int>(bm);
        joint_taken[bm] = 1;
    }
    for (Eigen::Index j = 0; j < kl.rows(); ++j) {
        if (match[j] >= 0) continue;
        Eigen::Index best = 0;
        kl.row(j).minCoeff(&best);
        match[j] = static_cast<int>(best);
    }
    return match;
}

/// Skinning weights of one character across pyramid levels.
struct SkinningLevels {
    std::vector<Var> predicted;          // J x V_k per level
    std::vector<Matrix> ground_truth;    // joints x V_k per level; empty when unknown
    const MeshPyramid* pyramid = nullptr;
    /// Part-to-joint matches per level; levels left empty use match_gt_joints.
    std::vector<std::vector<int>> matches;
};

/// Part-size distribution (share of total weight per part) as a J x 1 column.
inline Var part_mass(const Var& w) {
    Tape& t = *w.tape();
    const Var ones = t.constant(Matrix::Ones(w.cols(), 1));
    return nn::transpose(nn::normalize_columns(nn::matmul(w, ones)));
}

/// Inter-layer terms (source vs target part sizes, prediction vs matched
/// ground truth) at every level plus intra-layer terms between each level
/// and the lifted coarser level of the same character.
inline Var skinning_similarity_loss(const SkinningLevels& source, const SkinningLevels& target) {
    if (source.predicted.size() != target.predicted.size() || source.predicted.empty()) {
        throw ShapeError("skinning loss: level counts differ");
    }
    Tape& t = *source.predicted.front().tape();
    Var total = t.constant(Matrix::Zero(1, 1));
    const std::size_t levels = source.predicted.size();
    for (std::size_t k = 0; k < levels; ++k) {
        const Var& ws = source.predicted[k];
        const Var& wt = target.predicted[k];
        if (!ws.valid() || !wt.valid()) continue;
        total = nn::add(total, nn::kl_rows(part_mass(wt), part_mass(ws), kKlFloor));
        for (const SkinningLevels* a : {&source, &target}) {
            if (a->ground_truth.size() <= k || a->ground_truth[k].size() == 0) continue;
            const Var& w = a->predicted[k];
            const std::vector<int> match = a->matches.size() > k && !a->matches[k].empty()
                                               ? a->matches[k]
                                               : match_gt_joints(w.value(), a->ground_truth[k]);
            const Matrix gt_dist = part_distributions(a->ground_truth[k]);
            Matrix matched(w.rows(), w.cols());
            for (Eigen::Index j = 0; j < w.rows(); ++j) matched.row(j) = gt_dist.row(match[j]);
            total = nn::add(total, nn::kl_rows(nn::normalize_rows(w), t.constant(matched), kKlFloor));
        }
    }
    for (std::size_t k = 1; k < levels; ++k) {
        for (const SkinningLevels* a : {&source, &target}) {
            if (a->pyramid == nullptr || !a->predicted[k].valid() || !a->predicted[k - 1].valid()) continue;
            const SparseMatrix& up = a->pyramid->up[k - 1].matrix;
            const Var lifted = nn::transpose(nn::spmm(up, nn::transpose(a->predicted[k])));
            total = nn::add(total, nn::kl_rows(nn::normalize_rows(lifted), nn::normalize_rows(a->predicted[k - 1]),
                                               kKlFloor));
        }
    }
    return total;
}

/// Mean over edge pairs of the change in edge length.
inline Var rigid_loss(const Var& pred, const Points& rest, const std::vector<std::pair<int, int>>& pairs) {
    for (auto [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= rest.rows() || b >= rest.rows()) throw IndexError("rigid loss: pair out of range");
    }
    return nn::edge_length_deviation(pred, rest, pairs);
}

inline double rigid_loss(const Points& pred, const Points& rest, const std::vector<std::pair<int, int>>& pairs) {
    Tape tape;
    return rigid_loss(tape.constant(pred), rest, pairs).value()(0, 0);
}

/// A character's pose given at every pyramid level plus its geometry.
struct PosedCharacter {
    const CharacterGeometry* geometry = nullptr;
    std::vector<Var> pose;  // per level
};

/// One direction of the round trip A -> B -> A on cached rest encodings;
/// mean L1 against A's pose, summed over levels.
inline Var cycle_term(const CharacterGeometry& a, const RestEncoding& enc_a, const std::vector<Var>& pose_a,
                      const CharacterGeometry& b, const RestEncoding& enc_b, const BoundModel& model,
                      Refinement mode = Refinement::hierarchical, int first_level = 0) {
    const RetargetOutputs there =
        retarget_from_codes(b, enc_b, source_codes(a, enc_a, pose_a, model, first_level), model, mode, first_level);
    const RetargetOutputs back = retarget_from_codes(a, enc_a, source_codes(b, enc_b, there.poses, model, first_level),
                                                     model, mode, first_level);
    Tape& tape = *pose_a[first_level].tape();
    Var total = tape.constant(Matrix::Zero(1, 1));
    for (int k = first_level; k < a.level_count(); ++k) {
        total = nn::add(total, nn::mean_abs(nn::sub(pose_a[k], back.poses[k])));
    }
    return total;
}

/// Round trip in both orderings of the pair.
inline Var cycle_loss(Tape& tape, const PosedCharacter& s, const PosedCharacter& t, const BoundModel& model,
                      Refinement mode = Refinement::hierarchical, int first_level = 0) {
    const RestEncoding enc_s = encode_rest(tape, *s.geometry, model, first_level);
    const RestEncoding enc_t = encode_rest(tape, *t.geometry, model, first_level);
    return nn::add(cycle_term(*s.geometry, enc_s, s.pose, *t.geometry, enc_t, model, mode, first_level),
                   cycle_term(*t.geometry, enc_t, t.pose, *s.geometry, enc_s, model, mode, first_level));
}

/// Mean L1 between a pose and its round-trip reconstruction, summed over the given levels.
inline double cycle_loss(const std::vector<Points>& original, const std::vector<Points>& reconstructed) {
    if (original.size() != reconstructed.size()) throw ShapeError("cycle loss: level counts differ");
    double total = 0.0;
    for (std::size_t k = 0; k < original.size(); ++k) {
        if (original[k].size() == 0 && reconstructed[k].size() == 0) continue;
        if (original[k].rows() != reconstructed[k].rows()) throw ShapeError("cycle loss: vertex counts differ");
        total += (original[k] - reconstructed[k]).cwiseAbs().mean();
    }
    return total;
}

/// Component losses of one step, already reduced over samples.
struct LossTerms {
    std::vector<Var> retarget;  // per level 0..K; levels absent from training stay invalid
    Var skinning;
    Var rigid;
    Var cycle;
};

/// [1 - sum_k w_k] L_ret^0 + sum_k w_k L_ret^k + fixed-coefficient auxiliaries.
inline Var total_loss(Tape& tape, const LossTerms& terms, const LossWeights& weights, double epoch) {
    const std::vector<double> w = weights.level_weights(epoch);
    double coarse = 0.0;
    for (double x : w) coarse += x;
    if (!(coarse < 1.0)) throw ConfigError("coarse-level loss weights must sum below 1");
    Var total = tape.constant(Matrix::Zero(1, 1));
    if (!terms.retarget.empty() && terms.retarget[0].valid()) {
        total = nn::add(total, nn::scale(terms.retarget[0], 1.0 - coarse));
    }
    for (std::size_t k = 1; k < terms.retarget.size(); ++k) {
        if (!terms.retarget[k].valid()) continue;
        if (k - 1 >= w.size()) throw ConfigError("no schedule for level " + std::to_string(k));
        total = nn::add(total, nn::scale(terms.retarget[k], w[k - 1]));
    }
    if (terms.skinning.valid()) total = nn::add(total, nn::scale(terms.skinning, weights.skinning));
    if (terms.rigid.valid()) total = nn::add(total, nn::scale(terms.rigid, weights.rigid));
    if (terms.cycle.valid()) total = nn::add(total, nn::scale(terms.cycle, weights.cycle));
    return total;
}

inline double total_loss(const std::vector<double>& retarget, double skinning, double rigid, double cycle,
                         const LossWeights& weights, double epoch) {
    Tape tape;
    LossTerms terms;
    auto scalar = [&](double v) {
        Matrix m(1, 1);
        m(0, 0) = v;
        return tape.constant(m);
    };
    for (double r : retarget) terms.retarget.push_back(scalar(r));
    terms.skinning = scalar(skinning);
    terms.rigid = scalar(rigid);
    terms.cycle = scalar(cycle);
    return total_loss(tape, terms, weights, epoch).value()(0, 0);
}

}  // namespace hmc

#endif  // HMC_LOSSES_HPP
