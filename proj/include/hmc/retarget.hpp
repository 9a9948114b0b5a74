#ifndef HMC_RETARGET_HPP
#define HMC_RETARGET_HPP

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hmc/coarsen.hpp"
#include "hmc/deform.hpp"
#include "hmc/error.hpp"
#include "hmc/mesh.hpp"
#include "hmc/nn/layers.hpp"
#include "hmc/nn/ops.hpp"
#include "hmc/nn/optim.hpp"
#include "hmc/nn/tape.hpp"

namespace hmc {

using nn::Tape;
using nn::Var;

struct ModelConfig {
    int levels = 2;  // pyramid levels 0..K, so K + 1
    int parts = 40;
    int embed_dim = 128;
    int feature_dim = 6;
    std::vector<Eigen::Index> encoder_hidden{64, 128};
    std::vector<Eigen::Index> skinning_hidden{64, 64};
    Eigen::Index decoder_hidden = 64;
    /// Scale on the initial skinning output layer; larger gives sharper starting parts.
    double skinning_gain = 30.0;
};

/// Pose encoder, skinning predictor and pose decoder of one pyramid level.
struct LevelParams {
    nn::GraphConvParams encoder;
    nn::GraphConvParams skinning;
    std::vector<nn::DenseLayer> decoder;
};

struct RetargetModel {
    ModelConfig config;
    std::vector<LevelParams> levels;

    int level_count() const { return static_cast<int>(levels.size()); }

    /// Every trainable matrix in a fixed order (checkpoint and optimizer order).
    std::vector<nn::ParamRef> parameters() {
        std::vector<nn::ParamRef> out;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const std::string prefix = "level" + std::to_string(k) + ".";
            auto add = [&](const std::string& name, std::vector<nn::DenseLayer>& layers) {
                for (std::size_t l = 0; l < layers.size(); ++l) {
                    out.push_back({prefix + name + "." + std::to_string(l) + ".weight", &layers[l].weight});
                    out.push_back({prefix + name + "." + std::to_string(l) + ".bias", &layers[l].bias});
                }
            };
            add("encoder", levels[k].encoder.layers);
            add("skinning", levels[k].skinning.layers);
            add("decoder", levels[k].decoder);
        }
        return out;
    }
};

/// Glorot-initialized model whose decoder output layer is zero, so an
/// untrained model decodes every part to the identity at its rest pivot.
inline RetargetModel init_model(const ModelConfig& config, std::uint64_t seed) {
    if (config.levels < 1 || config.parts < 1 || config.embed_dim < 1) {
        throw ConfigError("model needs at least one level, part and embedding channel");
    }
    std::mt19937_64 rng(seed);
    RetargetModel model;
    model.config = config;
    for (int k = 0; k < config.levels; ++k) {
        LevelParams level;
        std::vector<Eigen::Index> enc{config.feature_dim};
        enc.insert(enc.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
        enc.push_back(config.embed_dim);
        level.encoder = nn::make_graph_conv(enc, rng);
        std::vector<Eigen::Index> skin{config.feature_dim};
        skin.insert(skin.end(), config.skinning_hidden.begin(), config.skinning_hidden.end());
        skin.push_back(config.parts);
        level.skinning = nn::make_graph_conv(skin, rng);
        level.skinning.layers.back().weight *= config.skinning_gain;
        level.decoder.push_back(nn::make_dense(config.embed_dim, config.decoder_hidden, rng));
        level.decoder.push_back(nn::make_zero_dense(config.decoder_hidden, 6));
        model.levels.push_back(std::move(level));
    }
    return model;
}

struct BoundLevel {
    nn::BoundLayers encoder;
    nn::BoundLayers skinning;
    nn::BoundLayers decoder;
};

struct BoundModel {
    std::vector<BoundLevel> levels;
    /// Leaves in RetargetModel::parameters() order.
    std::vector<Var> leaves;
};

inline BoundModel bind_model(Tape& tape, const RetargetModel& model, bool trainable) {
    BoundModel out;
    for (const auto& level : model.levels) {
        BoundLevel b;
        b.encoder = nn::bind(tape, level.encoder.layers, trainable);
        b.skinning = nn::bind(tape, level.skinning.layers, trainable);
        b.decoder = nn::bind(tape, level.decoder, trainable);
        for (const auto* group : {&b.encoder, &b.skinning, &b.decoder}) {
            for (const auto& layer : *group) {
                out.leaves.push_back(layer.weight);
                out.leaves.push_back(layer.bias);
            }
        }
        out.levels.push_back(std::move(b));
    }
    return out;
}

/// Rest pyramid of one character with per-level adjacency and edge lists.
struct CharacterGeometry {
    MeshPyramid pyramid;
    std::vector<Adjacency> adjacency;
    std::vector<std::vector<std::pair<int, int>>> edges;

    int level_count() const { return static_cast<int>(pyramid.levels.size()); }
    const Points& rest(int level) const { return pyramid.levels[level].vertices; }
    const SparseMatrix& aggregation(int level) const { return adjacency[level].aggregation; }
};

inline CharacterGeometry make_geometry(const TriMesh& rest, double ratio, int depth) {
    CharacterGeometry g;
    g.pyramid = build_pyramid(rest, ratio, depth);
    for (const auto& mesh : g.pyramid.levels) {
        g.adjacency.push_back(adjacency(mesh));
        g.edges.push_back(edges(mesh));
    }
    return g;
}

/// Per-vertex input: position and centroid-relative position.
inline Var vertex_features(const Var& positions) {
    return nn::concat_cols(positions, nn::center_rows(positions));
}

inline Var encode_pose(const Var& positions, const SparseMatrix& agg, const BoundLevel& level) {
    return nn::graph_conv_forward(vertex_features(positions), agg, level.encoder);
}

/// Uniform share mixed into predicted weights so no part ever empties.
inline constexpr double skinning_floor = 1e-6;

/// Column-stochastic parts x vertices weights.
inline Var predict_skinning(const Var& rest, const SparseMatrix& agg, const BoundLevel& level) {
    const Var soft = nn::softmax_columns(nn::transpose(nn::graph_conv_forward(vertex_features(rest), agg, level.skinning)));
    const Matrix uniform = Matrix::Constant(soft.rows(), soft.cols(), skinning_floor / static_cast<double>(soft.rows()));
    return nn::add(nn::scale(soft, 1.0 - skinning_floor), soft.tape()->constant(uniform));
}

/// W_S (E_S - Ē_S) - W_T Ē_T, one row per part.
inline Var part_deformation_code(const Var& w_source, const Var& e_source, const Var& e_source_rest,
                                 const Var& w_target, const Var& e_target_rest) {
    if (w_source.rows() != w_target.rows()) throw ShapeError("source and target part counts differ");
    if (e_source.cols() != e_target_rest.cols()) throw ShapeError("embedding widths differ");
    return nn::sub(nn::matmul(w_source, nn::sub(e_source, e_source_rest)), nn::matmul(w_target, e_target_rest));
}

struct DecodedParts {
    Var positions;  // J x 3, posed pivot
    Var rotations;  // J x 3, axis-angle
    Var matrices;   // J x 9, row-major rotation matrices
};

/// Shared two-layer decoder per part: first three outputs offset the rest
/// pivot, last three are an axis-angle rotation.
inline DecodedParts decode_parts(const Var& code, const Var& rest_pivots, const BoundLevel& level) {
    const Var out = nn::dense_forward(code, level.decoder);
    DecodedParts parts;
    parts.positions = nn::add(rest_pivots, nn::slice_cols(out, 0, 3));
    parts.rotations = nn::slice_cols(out, 3, 3);
    parts.matrices = nn::rodrigues(parts.rotations);
    return parts;
}

/// Tape-resident rest quantities of one character, reused by every sample
/// that involves it.
struct RestEncoding {
    std::vector<Var> embedding;    // Ē per level
    std::vector<Var> weights;      // W per level
    std::vector<Var> pivots;       // rest pivots per level
    std::vector<Var> target_term;  // W Ē per level
    /// Stacked [W_k ; lifted coarser] (column-normalized) and pivots, for k < K.
    std::vector<Var> stacked_weights;
    std::vector<Var> stacked_pivots;
};

inline RestEncoding encode_rest(Tape& tape, const CharacterGeometry& geom, const BoundModel& model,
                                int first_level = 0) {
    const int levels = geom.level_count();
    if (static_cast<int>(model.levels.size()) != levels) {
        throw ShapeError("model has " + std::to_string(model.levels.size()) + " levels, pyramid has " +
                         std::to_string(levels));
    }
    RestEncoding enc;
    enc.embedding.resize(levels);
    enc.weights.resize(levels);
    enc.pivots.resize(levels);
    enc.target_term.resize(levels);
    enc.stacked_weights.resize(levels);
    enc.stacked_pivots.resize(levels);
    for (int k = first_level; k < levels; ++k) {
        const Var rest = tape.constant(geom.rest(k));
        enc.embedding[k] = encode_pose(rest, geom.aggregation(k), model.levels[k]);
        enc.weights[k] = predict_skinning(rest, geom.aggregation(k), model.levels[k]);
        enc.pivots[k] = nn::joint_positions(enc.weights[k], geom.rest(k));
        enc.target_term[k] = nn::matmul(enc.weights[k], enc.embedding[k]);
    }
    const int top = levels - 1;
    if (first_level <= top) {
        enc.stacked_weights[top] = enc.weights[top];
        enc.stacked_pivots[top] = enc.pivots[top];
    }
    for (int k = top - 1; k >= first_level; --k) {
        const SparseMatrix& up = geom.pyramid.up[k].matrix;
        const Var lifted = nn::transpose(nn::spmm(up, nn::transpose(enc.stacked_weights[k + 1])));
        enc.stacked_weights[k] = nn::normalize_columns(nn::concat_rows({enc.weights[k], lifted}));
        enc.stacked_pivots[k] = nn::concat_rows({enc.pivots[k], enc.stacked_pivots[k + 1]});
    }
    return enc;
}

/// W_S (E_S - Ē_S) for a posed source, per level.
inline std::vector<Var> source_codes(const CharacterGeometry& geom, const RestEncoding& rest,
                                     const std::vector<Var>& pose_levels, const BoundModel& model,
                                     int first_level = 0) {
    std::vector<Var> out(static_cast<std::size_t>(geom.level_count()));
    for (int k = first_level; k < geom.level_count(); ++k) {
        const Var e = encode_pose(pose_levels[k], geom.aggregation(k), model.levels[k]);
        out[k] = nn::matmul(rest.weights[k], nn::sub(e, rest.embedding[k]));
    }
    return out;
}

enum class Refinement {
    hierarchical,  // flat LBS over concatenated multi-level parts
    mix,           // average of the level's own LBS and the lifted coarser output
};

struct RetargetOutputs {
    std::vector<Var> poses;  // per level; only levels >= first_level are set
    std::vector<DecodedParts> parts;
    int first_level = 0;
};

/// Decodes target part transforms at every level from source codes and
/// poses the target rest meshes, coarsest first.
inline RetargetOutputs retarget_from_codes(const CharacterGeometry& target, const RestEncoding& target_rest,
                                           const std::vector<Var>& codes, const BoundModel& model,
                                           Refinement mode = Refinement::hierarchical, int first_level = 0) {
    const int levels = target.level_count();
    const int top = levels - 1;
    RetargetOutputs out;
    out.first_level = first_level;
    out.poses.resize(levels);
    out.parts.resize(levels);
    for (int k = first_level; k < levels; ++k) {
        const Var code = nn::sub(codes[k], target_rest.target_term[k]);
        out.parts[k] = decode_parts(code, target_rest.pivots[k], model.levels[k]);
    }
    out.poses[top] = nn::lbs(target.rest(top), target_rest.weights[top], target_rest.pivots[top],
                             out.parts[top].positions, out.parts[top].matrices);
    std::vector<Var> positions{out.parts[top].positions};
    std::vector<Var> matrices{out.parts[top].matrices};
    for (int k = top - 1; k >= first_level; --k) {
        if (mode == Refinement::hierarchical) {
            positions.insert(positions.begin(), out.parts[k].positions);
            matrices.insert(matrices.begin(), out.parts[k].matrices);
            out.poses[k] = nn::lbs(target.rest(k), target_rest.stacked_weights[k], target_rest.stacked_pivots[k],
                                   nn::concat_rows(positions), nn::concat_rows(matrices));
        } else {
            const Var own = nn::lbs(target.rest(k), target_rest.weights[k], target_rest.pivots[k],
                                    out.parts[k].positions, out.parts[k].matrices);
            const Var lifted = nn::spmm(target.pyramid.up[k].matrix, out.poses[k + 1]);
            out.poses[k] = nn::scale(nn::add(own, lifted), 0.5);
        }
    }
    return out;
}

/// Full pipeline on one tape: encode both characters, transfer the source
/// pose given at every level onto the target.
inline RetargetOutputs retarget_on_tape(Tape& tape, const CharacterGeometry& source, const CharacterGeometry& target,
                                        const std::vector<Var>& source_pose_levels, const BoundModel& model,
                                        Refinement mode = Refinement::hierarchical, int first_level = 0) {
    if (source.level_count() != target.level_count()) throw ShapeError("pyramids have different depths");
    const RestEncoding src = encode_rest(tape, source, model, first_level);
    const RestEncoding dst = encode_rest(tape, target, model, first_level);
    return retarget_from_codes(target, dst, source_codes(source, src, source_pose_levels, model, first_level), model,
                               mode, first_level);
}

// Plain-value entry points ------------------------------------------------

inline void check_level(const RetargetModel& model, int level) {
    if (level < 0 || level >= model.level_count()) throw ShapeError("level " + std::to_string(level) + " out of range");
}

inline Matrix encode_pose(const Points& vertices, const Adjacency& adj, const RetargetModel& model, int level) {
    check_level(model, level);
    Tape tape;
    const BoundModel bound = bind_model(tape, model, false);
    return encode_pose(tape.constant(vertices), adj.aggregation, bound.levels[level]).value();
}

inline SkinningWeights predict_skinning(const Points& rest, const Adjacency& adj, const RetargetModel& model,
                                        int level) {
    check_level(model, level);
    Tape tape;
    const BoundModel bound = bind_model(tape, model, false);
    return predict_skinning(tape.constant(rest), adj.aggregation, bound.levels[level]).value();
}

inline Matrix part_deformation_code(const Matrix& w_source, const Matrix& e_source, const Matrix& e_source_rest,
                                    const Matrix& w_target, const Matrix& e_target_rest) {
    Tape tape;
    return part_deformation_code(tape.constant(w_source), tape.constant(e_source), tape.constant(e_source_rest),
                                 tape.constant(w_target), tape.constant(e_target_rest))
        .value();
}

inline PartTransforms decode_parts(const Matrix& code, const Points& rest_pivots, const RetargetModel& model,
                                   int level) {
    check_level(model, level);
    Tape tape;
    const BoundModel bound = bind_model(tape, model, false);
    const DecodedParts d = decode_parts(tape.constant(code), tape.constant(rest_pivots), bound.levels[level]);
    PartTransforms parts{d.positions.value(), d.rotations.value()};
    canonicalize(parts);
    return parts;
}

/// One retargeting layer: target part transforms and target skinning at level k.
inline std::pair<PartTransforms, SkinningWeights> retarget_level(int level, const Points& source_pose,
                                                                 const CharacterGeometry& source,
                                                                 const CharacterGeometry& target,
                                                                 const RetargetModel& model) {
    check_level(model, level);
    Tape tape;
    const BoundModel bound = bind_model(tape, model, false);
    const BoundLevel& b = bound.levels[level];
    const Var rest_s = tape.constant(source.rest(level));
    const Var rest_t = tape.constant(target.rest(level));
    const Var w_s = predict_skinning(rest_s, source.aggregation(level), b);
    const Var w_t = predict_skinning(rest_t, target.aggregation(level), b);
    const Var e_s = encode_pose(tape.constant(source_pose), source.aggregation(level), b);
    const Var e_s_rest = encode_pose(rest_s, source.aggregation(level), b);
    const Var e_t_rest = encode_pose(rest_t, target.aggregation(level), b);
    const Var code = part_deformation_code(w_s, e_s, e_s_rest, w_t, e_t_rest);
    const DecodedParts d = decode_parts(code, nn::joint_positions(w_t, target.rest(level)), b);
    PartTransforms parts{d.positions.value(), d.rotations.value()};
    canonicalize(parts);
    return {parts, w_t.value()};
}

/// Retargeted target pose at every pyramid level (index 0 is the full mesh).
inline std::vector<Points> retarget_full(const std::vector<Points>& source_pose_levels, const CharacterGeometry& source,
                                         const CharacterGeometry& target, const RetargetModel& model,
                                         Refinement mode = Refinement::hierarchical, int first_level = 0) {
    if (static_cast<int>(source_pose_levels.size()) != source.level_count()) {
        throw ShapeError("source pose must be given at every pyramid level");
    }
    if (first_level < 0 || first_level >= source.level_count()) throw ShapeError("first level out of range");
    Tape tape;
    const BoundModel bound = bind_model(tape, model, false);
    std::vector<Var> pose(source_pose_levels.size());
    for (int k = first_level; k < source.level_count(); ++k) pose[k] = tape.constant(source_pose_levels[k]);
    const RetargetOutputs out = retarget_on_tape(tape, source, target, pose, bound, mode, first_level);
    std::vector<Points> result(out.poses.size());
    for (int k = first_level; k < static_cast<int>(out.poses.size()); ++k) result[k] = out.poses[k].value();
    return result;
}

inline std::vector<Points> retarget_full(const Points& source_pose, const CharacterGeometry& source,
                                         const CharacterGeometry& target, const RetargetModel& model,
                                         Refinement mode = Refinement::hierarchical, int first_level = 0) {
    return retarget_full(push_down(source.pyramid, source_pose), source, target, model, mode, first_level);
}

/// Frame-by-frame retargeting of a motion; returns full-resolution target frames.
inline MotionSequence retarget_motion(const MotionSequence& motion, const CharacterGeometry& source,
                                      const CharacterGeometry& target, const RetargetModel& model) {
    validate(motion);
    MotionSequence out;
    out.faces = target.pyramid.levels.front().faces;
    for (const auto& frame : motion.frames) out.frames.push_back(retarget_full(frame, source, target, model).front());
    return out;
}

}  // namespace hmc

#endif  // HMC_RETARGET_HPP
