#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "hmc/retarget.hpp"
#include "test_util.hpp"

using namespace hmc;

namespace {

ModelConfig small_config(int levels) {
    ModelConfig cfg;
    cfg.levels = levels;
    cfg.parts = 6;
    cfg.embed_dim = 16;
    cfg.encoder_hidden = {12};
    cfg.skinning_hidden = {12};
    cfg.decoder_hidden = 8;
    return cfg;
}

void randomize_decoder(RetargetModel& m, std::mt19937_64& rng) {
    for (auto& level : m.levels) {
        for (auto& layer : level.decoder) {
            layer.weight = test::random_matrix(rng, layer.weight.rows(), layer.weight.cols(), -0.1, 0.1);
            layer.bias = test::random_matrix(rng, 1, layer.bias.cols(), -0.1, 0.1);
        }
    }
}

}  // namespace

TEST(Model, DefaultShapes) {
    std::mt19937_64 rng(1);
    ModelConfig cfg;
    cfg.levels = 1;
    const RetargetModel m = init_model(cfg, 3);
    const TriMesh mesh = test::bumpy_sphere(rng, 2);
    const Adjacency adj = adjacency(mesh);
    const SkinningWeights w = predict_skinning(mesh.vertices, adj, m, 0);
    EXPECT_EQ(w.rows(), 40);
    EXPECT_EQ(w.cols(), mesh.vertex_count());
    EXPECT_LE((w.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_EQ(encode_pose(mesh.vertices, adj, m, 0).cols(), 128);
    const PartTransforms parts = decode_parts(Matrix::Zero(40, 128), joint_positions(w, mesh.vertices), m, 0);
    EXPECT_EQ(parts.positions.rows(), 40);
    EXPECT_EQ(parts.rotations.rows(), 40);
    EXPECT_THROW(predict_skinning(mesh.vertices, adj, m, 1), ShapeError);
}

TEST(Model, NoPartEmpties) {
    std::mt19937_64 rng(2);
    RetargetModel m = init_model(small_config(1), 3);
    m.levels[0].skinning.layers.back().bias(0, 0) = 1e3;
    const TriMesh mesh = test::bumpy_sphere(rng, 2);
    const SkinningWeights w = predict_skinning(mesh.vertices, adjacency(mesh), m, 0);
    EXPECT_LE((w.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_GT(w.rowwise().sum().minCoeff(), 1e-9);
    EXPECT_GT(w.row(0).minCoeff(), 0.99);
    EXPECT_NO_THROW(joint_positions(w, mesh.vertices));
}

TEST(Model, InitIsSeeded) {
    RetargetModel a = init_model(small_config(2), 7), b = init_model(small_config(2), 7), c = init_model(small_config(2), 8);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    bool differs = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(*pa[i].value, *pb[i].value);
        differs = differs || *pa[i].value != *pc[i].value;
    }
    EXPECT_TRUE(differs);
}

TEST(PartCode, Examples) {
    Matrix ws(2, 3), e(3, 2), er(3, 2), wt(2, 4), et(4, 2);
    ws << 1, 0, 0, 0, 0.5, 0.5;
    e << 1, 2, 3, 4, 5, 6;
    er << 0, 0, 1, 1, 1, 1;
    wt = Matrix::Constant(2, 4, 0.5);
    et = Matrix::Ones(4, 2);
    Matrix expected(2, 2);
    expected << 1 - 2, 2 - 2, 3 - 2, 4 - 2;
    EXPECT_EQ(part_deformation_code(ws, e, er, wt, et), expected);
    EXPECT_EQ(part_deformation_code(ws, er, er, Matrix::Zero(2, 4), et), Matrix::Zero(2, 2));
    EXPECT_THROW(part_deformation_code(ws, e, er, Matrix::Zero(3, 4), et), ShapeError);
}

TEST(Retarget, UntrainedModelReturnsTargetRest) {
    std::mt19937_64 rng(2);
    const CharacterGeometry src = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const RetargetModel m = init_model(small_config(2), 4);
    Points posed = src.rest(0);
    posed.col(0) *= 1.3;
    const std::vector<Points> out = retarget_full(posed, src, dst, m);
    ASSERT_EQ(out.size(), 2u);
    for (int k = 0; k < 2; ++k) EXPECT_LE((out[k] - dst.rest(k)).cwiseAbs().maxCoeff(), 1e-12) << k;
    const std::vector<Points> mixed = retarget_full(posed, src, dst, m, Refinement::mix);
    EXPECT_LE((mixed[1] - dst.rest(1)).cwiseAbs().maxCoeff(), 1e-12);
    const Points expected = 0.5 * (dst.rest(0) + dst.pyramid.up[0].matrix * dst.rest(1));
    EXPECT_LE((mixed[0] - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Retarget, PermutationEquivariant) {
    std::mt19937_64 rng(3);
    const TriMesh s = test::bumpy_sphere(rng, 1), t = test::bumpy_sphere(rng, 1);
    std::vector<int> perm(static_cast<std::size_t>(t.vertex_count()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const CharacterGeometry src = make_geometry(s, 0.6, 0);
    const CharacterGeometry dst = make_geometry(t, 0.6, 0);
    const CharacterGeometry dst_p = make_geometry(permute_vertices(t, perm), 0.6, 0);
    RetargetModel m = init_model(small_config(1), 5);
    randomize_decoder(m, rng);
    Points posed = s.vertices;
    posed.col(1) *= 0.8;
    const Points a = retarget_full(posed, src, dst, m).front();
    const Points b = retarget_full(posed, src, dst_p, m).front();
    for (int i = 0; i < t.vertex_count(); ++i) EXPECT_LE((b.row(i) - a.row(perm[i])).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Retarget, SingleLevelMatchesRetargetLevel) {
    std::mt19937_64 rng(4);
    const CharacterGeometry src = make_geometry(test::bumpy_sphere(rng, 1), 0.6, 0);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 1), 0.6, 0);
    RetargetModel m = init_model(small_config(1), 6);
    randomize_decoder(m, rng);
    Points posed = src.rest(0) + test::random_points(rng, src.rest(0).rows(), -0.05, 0.05);
    const auto [parts, w] = retarget_level(0, posed, src, dst, m);
    const Points expected = lbs_apply(dst.rest(0), w, joint_positions(w, dst.rest(0)), parts);
    EXPECT_LE((retarget_full(posed, src, dst, m).front() - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Retarget, TwoLevelsMatchHandExpansion) {
    std::mt19937_64 rng(5);
    const CharacterGeometry src = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    RetargetModel m = init_model(small_config(2), 7);
    randomize_decoder(m, rng);
    std::vector<Points> posed = push_down(src.pyramid, src.rest(0) * 1.1);
    const std::vector<Points> out = retarget_full(posed, src, dst, m);

    const auto [p1, w1] = retarget_level(1, posed[1], src, dst, m);
    const auto [p0, w0] = retarget_level(0, posed[0], src, dst, m);
    EXPECT_LE((out[1] - lbs_apply(dst.rest(1), w1, joint_positions(w1, dst.rest(1)), p1)).cwiseAbs().maxCoeff(), 1e-10);
    const HierarchicalRep rep =
        concat_representation(0, p0, w0, joint_positions(w0, dst.rest(0)), &dst.pyramid.up[0],
                              concat_representation(1, p1, w1, joint_positions(w1, dst.rest(1)), nullptr, {}));
    EXPECT_LE((out[0] - hierarchical_pose(dst.rest(0), rep)).cwiseAbs().maxCoeff(), 1e-10);

    const std::vector<Points> mixed = retarget_full(posed, src, dst, m, Refinement::mix);
    const Points own = lbs_apply(dst.rest(0), w0, joint_positions(w0, dst.rest(0)), p0);
    const Points lifted = dst.pyramid.up[0].matrix * mixed[1];
    EXPECT_LE((mixed[0] - 0.5 * (own + lifted)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Retarget, FirstLevelSkipsFinerLevels) {
    std::mt19937_64 rng(6);
    const CharacterGeometry src = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    RetargetModel m = init_model(small_config(2), 8);
    randomize_decoder(m, rng);
    const std::vector<Points> posed = push_down(src.pyramid, src.rest(0));
    const std::vector<Points> full = retarget_full(posed, src, dst, m);
    const std::vector<Points> top = retarget_full(posed, src, dst, m, Refinement::hierarchical, 1);
    EXPECT_EQ(top[0].size(), 0);
    EXPECT_EQ(top[1], full[1]);
    EXPECT_THROW(retarget_full(posed, src, dst, m, Refinement::hierarchical, 2), ShapeError);
    EXPECT_THROW(retarget_full(std::vector<Points>{posed[0]}, src, dst, m), ShapeError);
}

TEST(Retarget, DepthMismatch) {
    std::mt19937_64 rng(7);
    const CharacterGeometry src = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 0);
    const RetargetModel m = init_model(small_config(2), 9);
    EXPECT_THROW(retarget_full(src.rest(0), src, dst, m), ShapeError);
}

TEST(Retarget, MotionKeepsFrameCount) {
    std::mt19937_64 rng(8);
    const TriMesh s = test::bumpy_sphere(rng, 1);
    const CharacterGeometry src = make_geometry(s, 0.6, 0);
    const CharacterGeometry dst = make_geometry(test::bumpy_sphere(rng, 1), 0.6, 0);
    const RetargetModel m = init_model(small_config(1), 10);
    MotionSequence motion;
    motion.faces = s.faces;
    for (int f = 0; f < 3; ++f) motion.frames.push_back(s.vertices * (1.0 + 0.1 * f));
    const MotionSequence out = retarget_motion(motion, src, dst, m);
    EXPECT_EQ(out.frames.size(), 3u);
    EXPECT_EQ(out.faces, dst.pyramid.levels[0].faces);
    EXPECT_LE((out.frames[2] - dst.rest(0)).cwiseAbs().maxCoeff(), 1e-12);
}
