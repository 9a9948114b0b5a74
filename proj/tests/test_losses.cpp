#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hmc/losses.hpp"
#include "test_util.hpp"

using namespace hmc;

TEST(Schedule, EndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(schedule_weight(0.6, 0.4, 0.0, 400.0), 0.6);
    EXPECT_DOUBLE_EQ(schedule_weight(0.6, 0.4, 400.0, 400.0), 0.4);
    EXPECT_DOUBLE_EQ(schedule_weight(0.6, 0.4, 200.0, 400.0), 0.5);
    EXPECT_THROW(schedule_weight(0.6, 0.4, -1.0, 400.0), DomainError);
    EXPECT_THROW(schedule_weight(0.6, 0.4, 401.0, 400.0), DomainError);
}

TEST(Schedule, Validation) {
    LossWeights w;
    EXPECT_NO_THROW(w.validate());
    w.schedule = {{0.6, 0.4}, {0.5, 0.5}};
    EXPECT_THROW(w.validate(), ConfigError);
    w.schedule = {{1.2, 0.4}};
    EXPECT_THROW(w.validate(), ConfigError);
}

TEST(LayerLoss, UniformOffset) {
    std::mt19937_64 rng(1);
    const Points gt = test::random_points(rng, 30);
    Points pred = gt;
    pred.col(0).array() += 1.0;
    const Matrix j = test::random_matrix(rng, 5, 6);
    EXPECT_NEAR(layer_retarget_loss(gt, pred, j, j), 1.0 / 3.0, 1e-15);
    Matrix j2 = j;
    j2.col(4).array() += 0.6;
    EXPECT_NEAR(layer_retarget_loss(gt, gt, j, j2), 0.1, 1e-15);
    EXPECT_THROW(layer_retarget_loss(gt, Points(gt.topRows(29)), j, j), ShapeError);
}

TEST(Kl, Examples) {
    Eigen::VectorXd p(2), q(2);
    p << 1, 0;
    q << 0.5, 0.5;
    EXPECT_NEAR(kl_div(p, q), std::log(2.0), 1e-15);
    EXPECT_EQ(kl_div(q, q), 0.0);
    q << 0, 1;
    EXPECT_NEAR(kl_div(p, q), std::log(1e12), 1e-9);
    EXPECT_THROW(kl_div(p, Eigen::VectorXd::Constant(3, 1.0 / 3)), ShapeError);
    EXPECT_THROW(kl_div(Eigen::VectorXd::Constant(2, 0.7), p), DomainError);
}

TEST(Kl, ClosedFormAndNonNegative) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd p(6), q(6);
        for (int i = 0; i < 6; ++i) {
            p(i) = u(rng);
            q(i) = u(rng);
        }
        p /= p.sum();
        q /= q.sum();
        const double expected = (p.array() * (p.array() / q.array()).log()).sum();
        EXPECT_NEAR(kl_div(p, q), expected, 1e-13);
        EXPECT_GE(kl_div(p, q), 0.0);
    }
}

TEST(Match, RecoversPermutation) {
    std::mt19937_64 rng(3);
    const Matrix gt = test::random_weights(rng, 6, 50);
    Matrix sharp = gt.array().pow(4).matrix();
    for (Eigen::Index i = 0; i < sharp.cols(); ++i) sharp.col(i) /= sharp.col(i).sum();
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix pred(6, 50);
    for (int j = 0; j < 6; ++j) pred.row(j) = sharp.row(perm[j]);
    EXPECT_EQ(match_gt_joints(pred, sharp), perm);
    EXPECT_EQ(match_gt_joints_covering(pred, sharp), perm);
}

TEST(Match, SingleJoint) {
    std::mt19937_64 rng(4);
    const Matrix pred = test::random_weights(rng, 5, 20);
    EXPECT_EQ(match_gt_joints(pred, Matrix::Ones(1, 20)), std::vector<int>(5, 0));
    EXPECT_EQ(match_gt_joints_covering(pred, Matrix::Ones(1, 20)), std::vector<int>(5, 0));
}

TEST(Match, ExhaustiveOracle) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const Matrix pred = test::random_weights(rng, 7, 25);
        const Matrix gt = test::random_weights(rng, 4, 25);
        const std::vector<int> got = match_gt_joints(pred, gt);
        const Matrix kl = part_joint_kl(pred, gt);
        for (int j = 0; j < 7; ++j) {
            const Eigen::VectorXd p = pred.row(j).transpose() / pred.row(j).sum();
            int best = -1;
            double best_kl = std::numeric_limits<double>::infinity();
            for (int m = 0; m < 4; ++m) {
                const Eigen::VectorXd q = gt.row(m).transpose() / gt.row(m).sum();
                const double d = kl_div(p, q);
                EXPECT_NEAR(kl(j, m), d, 1e-12);
                if (d < best_kl) {
                    best_kl = d;
                    best = m;
                }
            }
            EXPECT_EQ(got[j], best) << "part " << j;
        }
    }
}

TEST(Match, CoveringClaimsEveryJoint) {
    std::mt19937_64 rng(6);
    Matrix gt = Matrix::Zero(3, 30);
    for (int i = 0; i < 30; ++i) gt(i / 10, i) = 1.0;
    gt = (gt.array() + 0.01).matrix();
    for (Eigen::Index i = 0; i < gt.cols(); ++i) gt.col(i) /= gt.col(i).sum();
    Matrix pred(8, 30);
    for (int j = 0; j < 8; ++j) pred.row(j) = gt.row(0) + 0.01 * test::random_matrix(rng, 1, 30, 0.0, 1.0);
    EXPECT_EQ(match_gt_joints(pred, gt), std::vector<int>(8, 0));
    const std::vector<int> cover = match_gt_joints_covering(pred, gt);
    for (int m = 0; m < 3; ++m) EXPECT_NE(std::find(cover.begin(), cover.end(), m), cover.end()) << m;
    EXPECT_EQ(std::count(cover.begin(), cover.end(), 0), 6);

    const Matrix few = test::random_weights(rng, 2, 30);
    const std::vector<int> two = match_gt_joints_covering(few, gt);
    EXPECT_NE(two[0], two[1]);
}

TEST(SkinningLoss, ZeroWhenPredictionMatches) {
    std::mt19937_64 rng(7);
    Matrix gt = test::random_weights(rng, 5, 40).array().pow(3).matrix();
    for (Eigen::Index i = 0; i < gt.cols(); ++i) gt.col(i) /= gt.col(i).sum();
    nn::Tape tape;
    SkinningLevels a, b;
    a.predicted = {tape.constant(gt)};
    a.ground_truth = {gt};
    b.predicted = {tape.constant(gt)};
    b.ground_truth = {gt};
    EXPECT_LE(std::abs(skinning_similarity_loss(a, b).value()(0, 0)), 1e-12);
    b.ground_truth = {Matrix()};
    EXPECT_LE(std::abs(skinning_similarity_loss(a, b).value()(0, 0)), 1e-12);
    SkinningLevels c;
    c.predicted = {tape.constant(test::random_weights(rng, 5, 40))};
    EXPECT_GT(skinning_similarity_loss(a, c).value()(0, 0), 0.0);
    SkinningLevels d;
    d.predicted = {tape.constant(gt), tape.constant(gt)};
    EXPECT_THROW(skinning_similarity_loss(a, d), ShapeError);
}

TEST(RigidLoss, ScaleByTwoGivesMeanEdgeLength) {
    std::mt19937_64 rng(8);
    const TriMesh m = test::bumpy_sphere(rng, 1);
    const auto pairs = edges(m);
    double mean = 0.0;
    for (auto [a, b] : pairs) mean += (m.vertex(a) - m.vertex(b)).norm();
    mean /= static_cast<double>(pairs.size());
    EXPECT_NEAR(rigid_loss(Points(2.0 * m.vertices), m.vertices, pairs), mean, 1e-12);
    const Eigen::Matrix3d r = test::random_rotation(rng);
    EXPECT_LE(rigid_loss(test::transform(m.vertices, r, test::random_vec(rng)), m.vertices, pairs), 1e-12);
    EXPECT_THROW(rigid_loss(m.vertices, m.vertices, {{0, m.vertex_count()}}), IndexError);
}

TEST(CycleLoss, PlainValues) {
    const std::vector<Points> a{Points::Zero(4, 3), Points::Ones(2, 3)};
    std::vector<Points> b = a;
    EXPECT_EQ(cycle_loss(a, b), 0.0);
    b[1].col(2).array() += 3.0;
    EXPECT_DOUBLE_EQ(cycle_loss(a, b), 1.0);
    EXPECT_THROW(cycle_loss(a, std::vector<Points>{a[0]}), ShapeError);
}

TEST(CycleLoss, ZeroForRestPosesUnderUntrainedModel) {
    std::mt19937_64 rng(9);
    const CharacterGeometry ga = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    const CharacterGeometry gb = make_geometry(test::bumpy_sphere(rng, 2), 0.6, 1);
    ModelConfig cfg;
    cfg.parts = 6;
    cfg.embed_dim = 16;
    const RetargetModel model = init_model(cfg, 1);
    nn::Tape tape;
    const BoundModel bound = bind_model(tape, model, true);
    PosedCharacter a{&ga, {tape.constant(ga.rest(0)), tape.constant(ga.rest(1))}};
    PosedCharacter b{&gb, {tape.constant(gb.rest(0)), tape.constant(gb.rest(1))}};
    EXPECT_LE(cycle_loss(tape, a, b, bound).value()(0, 0), 1e-12);
    PosedCharacter moved{&ga, {tape.constant(ga.rest(0) * 1.2), tape.constant(ga.rest(1) * 1.2)}};
    EXPECT_GT(cycle_loss(tape, moved, b, bound).value()(0, 0), 0.0);
}

TEST(TotalLoss, Coefficients) {
    const LossWeights w;
    EXPECT_NEAR(total_loss({1.0, 2.0}, 3.0, 4.0, 5.0, w, 0.0), 0.4 * 1 + 0.6 * 2 + 0.1 * 3 + 0.01 * 4 + 5, 1e-14);
    EXPECT_NEAR(total_loss({1.0, 2.0}, 0.0, 0.0, 0.0, w, 400.0), 0.6 * 1 + 0.4 * 2, 1e-14);
    EXPECT_NEAR(total_loss({1.0, 2.0}, 0.0, 0.0, 0.0, w, 200.0), 1.5, 1e-14);
    EXPECT_NEAR(total_loss({7.0}, 0.0, 0.0, 0.0, w, 100.0), 7.0 * (1.0 - 0.55), 1e-14);
    EXPECT_THROW(total_loss({1.0, 2.0, 3.0}, 0, 0, 0, w, 0.0), ConfigError);
}
