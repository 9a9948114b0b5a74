#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "hmc/synth.hpp"
#include "test_util.hpp"

using namespace hmc;

TEST(Character, Deterministic) {
    const CharacterSample a = make_character(StyleParams{}, 11), b = make_character(StyleParams{}, 11);
    EXPECT_EQ(a.rest.vertices, b.rest.vertices);
    EXPECT_EQ(a.rest.faces, b.rest.faces);
    EXPECT_EQ(a.gt_skinning, b.gt_skinning);
    const CharacterSample c = make_character(StyleParams{}, 12);
    EXPECT_NE(a.rest.vertices, c.rest.vertices);
}

TEST(Character, BudgetAndWeights) {
    for (int budget : {300, 500, 1000}) {
        StyleParams s;
        s.vertex_budget = budget;
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const CharacterSample c = make_character(s, seed);
            EXPECT_NEAR(c.rest.vertex_count(), budget, 0.1 * budget) << budget;
            EXPECT_NO_THROW(validate(c.rest));
            EXPECT_EQ(c.gt_skinning.rows(), c.gt_skeleton.joint_count());
            EXPECT_EQ(c.gt_skinning.cols(), c.rest.vertex_count());
            EXPECT_LE((c.gt_skinning.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
            EXPECT_GE(c.gt_skinning.minCoeff(), 0.0);
            const Vec3 ext = c.rest.vertices.colwise().maxCoeff() - c.rest.vertices.colwise().minCoeff();
            EXPECT_NEAR(ext.norm(), 1.0, 1e-12);
        }
    }
}

TEST(Character, ArmPairsChangeTopology) {
    StyleParams s;
    s.arm_pairs = 2;
    const CharacterSample c = make_character(s, 4);
    EXPECT_EQ(c.gt_skeleton.joint_count(), 7 + 8);
    EXPECT_GE(c.gt_skeleton.index_of("forearm1_r"), 0);
    s.arm_pairs = -1;
    EXPECT_THROW(make_character(s, 4), DomainError);
}

TEST(Posing, ZeroPoseIsRestExactly) {
    const CharacterSample c = make_character(StyleParams{}, 5);
    EXPECT_EQ(pose_vertices(c, PoseSpec::zero(c.gt_skeleton.joint_count())), c.rest.vertices);
}

TEST(Posing, RootRotationIsRigid) {
    std::mt19937_64 rng(6);
    const CharacterSample c = make_character(StyleParams{}, 6);
    PoseSpec pose = PoseSpec::zero(c.gt_skeleton.joint_count());
    pose.root_rotation = Vec3(0.3, -1.1, 0.4);
    pose.root_translation = Vec3(0.1, 0.2, -0.3);
    const Points expected = test::transform(c.rest.vertices, rotation_matrix(pose.root_rotation), pose.root_translation);
    EXPECT_LE((pose_vertices(c, pose) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Posing, ElbowBendMovesOnlyForearmWeightedVertices) {
    const CharacterSample c = make_character(StyleParams{}, 7);
    const int fore = c.gt_skeleton.index_of("forearm0_l");
    ASSERT_GE(fore, 0);
    PoseSpec pose = PoseSpec::zero(c.gt_skeleton.joint_count());
    pose.rotations.row(fore) << 0, 1.2, 0;
    const Points moved = pose_vertices(c, pose);
    int far_moves = 0;
    for (int i = 0; i < c.rest.vertex_count(); ++i) {
        const double d = (moved.row(i) - c.rest.vertices.row(i)).norm();
        EXPECT_LE(d, 2.0 * c.gt_skinning(fore, i) + 1e-15) << i;
        if (c.gt_skinning(fore, i) > 0.9 && d > 0.01) ++far_moves;
    }
    EXPECT_GT(far_moves, 10);
}

TEST(Posing, BadPoses) {
    const CharacterSample c = make_character(StyleParams{}, 8);
    PoseSpec short_pose = PoseSpec::zero(c.gt_skeleton.joint_count() - 1);
    EXPECT_THROW(pose_vertices(c, short_pose), ShapeError);
    PoseSpec big = PoseSpec::zero(c.gt_skeleton.joint_count());
    big.rotations(0, 0) = 4.0;
    EXPECT_THROW(pose_vertices(c, big), DomainError);
    big.rotations(0, 0) = std::nan("");
    EXPECT_THROW(pose_vertices(c, big), DomainError);
}

TEST(Fk, ZeroPoseKeepsHeads) {
    const CharacterSample c = make_character(StyleParams{}, 9);
    const FkResult fk = forward_kinematics(c.gt_skeleton, PoseSpec::zero(c.gt_skeleton.joint_count()));
    EXPECT_LE((fk.heads - fk.rest_heads).cwiseAbs().maxCoeff(), 1e-15);
    for (const auto& r : fk.rotations) EXPECT_EQ(r, Eigen::Matrix3d::Identity());
}

TEST(Dataset, CountsAndSplits) {
    const Dataset d = make_dataset(4, 20, 3);
    EXPECT_EQ(d.character_count(), 4);
    EXPECT_EQ(d.pose_count(), 20);
    EXPECT_EQ(d.test_poses.size(), 4u);
    EXPECT_EQ(d.train_poses.size(), 16u);
    std::vector<int> all = d.train_poses;
    all.insert(all.end(), d.test_poses.begin(), d.test_poses.end());
    std::sort(all.begin(), all.end());
    for (int p = 0; p < 20; ++p) EXPECT_EQ(all[p], p);
    for (int c = 0; c < 4; ++c) {
        for (int p = 0; p < 20; ++p) EXPECT_EQ(d.posed[c][p], pose_vertices(d.characters[c], d.poses[p]));
    }
    EXPECT_THROW(make_dataset(0, 20, 3), DomainError);
}

TEST(Dataset, DeterministicSplitHash) {
    const Dataset a = make_dataset(2, 10, 42), b = make_dataset(2, 10, 42), c = make_dataset(2, 10, 43);
    EXPECT_EQ(split_hash(a.train_poses, a.test_poses), split_hash(b.train_poses, b.test_poses));
    EXPECT_EQ(a.posed, b.posed);
    EXPECT_NE(a.character_seeds, c.character_seeds);
    EXPECT_NE(split_hash({0, 1}, {2}), split_hash({0}, {1, 2}));
}

TEST(Dataset, SaveLoadRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "hmc_test_dataset";
    std::filesystem::remove_all(dir);
    const Dataset d = make_dataset(2, 6, 9);
    save_dataset(d, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "manifest.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir / pose_file(1, 5)));
    const Dataset back = load_dataset(dir);
    EXPECT_EQ(back.train_poses, d.train_poses);
    EXPECT_EQ(back.test_poses, d.test_poses);
    EXPECT_EQ(back.posed, d.posed);

    std::ofstream(dir / "manifest.txt", std::ios::app) << "test=0\n";
    EXPECT_THROW(load_dataset(dir), ConfigError);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_dataset(dir), IoError);
}
