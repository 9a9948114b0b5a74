#include <gtest/gtest.h>

#include <random>

#include "hmc/geometry.hpp"
#include "test_util.hpp"

using namespace hmc;

TEST(ClosestPoint, VertexCase) {
    const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
    const BaryHit h = closest_point_on_triangle(a, a, b, c);
    EXPECT_EQ(h.coords, Vec3(1, 0, 0));
    EXPECT_EQ(h.point, a);
}

TEST(ClosestPoint, CentroidCase) {
    const Vec3 a(0, 0, 0), b(3, 0, 0), c(0, 3, 0);
    const BaryHit h = closest_point_on_triangle((a + b + c) / 3.0, a, b, c);
    EXPECT_LE((h.coords - Vec3::Constant(1.0 / 3.0)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((h.point - Vec3(1, 1, 0)).norm(), 1e-12);
}

TEST(ClosestPoint, AbovePlaneProjectsOntoHypotenuse) {
    const BaryHit h = closest_point_on_triangle(Vec3(2, 2, 5), Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(0, 4, 0));
    EXPECT_LE((h.point - Vec3(2, 2, 0)).norm(), 1e-12);
    EXPECT_LE((h.coords - Vec3(0, 0.5, 0.5)).norm(), 1e-12);
}

TEST(ClosestPoint, DegenerateTriangleRejected) {
    EXPECT_THROW(closest_point_on_triangle(Vec3::Zero(), Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)), DegenerateError);
    EXPECT_THROW(closest_point_on_triangle(Vec3::Zero(), Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(1, 1, 1)), DegenerateError);
}

// Dense-sampling oracle: the returned distance never exceeds the distance to
// any of 10k points sampled on the closed triangle.
TEST(ClosestPoint, BeatsDenseSampling) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vec3 a = test::random_vec(rng), b = test::random_vec(rng), c = test::random_vec(rng);
        if (is_degenerate_triangle(a, b, c)) continue;
        const Vec3 p = test::random_vec(rng, 2.0);
        const BaryHit h = closest_point_on_triangle(p, a, b, c);
        EXPECT_TRUE((h.coords.array() >= 0.0).all() && (h.coords.array() <= 1.0).all());
        EXPECT_NEAR(h.coords.sum(), 1.0, 1e-9);
        EXPECT_LE((h.coords[0] * a + h.coords[1] * b + h.coords[2] * c - h.point).norm(), 1e-12);
        const double d = std::sqrt(h.distance_sq);
        double best = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 10000; ++s) {
            double x = u(rng), y = u(rng);
            if (x + y > 1.0) {
                x = 1.0 - x;
                y = 1.0 - y;
            }
            best = std::min(best, (p - (a + x * (b - a) + y * (c - a))).norm());
        }
        for (const Vec3& q : {a, b, c, Vec3(0.5 * (a + b)), Vec3(0.5 * (b + c)), Vec3(0.5 * (a + c))}) {
            best = std::min(best, (p - q).norm());
        }
        ASSERT_LE(d, best + 1e-12) << "trial " << trial;
    }
}
