#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <limits>
#include <random>

#include "doctest.h"
#include "hdm/errors.hpp"
#include "hdm/eval.hpp"
#include "hdm/geom.hpp"

using namespace hdm;

namespace {

Mat3 random_rotation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 axis(u(rng), u(rng), u(rng));
    while (axis.norm() < 1e-6) axis = Vec3(u(rng), u(rng), u(rng));
    std::uniform_real_distribution<double> ang(-180.0, 180.0);
    return rot_axis_angle(axis.normalized(), ang(rng));
}

}  // namespace

TEST_CASE("weighted_kabsch recovers random noiseless rigid motions") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int trial = 0; trial < 30; ++trial) {
        RigidTransform gt;
        gt.R = random_rotation(rng);
        gt.t = Vec3(u(rng), u(rng), u(rng));
        WeightedCorrespondences wc;
        for (int i = 0; i < 100; ++i) {
            const Vec3 p(u(rng), u(rng), u(rng));
            wc.source_pts.push_back(p);
            wc.target_pts.push_back(gt(p));
            wc.weights.push_back(1.0 + 0.5 * (u(rng) > 0));
        }
        const RigidTransform est = weighted_kabsch(wc);
        CHECK(rte(est, gt) < 1e-6);
        CHECK(rre(est, gt) < 1e-6);
    }
}

TEST_CASE("weighted_kabsch beats an exhaustive rotation grid on small instances") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> w(0.2, 2.0);
    for (int trial = 0; trial < 5; ++trial) {
        WeightedCorrespondences wc;
        for (int i = 0; i < 6; ++i) {
            wc.source_pts.emplace_back(u(rng), u(rng), u(rng));
            wc.target_pts.emplace_back(u(rng), u(rng), u(rng));
            wc.weights.push_back(w(rng));
        }
        const RigidTransform est = weighted_kabsch(wc);
        const double est_obj = kabsch_objective(wc, est);

        // Optimal translation is closed-form per rotation, so the oracle
        // only has to search rotation space.
        double wsum = 0.0;
        Vec3 cs = Vec3::Zero(), ct = Vec3::Zero();
        for (std::size_t i = 0; i < wc.source_pts.size(); ++i) {
            cs += wc.weights[i] * wc.source_pts[i];
            ct += wc.weights[i] * wc.target_pts[i];
            wsum += wc.weights[i];
        }
        cs /= wsum;
        ct /= wsum;

        double grid_best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < 60; ++a)
            for (int b = 0; b <= 30; ++b)
                for (int c = 0; c < 60; ++c) {
                    const Mat3 R = rot_z(a * 6.0) * rot_axis_angle(Vec3::UnitY(), b * 6.0) *
                                   rot_z(c * 6.0);
                    RigidTransform T;
                    T.R = R;
                    T.t = ct - R * cs;
                    grid_best = std::min(grid_best, kabsch_objective(wc, T));
                }
        CHECK(est_obj <= grid_best + 1e-9);
    }
}

TEST_CASE("weighted_kabsch corrects reflections on planar degenerate inputs") {
    // Points in a plane invite a det=-1 solution; the result must stay a
    // proper rotation.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    RigidTransform gt;
    gt.R = rot_z(137.0);
    gt.t = Vec3(1.0, -2.0, 0.5);
    WeightedCorrespondences wc;
    for (int i = 0; i < 40; ++i) {
        const Vec3 p(u(rng), u(rng), 0.0);
        wc.source_pts.push_back(p);
        wc.target_pts.push_back(gt(p));
        wc.weights.push_back(1.0);
    }
    const RigidTransform est = weighted_kabsch(wc);
    CHECK(is_proper_rotation(est.R));
    CHECK(rre(est, gt) < 1e-6);
}

TEST_CASE("weighted_kabsch rejects degenerate inputs") {
    WeightedCorrespondences wc;
    CHECK_THROWS_AS(weighted_kabsch(wc), DegenerateInput);

    // All weights zero.
    for (int i = 0; i < 4; ++i) {
        wc.source_pts.emplace_back(i, 0, 0);
        wc.target_pts.emplace_back(i, 1, 0);
        wc.weights.push_back(0.0);
    }
    CHECK_THROWS_AS(weighted_kabsch(wc), DegenerateInput);

    // All points coincident: rank-0 cross covariance.
    WeightedCorrespondences col;
    for (int i = 0; i < 4; ++i) {
        col.source_pts.emplace_back(1.0, 2.0, 3.0);
        col.target_pts.emplace_back(4.0, 5.0, 6.0);
        col.weights.push_back(1.0);
    }
    CHECK_THROWS_AS(weighted_kabsch(col), DegenerateInput);
}

TEST_CASE("mismatched correspondence arrays throw") {
    WeightedCorrespondences wc;
    wc.source_pts.emplace_back(0, 0, 0);
    wc.target_pts.emplace_back(1, 0, 0);
    wc.target_pts.emplace_back(2, 0, 0);
    wc.weights.push_back(1.0);
    CHECK_THROWS_AS(weighted_kabsch(wc), DimensionMismatch);
}

TEST_CASE("compose and invert behave like SE(3)") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    RigidTransform A, B;
    A.R = random_rotation(rng);
    A.t = Vec3(u(rng), u(rng), u(rng));
    B.R = random_rotation(rng);
    B.t = Vec3(u(rng), u(rng), u(rng));

    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK((compose(A, B)(p) - A(B(p))).norm() == doctest::Approx(0.0).epsilon(1e-12));

    const RigidTransform I = compose(A, invert(A));
    CHECK((I.R - Mat3::Identity()).norm() < 1e-12);
    CHECK(I.t.norm() < 1e-12);
}

TEST_CASE("rotation helpers") {
    const Mat3 R = rot_z(90.0);
    CHECK((R * Vec3::UnitX() - Vec3::UnitY()).norm() < 1e-12);
    CHECK(is_proper_rotation(R));
    CHECK((rot_axis_angle(Vec3::UnitZ(), 90.0) - R).norm() < 1e-12);
    Mat3 bad = Mat3::Identity();
    bad(0, 0) = -1.0;  // reflection
    CHECK(!is_proper_rotation(bad));
}

TEST_CASE("apply transforms every point") {
    RigidTransform T;
    T.R = rot_z(180.0);
    T.t = Vec3(1.0, 0.0, 0.0);
    PointCloud c;
    c.points = {{1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}};
    const PointCloud out = apply(T, c);
    CHECK((out.points[0] - Vec3(0.0, 0.0, 0.0)).norm() < 1e-12);
    CHECK((out.points[1] - Vec3(1.0, -2.0, 0.0)).norm() < 1e-12);
}
