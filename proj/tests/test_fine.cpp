#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "hdm/errors.hpp"
#include "hdm/eval.hpp"
#include "hdm/fine.hpp"
#include "hdm/synth.hpp"

using namespace hdm;

namespace {

PipelineConfig small_cfg() {
    PipelineConfig cfg;
    cfg.input_points = 2048;
    cfg.level_sizes = {256, 128, 64};
    cfg.level_dims = {16, 32, 64};
    return cfg;
}

}  // namespace

TEST_CASE("upsample_confidence reproduces the reciprocal-distance example") {
    // Neighbors at distances 1 and 2 with confidences 1.0 and 0.4:
    // (1*1.0 + 0.5*0.4) / (1 + 0.5) = 0.8.
    std::vector<Vec3> shallow = {{0, 0, 0}};
    std::vector<Vec3> deep = {{1, 0, 0}, {2, 0, 0}};
    const auto up = upsample_confidence(shallow, deep, {1.0, 0.4}, 2);
    REQUIRE(up.size() == 1);
    CHECK(up[0] == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("upsample_confidence is a convex combination of deep confidences") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0), cu(0.0, 1.0);
    std::vector<Vec3> shallow, deep;
    std::vector<double> conf;
    for (int i = 0; i < 30; ++i) shallow.emplace_back(u(rng), u(rng), u(rng));
    for (int i = 0; i < 12; ++i) {
        deep.emplace_back(u(rng), u(rng), u(rng));
        conf.push_back(cu(rng));
    }
    const double lo = *std::min_element(conf.begin(), conf.end());
    const double hi = *std::max_element(conf.begin(), conf.end());
    for (double c : upsample_confidence(shallow, deep, conf, 4)) {
        CHECK(c >= lo - 1e-12);
        CHECK(c <= hi + 1e-12);
    }

    // Coincident shallow/deep point: the clamped reciprocal distance makes
    // that deep confidence dominate completely.
    const auto snap = upsample_confidence({deep[3]}, deep, conf, 4);
    CHECK(snap[0] == doctest::Approx(conf[3]).epsilon(1e-6));
}

TEST_CASE("refine_layer_det leaves an aligned pair at identity") {
    const PipelineConfig cfg = small_cfg();
    ScenePairSpec spec;
    spec.seed = 4;
    spec.noise_sigma_m = 0.0;
    spec.overlap = 1.0;
    spec.rotation_range_deg = 0.0;
    spec.translation_range_m = 0.0;
    const PointCloud cloud = random_subsample(
        voxel_downsample(generate_pair(spec).src, cfg.voxel_size), cfg.input_points, 0);
    const auto pyr = build_pyramid(cloud, cfg, nullptr);

    std::vector<double> mask(pyr[1].size(), 1.0);
    const RefineResult res =
        refine_layer_det(pyr[1], pyr[1], RigidTransform::identity(), mask, cfg);
    CHECK(rte(res.transform, RigidTransform::identity()) < 1e-9);
    CHECK(rre(res.transform, RigidTransform::identity()) < 1e-9);
    for (double c : res.confidences) {
        CHECK(c > 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("refine_layer_det shrinks a small pose error") {
    const PipelineConfig cfg = small_cfg();
    ScenePairSpec spec;
    spec.seed = 6;
    spec.noise_sigma_m = 0.0;
    spec.overlap = 1.0;
    spec.rotation_range_deg = 0.0;
    spec.translation_range_m = 0.0;
    const PointCloud cloud = random_subsample(
        voxel_downsample(generate_pair(spec).src, cfg.voxel_size), cfg.input_points, 0);
    const auto pyr = build_pyramid(cloud, cfg, nullptr);

    RigidTransform off;
    off.R = rot_z(1.5);
    off.t = Vec3(0.25, -0.15, 0.05);
    std::vector<double> mask(pyr[1].size(), 1.0);
    // Source = target pyramid, gt = identity, start from a perturbed pose.
    const RefineResult res =
        refine_layer_det(pyr[1], pyr[1], off, mask, cfg);
    CHECK(rte(res.transform, RigidTransform::identity()) <
          rte(off, RigidTransform::identity()));
}

TEST_CASE("all-ones mask equals no mask") {
    const PipelineConfig cfg = small_cfg();
    ScenePairSpec spec;
    spec.seed = 7;
    const ScenePair pair = generate_pair(spec);
    const PointCloud src = random_subsample(voxel_downsample(pair.src, cfg.voxel_size),
                                            cfg.input_points, 0);
    const PointCloud tgt = random_subsample(voxel_downsample(pair.tgt, cfg.voxel_size),
                                            cfg.input_points, 0);
    const auto ps = build_pyramid(src, cfg, nullptr);
    const auto pt = build_pyramid(tgt, cfg, nullptr);

    std::vector<double> ones(ps[1].size(), 1.0);
    const RefineResult with_ones =
        refine_layer_det(ps[1], pt[1], RigidTransform::identity(), ones, cfg);
    PipelineConfig no_mask_cfg = cfg;
    no_mask_cfg.mask = false;
    const RefineResult without =
        refine_layer_det(ps[1], pt[1], RigidTransform::identity(), ones, no_mask_cfg);
    CHECK((with_ones.transform.R - without.transform.R).norm() < 1e-12);
    CHECK((with_ones.transform.t - without.transform.t).norm() < 1e-12);
}

TEST_CASE("point_to_plane_polish converges on structured scenes") {
    ScenePairSpec spec;
    spec.seed = 9;
    spec.noise_sigma_m = 0.0;
    spec.overlap = 1.0;
    spec.rotation_range_deg = 0.0;
    spec.translation_range_m = 0.0;
    const PointCloud cloud = voxel_downsample(generate_pair(spec).src, 0.3);

    RigidTransform gt;
    gt.R = rot_z(3.0);
    gt.t = Vec3(0.4, -0.2, 0.1);
    const PointCloud tgt = apply(gt, cloud);
    const RigidTransform est =
        point_to_plane_polish(cloud.points, tgt.points, RigidTransform::identity());
    CHECK(rte(est, gt) < 0.05);
    CHECK(rre(est, gt) < 0.3);

    // Identity fixed point: already-aligned input stays put.
    const RigidTransform stay =
        point_to_plane_polish(cloud.points, cloud.points, RigidTransform::identity());
    CHECK(rte(stay, RigidTransform::identity()) < 1e-9);
}

TEST_CASE("run_pipeline on an identical pair returns identity and named stages") {
    PipelineConfig cfg = small_cfg();
    cfg.seed = 0;
    ScenePairSpec spec;
    spec.seed = 12;
    spec.noise_sigma_m = 0.0;
    const PointCloud cloud = generate_pair(spec).src;
    const RigidTransform gt_id = RigidTransform::identity();
    const PipelineResult res = run_pipeline(cloud, cloud, cfg, {}, &gt_id);
    CHECK(rte(res.transform, gt_id) < 1e-6);
    CHECK(rre(res.transform, gt_id) < 1e-6);
    REQUIRE(res.stages.size() >= 3);
    std::vector<std::string> names;
    for (const auto& st : res.stages) {
        names.push_back(st.name);
        CHECK(st.ms >= 0.0);
        // Pose-producing stages carry diagnostics when gt is supplied.
        if (st.name.rfind("refine", 0) == 0 || st.name == "coarse")
            CHECK(st.rte_m.has_value());
    }
    CHECK(std::find(names.begin(), names.end(), "coarse") != names.end());
    CHECK(std::find(names.begin(), names.end(), "refine_level1") != names.end());
}

TEST_CASE("run_pipeline recovers a moderate synthetic motion") {
    PipelineConfig cfg;  // full-size configuration
    ScenePairSpec spec;
    spec.seed = 21;
    const ScenePair pair = generate_pair(spec);
    const PipelineResult res = run_pipeline(pair.src, pair.tgt, cfg, {}, &pair.gt);
    CHECK(rte(res.transform, pair.gt) < 0.3);
    CHECK(rre(res.transform, pair.gt) < 1.5);
    double coarse_rte = -1.0;
    for (const auto& st : res.stages)
        if (st.name == "coarse") coarse_rte = *st.rte_m;
    REQUIRE(coarse_rte >= 0.0);
    CHECK(rte(res.transform, pair.gt) <= coarse_rte + 1e-9);
}

TEST_CASE("empty inputs fail with the failing stage named") {
    PipelineConfig cfg = small_cfg();
    CHECK_THROWS_WITH_AS(run_pipeline(PointCloud{}, PointCloud{}, cfg),
                         doctest::Contains("stage preprocess"), Error);
}
