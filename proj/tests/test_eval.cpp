#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sstream>

#include "doctest.h"
#include "hdm/errors.hpp"
#include "hdm/eval.hpp"
#include "hdm/synth.hpp"

using namespace hdm;

namespace {

// Tiny provider: identical clouds with an identity gt, so even the reduced
// pipeline is exact and fast.
PairProvider identity_provider(std::uint64_t scene_seed) {
    return [scene_seed](std::size_t i) {
        ScenePairSpec spec;
        spec.seed = scene_seed + i;
        spec.noise_sigma_m = 0.0;
        const ScenePair sp = generate_pair(spec);
        BenchmarkPair bp;
        bp.src = sp.src;
        bp.tgt = sp.src;
        bp.gt = RigidTransform::identity();
        return bp;
    };
}

PipelineConfig small_cfg() {
    PipelineConfig cfg;
    cfg.input_points = 2048;
    cfg.level_sizes = {256, 128, 64};
    cfg.level_dims = {16, 32, 64};
    return cfg;
}

}  // namespace

TEST_CASE("rte and rre on hand-checked poses") {
    RigidTransform est, gt;
    est.t = Vec3(1.0, 2.0, 2.0);
    CHECK(rte(est, gt) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(rre(est, gt) == doctest::Approx(0.0));

    est = RigidTransform{};
    est.R = rot_z(90.0);
    CHECK(rre(est, gt) == doctest::Approx(90.0).epsilon(1e-9));
    est.R = rot_z(180.0);
    CHECK(rre(est, gt) == doctest::Approx(180.0).epsilon(1e-9));

    // Symmetric in its arguments.
    RigidTransform a, b;
    a.R = rot_z(33.0);
    b.R = rot_z(12.0);
    CHECK(rre(a, b) == doctest::Approx(rre(b, a)).epsilon(1e-12));
    CHECK(rre(a, b) == doctest::Approx(21.0).epsilon(1e-9));
}

TEST_CASE("classify_inliers uses a strict threshold") {
    CorrespondenceSet corr;
    corr.source = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    RigidTransform gt;
    gt.t = Vec3(1.0, 0.0, 0.0);
    corr.virtual_targets = {{1.0, 0.0, 0.0},   // residual 0
                            {1.0, 0.5, 0.0},   // residual 0.5
                            {1.0, 1.0, 0.0}};  // residual exactly eps_d
    corr.confidences = {1.0, 1.0, 1.0};
    const auto flags = classify_inliers(corr, gt, 1.0);
    CHECK(flags == std::vector<bool>{true, true, false});
}

TEST_CASE("benchmark rejects an empty dataset") {
    CHECK_THROWS_AS(
        benchmark(identity_provider(0), 0, small_cfg(), EvalThresholds{}),
        EmptyDataset);
}

TEST_CASE("benchmark aggregates successes and records failures without throwing") {
    // Pair 1 is empty and must be recorded as a failure, not abort the run.
    const PairProvider provider = [](std::size_t i) {
        if (i == 1) return BenchmarkPair{};  // empty clouds -> pipeline throws
        ScenePairSpec spec;
        spec.seed = 100 + i;
        spec.noise_sigma_m = 0.0;
        const ScenePair sp = generate_pair(spec);
        return BenchmarkPair{sp.src, sp.src, RigidTransform::identity()};
    };
    const BenchmarkReport rep = benchmark(provider, 3, small_cfg(), EvalThresholds{});
    REQUIRE(rep.pairs.size() == 3);
    CHECK(!rep.pairs[0].failed);
    CHECK(rep.pairs[1].failed);
    CHECK(!rep.pairs[1].success);
    CHECK(std::isinf(rep.pairs[1].rte_m));
    CHECK(rep.recall == doctest::Approx(2.0 / 3.0));
    // Means come from successes only, so the failure does not poison them.
    CHECK(rep.rte_mean < 1e-6);
    CHECK(rep.rre_mean < 1e-6);
    CHECK(rep.ms_mean > 0.0);
}

TEST_CASE("recall curves are monotone in their threshold") {
    const BenchmarkReport rep =
        benchmark(identity_provider(200), 3, small_cfg(), EvalThresholds{});
    const std::vector<double> grid = {0.001, 0.01, 0.1, 1.0, 2.0};
    const RecallCurve c1 = recall_vs_rte(rep, EvalThresholds{}, grid);
    const RecallCurve c2 = recall_vs_rre(rep, EvalThresholds{}, grid);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(c1.recall[i] >= c1.recall[i - 1]);
        CHECK(c2.recall[i] >= c2.recall[i - 1]);
    }
    CHECK(c1.recall.back() == doctest::Approx(1.0));
}

TEST_CASE("csv emitters produce the documented schemas") {
    BenchmarkReport rep;
    PairResult ok;
    ok.pair_id = 0;
    ok.rte_m = 0.125;
    ok.rre_deg = 1.5;
    ok.success = true;
    ok.ms = 10.0;
    PairResult bad;
    bad.pair_id = 1;
    bad.failed = true;
    bad.rte_m = bad.rre_deg = std::numeric_limits<double>::infinity();
    rep.pairs = {ok, bad};

    const std::string csv = per_pair_csv(rep);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "pair_id,rte_m,rre_deg,success,ms");
    std::getline(is, line);
    CHECK(line == "0,0.125000,1.500000,1,10.000000");
    std::getline(is, line);
    CHECK(line == "1,inf,inf,0,0.000000");

    RecallCurve curve;
    curve.thresholds = {0.5, 1.0};
    curve.recall = {0.25, 1.0};
    const std::string cc = curve_csv(curve);
    CHECK(cc == "threshold,recall\n0.500000,0.250000\n1.000000,1.000000\n");

    AblationRow row;
    row.variant = "full";
    row.report.recall = 1.0;
    const std::string ac = ablation_csv({row});
    std::istringstream as(ac);
    std::getline(as, line);
    CHECK(line == "variant,rte_mean,rte_std,rre_mean,rre_std,recall,ms_mean");
    std::getline(as, line);
    CHECK(line.rfind("full,", 0) == 0);
}

TEST_CASE("ablation_suite covers the standard variants") {
    const auto rows =
        ablation_suite(identity_provider(300), 1, small_cfg(), EvalThresholds{});
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].variant == "full");
    CHECK(rows[1].variant == "wo_std");
    CHECK(rows[2].variant == "wo_fs");
    CHECK(rows[3].variant == "wo_dm_std_fs");
    CHECK(rows[4].variant == "wo_mask");
    // On an identical pair every variant succeeds.
    for (const auto& r : rows) CHECK(r.report.recall == doctest::Approx(1.0));
}
