#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hdm/coarse.hpp"
#include "hdm/config.hpp"
#include "hdm/fine.hpp"
#include "hdm/geom.hpp"

namespace hdm {

struct EvalThresholds {
    double eps_trans = 2.0;  // m
    double eps_rot = 5.0;    // deg
    double eps_d = 1.0;      // m, correspondence inlier threshold
};

// Relative translation error in meters.
double rte(const RigidTransform& est, const RigidTransform& gt);

// Geodesic rotation angle in degrees, arccos((Tr(R_hat' R) - 1) / 2) with the
// argument clamped to [-1, 1].
double rre(const RigidTransform& est, const RigidTransform& gt);

// Inlier iff the residual under gt is strictly below eps_d.
std::vector<bool> classify_inliers(const CorrespondenceSet& corr, const RigidTransform& gt,
                                   double eps_d);

struct PairResult {
    std::size_t pair_id = 0;
    double rte_m = 0.0;
    double rre_deg = 0.0;
    bool success = false;
    double ms = 0.0;
    bool failed = false;            // pipeline raised; recorded, never aborts the run
    double coarse_rte_m = 0.0;      // diagnostics for refinement monotonicity
    RigidTransform transform;
};

struct BenchmarkReport {
    std::vector<PairResult> pairs;
    double rte_mean = 0.0, rte_std = 0.0;   // successes only
    double rre_mean = 0.0, rre_std = 0.0;
    double recall = 0.0;
    double ms_mean = 0.0;
};

// One registration problem with ground truth.
struct BenchmarkPair {
    PointCloud src;
    PointCloud tgt;
    RigidTransform gt;
};

using PairProvider = std::function<BenchmarkPair(std::size_t)>;

// Runs the pipeline over `n_pairs` problems supplied by `provider`.
// Per-pair failures are recorded as unsuccessful. Throws EmptyDataset when
// n_pairs == 0.
BenchmarkReport benchmark(const PairProvider& provider, std::size_t n_pairs,
                          const PipelineConfig& cfg, const EvalThresholds& thresholds,
                          const PipelineParams& params = {});

// Recall as a function of one threshold, the other fixed at its default.
struct RecallCurve {
    std::vector<double> thresholds;
    std::vector<double> recall;
};

RecallCurve recall_vs_rte(const BenchmarkReport& report, const EvalThresholds& base,
                          const std::vector<double>& grid);
RecallCurve recall_vs_rre(const BenchmarkReport& report, const EvalThresholds& base,
                          const std::vector<double>& grid);

struct AblationRow {
    std::string variant;
    BenchmarkReport report;
};

// Full model plus the standard variants: no sparse-to-denser, no feature
// consistency, single-soft (all matching flags off), no mask.
std::vector<AblationRow> ablation_suite(const PairProvider& provider, std::size_t n_pairs,
                                        const PipelineConfig& base_cfg,
                                        const EvalThresholds& thresholds,
                                        const PipelineParams& params = {});

// CSV emission; formatting is fixed so identical runs are byte-identical.
std::string per_pair_csv(const BenchmarkReport& report);
std::string curve_csv(const RecallCurve& curve);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace hdm
