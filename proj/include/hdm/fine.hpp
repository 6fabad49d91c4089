#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hdm/coarse.hpp"
#include "hdm/config.hpp"
#include "hdm/geom.hpp"
#include "hdm/pyramid.hpp"

namespace hdm {

// Reciprocal-distance upsampling of deeper-layer confidences onto
// shallower-layer keypoints; output is a convex combination of the k nearest
// deep confidences (distance clamped to >= 1e-9).
std::vector<double> upsample_confidence(const std::vector<Vec3>& shallow_pts,
                                        const std::vector<Vec3>& deep_pts,
                                        const std::vector<double>& deep_conf, int k);

struct RefineResult {
    RigidTransform transform;           // compose(delta, T_prev)
    std::vector<double> confidences;    // per source keypoint, seeds the next mask
    CorrespondenceSet correspondences;  // in the target frame, source untransformed
};

// One fine layer: transform source keypoints by T_prev, single soft matching
// with Euclidean-space kNN and the confidence mask, weighted Kabsch delta,
// composition with T_prev. Deterministic mode only; the learned path lives in
// learned.hpp.
RefineResult refine_layer_det(const PyramidLevel& src_level, const PyramidLevel& tgt_level,
                              const RigidTransform& T_prev, const std::vector<double>& mask,
                              const PipelineConfig& cfg);

// Dense robust point-to-plane alignment used as the deterministic-mode final
// polish: target normals from local covariance, Cauchy-weighted residuals,
// small-angle 6x6 solve per iteration. Returns init unchanged when fewer
// than 10 correspondences survive the gate.
RigidTransform point_to_plane_polish(const std::vector<Vec3>& src_pts,
                                     const std::vector<Vec3>& tgt_pts,
                                     const RigidTransform& init, int iterations = 12,
                                     double nn_gate_m = 3.0);

struct StageDiagnostics {
    std::string name;
    RigidTransform transform;
    double ms = 0.0;
    std::optional<double> rte_m;
    std::optional<double> rre_deg;
};

struct PipelineResult {
    RigidTransform transform;
    std::vector<StageDiagnostics> stages;
    CorrespondenceSet coarse_correspondences;
    std::array<PyramidLevel, 3> src_pyramid;
    std::array<PyramidLevel, 3> tgt_pyramid;
};

struct PipelineParams {
    const DetectorParams* detector = nullptr;  // learned mode
    const ModelParams* matcher = nullptr;      // learned mode
};

// Full registration: preprocess (voxel grid + random subsample), pyramids,
// coarse pose at level 3, mask-guided refinement at levels 2 and 1.
// `gt` is only used to fill per-stage RTE/RRE diagnostics.
PipelineResult run_pipeline(const PointCloud& src_raw, const PointCloud& tgt_raw,
                            const PipelineConfig& cfg, const PipelineParams& params = {},
                            const RigidTransform* gt = nullptr);

}  // namespace hdm
