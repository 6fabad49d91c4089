#pragma once

#include <optional>
#include <vector>

#include "hdm/config.hpp"
#include "hdm/geom.hpp"
#include "hdm/pyramid.hpp"
#include "hdm/sampling.hpp"

namespace hdm {

// Source keypoints matched to softmax-aggregated virtual target points with
// per-correspondence confidences in (0,1).
struct CorrespondenceSet {
    std::vector<Vec3> source;
    std::vector<Vec3> virtual_targets;
    std::vector<double> confidences;
    DescMatrix target_descriptors;  // descriptors of the virtual targets
};

// Cluster-max-normalized cosine similarity: cosine of the center descriptor
// against each member, divided by the cluster maximum (denominator clamped
// to >= 1e-12). Throws DegenerateInput on a zero-norm descriptor.
Eigen::VectorXd feature_consistency(const Eigen::VectorXd& d_center,
                                    const DescMatrix& d_members);

// 1 iff target_idx appears in the source's neighbor list and source_idx in
// the target's neighbor list.
int bilateral_consensus(int source_idx, int target_idx, const NeighborIndex& knn_s2t,
                        const NeighborIndex& knn_t2s);

struct SoftMatchOptions {
    int k = 8;
    bool with_confidence = false;
    bool feature_consistency = true;
    bool euclidean_knn = false;                       // fine layers match in point space
    double sharpness = 1.0;                           // softmax inverse temperature
    const std::vector<double>* scalar_mask = nullptr; // per-center mask on member scores
};

struct SoftMatchResult {
    std::vector<Vec3> points;
    DescMatrix descriptors;
    std::vector<double> confidences;  // filled when with_confidence
    std::vector<Eigen::VectorXd> weights;  // per-center softmax weights
    std::vector<std::vector<int>> neighbor_indices;
};

// Deterministic-mode single soft matching: kNN clusters per center, member
// score s - dist/tau (tau = mean cluster distance), softmax-weighted
// aggregation; confidence = the maximum member weight.
SoftMatchResult soft_match_once_det(const std::vector<Vec3>& center_pts,
                                    const DescMatrix& center_descs,
                                    const std::vector<Vec3>& pool_pts,
                                    const DescMatrix& pool_descs,
                                    const SoftMatchOptions& opts);

// Deterministic-mode coarse matcher on level-3 pyramids: stage 1 aggregates
// k2-clusters of the target per source keypoint; stage 2 matches against the
// (optionally densified) virtual pool with k1 and produces confidences.
CorrespondenceSet double_soft_match_det(const PyramidLevel& src, const PyramidLevel& tgt,
                                        const PipelineConfig& cfg);

RigidTransform coarse_pose(const CorrespondenceSet& corr);

// Mutual-nearest descriptor pairs between two pyramid levels; the hard
// counterpart of bilateral consensus, used to seed the robust pose search.
struct HardPairs {
    std::vector<Vec3> source;
    std::vector<Vec3> target;
    std::vector<std::pair<int, int>> indices;
};

HardPairs mutual_consensus_pairs(const PyramidLevel& src, const PyramidLevel& tgt);

struct RobustPoseOptions {
    int iterations = 4096;
    double inlier_gate_m = 2.0;
    std::uint64_t seed = 0;
};

// Seeded three-point hypothesis search over hard pairs with two shrinking
// inlier refits. The handcrafted descriptors carry too many false matches
// for a single weighted solve, so the deterministic pipeline anneals a
// consensus pose out of them. Throws DegenerateInput on fewer than 3 pairs.
RigidTransform robust_pose(const HardPairs& pairs, const RobustPoseOptions& opts);

// Soft-inlier score of a pose over hard pairs (sum of 1 - r/gate over pairs
// with residual r under the gate); used to arbitrate between a propagated
// pose and a fresh consensus pose.
double pose_inlier_score(const RigidTransform& T, const HardPairs& pairs, double gate_m);

}  // namespace hdm
