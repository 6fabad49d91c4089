#pragma once

#include <cstdint>
#include <vector>

#include "hdm/cloud.hpp"
#include "hdm/config.hpp"
#include "hdm/neural.hpp"
#include "hdm/sampling.hpp"

namespace hdm {

// One hierarchy level: virtual keypoints with descriptors and uncertainties,
// all three lists index-aligned.
struct PyramidLevel {
    std::vector<Vec3> keypoints;
    DescMatrix descriptors;            // one row per keypoint
    std::vector<double> uncertainties;
    int level = 0;  // 1..3

    std::size_t size() const { return keypoints.size(); }
};

// Per-level learned detector parameters (frozen during training): a shared
// MLP on member features, and a scorer on [member | maxpool] features.
struct DetectorLevelParams {
    DenseStack mlp;     // member feature -> C_l
    DenseStack scorer;  // 2*C_l -> 1
};

struct DetectorParams {
    std::array<DetectorLevelParams, 3> levels;
};

DetectorParams init_detector_params(const PipelineConfig& cfg, std::uint64_t seed);

// One aggregation step: WFPS candidates, kNN clusters, attention-weighted
// virtual keypoints, descriptors and uncertainties. `detector` may be null in
// deterministic mode.
PyramidLevel build_level(const PyramidLevel& input, const PipelineConfig& cfg, int level,
                         const DetectorParams* detector);

// Wraps a raw cloud as a level-0 input (zero uncertainties, no descriptors).
PyramidLevel level_from_cloud(const PointCloud& cloud);

std::array<PyramidLevel, 3> build_pyramid(const PointCloud& raw, const PipelineConfig& cfg,
                                          const DetectorParams* detector);

// Handcrafted rotation-tolerant local descriptor used by the deterministic
// mode: covariance eigenvalue shape features, normalized height, distance
// statistics, and an azimuthal distance histogram; L2-normalized and tiled
// to `out_dim`.
Eigen::VectorXd handcrafted_descriptor(const Vec3& keypoint,
                                       const std::vector<Vec3>& members, int out_dim,
                                       double voxel_size, double z_ref = 0.0);

}  // namespace hdm
