#pragma once

#include <cstdint>

#include "hdm/cloud.hpp"
#include "hdm/geom.hpp"

namespace hdm {

// Structured LiDAR-like scene: ground plane, boxes/walls, scatter points.
// Desk-scale stand-in for real outdoor pairs.
struct ScenePairSpec {
    std::uint64_t seed = 0;
    int planes = 1;          // ground plus extra wall planes
    int boxes = 12;
    int scatter_points = 3000;
    double rotation_range_deg = 30.0;
    double translation_range_m = 3.0;
    double overlap = 0.7;    // fraction kept by each half-space crop, in (0, 1]
    double noise_sigma_m = 0.05;
};

struct ScenePair {
    PointCloud src;
    PointCloud tgt;
    RigidTransform gt;
};

// Deterministic per seed: tgt = gt(src), then independent Gaussian noise on
// both, then each cropped to the overlap fraction by a half-space through
// the scene centroid with a jittered normal.
ScenePair generate_pair(const ScenePairSpec& spec);

}  // namespace hdm
