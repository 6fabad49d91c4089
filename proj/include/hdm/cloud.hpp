#pragma once

#include <Eigen/Core>
#include <vector>

namespace hdm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Ordered list of 3D points in meters, with optional per-point intensity
// in [0,1]. Intensity, when present, is index-aligned with points.
struct PointCloud {
    std::vector<Vec3> points;
    std::vector<double> intensity;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    bool has_intensity() const { return !intensity.empty(); }
};

}  // namespace hdm
