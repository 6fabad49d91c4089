#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hdm/cloud.hpp"

namespace hdm {

// Row-major descriptor set: one descriptor per row.
using DescMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// k nearest items per query, sorted by ascending distance, ties broken by
// ascending item index. Exact (brute force) in both point and descriptor
// space; the contract is exact neighbors, not approximate.
struct NeighborIndex {
    std::vector<std::vector<int>> indices;    // [query][rank]
    std::vector<std::vector<double>> dists;   // aligned with indices
};

// One centroid per non-empty voxel; output ordered by ascending lexicographic
// voxel coordinate. Throws EmptyCloud on an empty input.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size);

// min(n, |cloud|) points without replacement, deterministic per seed,
// original relative order preserved.
PointCloud random_subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

// Weighted farthest point sampling. The seed picks the first index uniformly;
// each further pick maximizes w_i * d_min(i, selected) with
// w_i = 1 / (sigma_i + 1e-6), ties resolved to the lowest index.
std::vector<int> wfps(const PointCloud& cloud, const std::vector<double>& sigma,
                      std::size_t m, std::uint64_t seed);

NeighborIndex knn_points(const std::vector<Vec3>& items, const std::vector<Vec3>& queries,
                         std::size_t k);

NeighborIndex knn_descriptors(const DescMatrix& items, const DescMatrix& queries,
                              std::size_t k);

// Voxel-hash point index for dense-cloud queries where brute force is too
// slow. nearest() searches an expanding shell ring and is exact as long as
// the true neighbor lies within max_rings cells.
class GridIndex {
  public:
    GridIndex(const std::vector<Vec3>& pts, double cell_size);

    // Index of the nearest stored point, or -1 if none within the search
    // envelope; dist receives its distance.
    int nearest(const Vec3& query, double& dist, int max_rings = 3) const;

    std::vector<int> radius(const Vec3& query, double r) const;

    const std::vector<Vec3>& points() const { return pts_; }

  private:
    double cell_;
    std::vector<Vec3> pts_;
    std::unordered_map<long long, std::vector<int>> cells_;
};

}  // namespace hdm
