#include "hdm/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <tuple>

#include "hdm/errors.hpp"

namespace hdm {

PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
    if (cloud.empty()) throw EmptyCloud("voxel_downsample: empty cloud");
    if (voxel_size <= 0.0) throw DegenerateInput("voxel_downsample: voxel_size must be > 0");

    using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
    std::map<Key, std::pair<Vec3, std::size_t>> cells;  // ordered -> lexicographic output
    for (const Vec3& p : cloud.points) {
        Key key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
        auto& cell = cells.try_emplace(key, Vec3::Zero(), 0).first->second;
        cell.first += p;
        cell.second += 1;
    }

    PointCloud out;
    out.points.reserve(cells.size());
    for (const auto& [key, cell] : cells)
        out.points.push_back(cell.first / static_cast<double>(cell.second));
    return out;
}

PointCloud random_subsample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw DegenerateInput("random_subsample: n must be >= 1");
    const std::size_t total = cloud.size();
    if (n >= total) return cloud;

    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());  // keep original point order

    PointCloud out;
    out.points.reserve(n);
    if (cloud.has_intensity()) out.intensity.reserve(n);
    for (std::size_t i : idx) {
        out.points.push_back(cloud.points[i]);
        if (cloud.has_intensity()) out.intensity.push_back(cloud.intensity[i]);
    }
    return out;
}

std::vector<int> wfps(const PointCloud& cloud, const std::vector<double>& sigma,
                      std::size_t m, std::uint64_t seed) {
    const std::size_t n = cloud.size();
    if (m > n) throw DegenerateInput("wfps: m exceeds cloud size");
    if (!sigma.empty() && sigma.size() != n)
        throw DegenerateInput("wfps: sigma list not aligned with cloud");
    if (m == 0) return {};

    constexpr double kEpsSigma = 1e-6;
    std::vector<double> weight(n, 1.0 / kEpsSigma);
    for (std::size_t i = 0; i < sigma.size(); ++i) weight[i] = 1.0 / (sigma[i] + kEpsSigma);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::vector<int> selected;
    selected.reserve(m);
    selected.push_back(static_cast<int>(first(rng)));

    std::vector<double> dmin(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(n, 0);
    taken[selected[0]] = 1;
    while (selected.size() < m) {
        const Vec3& last = cloud.points[selected.back()];
        int best = -1;
        double best_score = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = (cloud.points[i] - last).norm();
            if (d < dmin[i]) dmin[i] = d;
            if (taken[i]) continue;
            const double score = weight[i] * dmin[i];
            if (score > best_score) {  // strict: ties keep the lowest index
                best_score = score;
                best = static_cast<int>(i);
            }
        }
        taken[best] = 1;
        selected.push_back(best);
    }
    return selected;
}

namespace {

// Exact k nearest by squared distance via a generic distance callback.
NeighborIndex knn_generic(std::size_t n_items, std::size_t n_queries, std::size_t k,
                          const std::function<double(std::size_t, std::size_t)>& sqdist) {
    if (k > n_items) throw DegenerateInput("knn: k exceeds item count");
    NeighborIndex out;
    out.indices.resize(n_queries);
    out.dists.resize(n_queries);
    std::vector<std::pair<double, int>> cand(n_items);
    for (std::size_t q = 0; q < n_queries; ++q) {
        for (std::size_t i = 0; i < n_items; ++i)
            cand[i] = {sqdist(q, i), static_cast<int>(i)};
        std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end());
        std::sort(cand.begin(), cand.begin() + k);  // pair order = (dist, index) tie rule
        out.indices[q].resize(k);
        out.dists[q].resize(k);
        for (std::size_t j = 0; j < k; ++j) {
            out.indices[q][j] = cand[j].second;
            out.dists[q][j] = std::sqrt(std::max(cand[j].first, 0.0));
        }
    }
    return out;
}

}  // namespace

NeighborIndex knn_points(const std::vector<Vec3>& items, const std::vector<Vec3>& queries,
                         std::size_t k) {
    return knn_generic(items.size(), queries.size(), k, [&](std::size_t q, std::size_t i) {
        return (items[i] - queries[q]).squaredNorm();
    });
}

NeighborIndex knn_descriptors(const DescMatrix& items, const DescMatrix& queries,
                              std::size_t k) {
    if (items.cols() != queries.cols())
        throw DimensionMismatch("knn_descriptors: descriptor widths differ");
    return knn_generic(static_cast<std::size_t>(items.rows()),
                       static_cast<std::size_t>(queries.rows()), k,
                       [&](std::size_t q, std::size_t i) {
                           return (items.row(i) - queries.row(q)).squaredNorm();
                       });
}

namespace {

long long grid_key(long long x, long long y, long long z) {
    // 21 bits per axis with an offset; covers +-1e6 cells.
    return ((x + (1 << 20)) << 42) | ((y + (1 << 20)) << 21) | (z + (1 << 20));
}

long long coord_cell(double v, double cell) {
    return static_cast<long long>(std::floor(v / cell));
}

}  // namespace

GridIndex::GridIndex(const std::vector<Vec3>& pts, double cell_size)
    : cell_(cell_size), pts_(pts) {
    if (pts.empty()) throw EmptyCloud("GridIndex: empty point set");
    if (cell_size <= 0.0) throw DegenerateInput("GridIndex: cell size must be > 0");
    for (int i = 0; i < static_cast<int>(pts_.size()); ++i)
        cells_[grid_key(coord_cell(pts_[i].x(), cell_), coord_cell(pts_[i].y(), cell_),
                        coord_cell(pts_[i].z(), cell_))]
            .push_back(i);
}

int GridIndex::nearest(const Vec3& query, double& dist, int max_rings) const {
    const long long bx = coord_cell(query.x(), cell_);
    const long long by = coord_cell(query.y(), cell_);
    const long long bz = coord_cell(query.z(), cell_);
    int best = -1;
    double best_sq = std::numeric_limits<double>::infinity();
    for (int ring = 1; ring <= max_rings; ++ring) {
        for (int dx = -ring; dx <= ring; ++dx)
            for (int dy = -ring; dy <= ring; ++dy)
                for (int dz = -ring; dz <= ring; ++dz) {
                    if (ring > 1 && std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
                        continue;
                    const auto it = cells_.find(grid_key(bx + dx, by + dy, bz + dz));
                    if (it == cells_.end()) continue;
                    for (int i : it->second) {
                        const double d = (query - pts_[static_cast<std::size_t>(i)]).squaredNorm();
                        if (d < best_sq || (d == best_sq && i < best)) {
                            best_sq = d;
                            best = i;
                        }
                    }
                }
        // A hit this close cannot be beaten by any farther ring.
        if (best >= 0 && best_sq <= (ring * cell_) * (ring * cell_)) break;
    }
    dist = best >= 0 ? std::sqrt(best_sq) : std::numeric_limits<double>::infinity();
    return best;
}

std::vector<int> GridIndex::radius(const Vec3& query, double r) const {
    if (r < 0.0) throw DegenerateInput("GridIndex::radius: negative radius");
    const int rings = static_cast<int>(std::ceil(r / cell_));
    const long long bx = coord_cell(query.x(), cell_);
    const long long by = coord_cell(query.y(), cell_);
    const long long bz = coord_cell(query.z(), cell_);
    std::vector<int> out;
    for (int dx = -rings; dx <= rings; ++dx)
        for (int dy = -rings; dy <= rings; ++dy)
            for (int dz = -rings; dz <= rings; ++dz) {
                const auto it = cells_.find(grid_key(bx + dx, by + dy, bz + dz));
                if (it == cells_.end()) continue;
                for (int i : it->second)
                    if ((query - pts_[static_cast<std::size_t>(i)]).norm() <= r)
                        out.push_back(i);
            }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace hdm
