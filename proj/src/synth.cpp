#include "hdm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hdm/errors.hpp"

namespace hdm {

namespace {

constexpr double kExtent = 40.0;  // scene side length, meters

void add_ground(PointCloud& cloud, double extent, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(-0.08, 0.08);
    const double spacing = 0.2;
    const int n = static_cast<int>(extent / spacing);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double x = -extent / 2 + i * spacing + jitter(rng);
            const double y = -extent / 2 + j * spacing + jitter(rng);
            // gentle terrain undulation so the ground is not perfectly flat
            const double z = 0.15 * std::sin(0.3 * x) * std::cos(0.25 * y) + 0.3 * jitter(rng);
            cloud.points.emplace_back(x, y, z);
        }
}

void add_wall(PointCloud& cloud, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-kExtent / 2 + 2, kExtent / 2 - 2);
    std::uniform_real_distribution<double> len(6.0, 14.0);
    std::uniform_real_distribution<double> hgt(2.0, 4.0);
    std::uniform_real_distribution<double> ang(0.0, M_PI);
    std::uniform_real_distribution<double> jitter(-0.04, 0.04);
    const double x0 = pos(rng), y0 = pos(rng);
    const double length = len(rng), height = hgt(rng), theta = ang(rng);
    const Vec3 dir(std::cos(theta), std::sin(theta), 0.0);
    const double spacing = 0.15;
    for (double s = 0.0; s < length; s += spacing)
        for (double h = 0.0; h < height; h += spacing)
            cloud.points.emplace_back(x0 + s * dir.x() + jitter(rng),
                                      y0 + s * dir.y() + jitter(rng), h + jitter(rng));
}

void add_box(PointCloud& cloud, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-kExtent / 2 + 2, kExtent / 2 - 2);
    std::uniform_real_distribution<double> dim(0.8, 4.0);
    std::uniform_real_distribution<double> ang(0.0, M_PI);
    std::uniform_real_distribution<double> jitter(-0.03, 0.03);
    const double cx = pos(rng), cy = pos(rng);
    const double sx = dim(rng), sy = dim(rng), sz = dim(rng) * 0.8;
    const double theta = ang(rng);
    const double c = std::cos(theta), s = std::sin(theta);
    auto emit = [&](double lx, double ly, double lz) {
        cloud.points.emplace_back(cx + c * lx - s * ly + jitter(rng),
                                  cy + s * lx + c * ly + jitter(rng), lz + jitter(rng));
    };
    const double spacing = 0.15;
    // four side faces and the top; the bottom is occluded
    for (double a = -sx / 2; a < sx / 2; a += spacing)
        for (double h = 0.0; h < sz; h += spacing) {
            emit(a, -sy / 2, h);
            emit(a, sy / 2, h);
        }
    for (double b = -sy / 2; b < sy / 2; b += spacing)
        for (double h = 0.0; h < sz; h += spacing) {
            emit(-sx / 2, b, h);
            emit(sx / 2, b, h);
        }
    for (double a = -sx / 2; a < sx / 2; a += spacing)
        for (double b = -sy / 2; b < sy / 2; b += spacing) emit(a, b, sz);
}

void add_scatter(PointCloud& cloud, int count, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(-kExtent / 2, kExtent / 2);
    std::uniform_real_distribution<double> hgt(0.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // Half free scatter, half short vertical pole segments.
    const int poles = count / 2 / 12;
    for (int p = 0; p < poles; ++p) {
        const double x = pos(rng), y = pos(rng), h = 2.0 + 3.0 * unit(rng);
        for (int i = 0; i < 12; ++i)
            cloud.points.emplace_back(x + 0.02 * (unit(rng) - 0.5), y + 0.02 * (unit(rng) - 0.5),
                                      h * i / 12.0);
    }
    const int remaining = count - poles * 12;
    for (int i = 0; i < remaining; ++i) cloud.points.emplace_back(pos(rng), pos(rng), hgt(rng));
}

PointCloud crop_halfspace(const PointCloud& cloud, const Vec3& normal, double keep_fraction) {
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.size());

    std::vector<double> proj(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) proj[i] = (cloud.points[i] - centroid).dot(normal);
    std::vector<double> sorted = proj;
    const std::size_t keep =
        std::max<std::size_t>(1, static_cast<std::size_t>(keep_fraction * cloud.size()));
    std::nth_element(sorted.begin(), sorted.begin() + (keep - 1), sorted.end());
    const double cutoff = sorted[keep - 1];

    PointCloud out;
    out.points.reserve(keep);
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (proj[i] <= cutoff) out.points.push_back(cloud.points[i]);
    return out;
}

}  // namespace

ScenePair generate_pair(const ScenePairSpec& spec) {
    if (spec.planes <= 0 && spec.boxes <= 0 && spec.scatter_points <= 0)
        throw DegenerateInput("generate_pair: empty structure counts");
    if (spec.overlap <= 0.0 || spec.overlap > 1.0)
        throw DegenerateInput("generate_pair: overlap must be in (0, 1]");

    std::mt19937_64 rng(spec.seed);
    PointCloud scene;
    if (spec.planes > 0) add_ground(scene, kExtent, rng);
    for (int i = 1; i < spec.planes; ++i) add_wall(scene, rng);
    for (int i = 0; i < spec.boxes; ++i) add_box(scene, rng);
    if (spec.scatter_points > 0) add_scatter(scene, spec.scatter_points, rng);

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double angle = (2.0 * unit(rng) - 1.0) * spec.rotation_range_deg;
    const double az = 2.0 * M_PI * unit(rng);
    const double mag = unit(rng) * spec.translation_range_m;
    const double elev = (unit(rng) - 0.5) * 0.4;  // mostly planar motion

    ScenePair pair;
    pair.gt.R = rot_z(angle);
    pair.gt.t = mag * Vec3(std::cos(az) * std::cos(elev), std::sin(az) * std::cos(elev),
                           std::sin(elev));
    pair.src = scene;
    pair.tgt = apply(pair.gt, scene);

    if (spec.noise_sigma_m > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.noise_sigma_m);
        for (Vec3& p : pair.src.points) p += Vec3(noise(rng), noise(rng), noise(rng));
        for (Vec3& p : pair.tgt.points) p += Vec3(noise(rng), noise(rng), noise(rng));
    }

    if (spec.overlap < 1.0) {
        const double base_az = 2.0 * M_PI * unit(rng);
        const Vec3 n_src(std::cos(base_az), std::sin(base_az), 0.0);
        const double jitter = (unit(rng) - 0.5) * (M_PI / 12.0);  // +-15 deg between crops
        const Vec3 n_tgt = pair.gt.R * Vec3(std::cos(base_az + jitter),
                                            std::sin(base_az + jitter), 0.0);
        pair.src = crop_halfspace(pair.src, n_src, spec.overlap);
        pair.tgt = crop_halfspace(pair.tgt, n_tgt, spec.overlap);
    }
    return pair;
}

}  // namespace hdm
