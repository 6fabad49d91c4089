#include "hdm/pyramid.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "hdm/errors.hpp"

namespace hdm {

namespace {

int detector_in_dim(const PipelineConfig& cfg, int level) {
    // offset (3) + distance (1), plus the previous level's descriptor.
    return level == 1 ? 4 : 4 + cfg.level_dims[level - 2];
}

DenseStack make_stack(const std::vector<int>& widths, const std::vector<Activation>& acts,
                      std::mt19937_64& rng) {
    DenseStack stack;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        DenseLayer layer;
        layer.W = glorot_uniform(widths[i + 1], widths[i], rng);
        layer.b = Vector::Zero(widths[i + 1]);
        layer.act = acts[i];
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

}  // namespace

DetectorParams init_detector_params(const PipelineConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DetectorParams params;
    for (int level = 1; level <= 3; ++level) {
        const int in = detector_in_dim(cfg, level);
        const int c = cfg.level_dims[level - 1];
        params.levels[level - 1].mlp =
            make_stack({in, c, c, c}, {Activation::Relu, Activation::Relu, Activation::None}, rng);
        params.levels[level - 1].scorer =
            make_stack({2 * c, c, 1}, {Activation::Relu, Activation::None}, rng);
    }
    return params;
}

PyramidLevel level_from_cloud(const PointCloud& cloud) {
    PyramidLevel lvl;
    lvl.keypoints = cloud.points;
    lvl.uncertainties.assign(cloud.size(), 0.0);
    lvl.descriptors.resize(0, 0);
    lvl.level = 0;
    return lvl;
}

Eigen::VectorXd handcrafted_descriptor(const Vec3& keypoint, const std::vector<Vec3>& members,
                                       int out_dim, double voxel_size, double z_ref) {
    const std::size_t k = members.size();
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& m : members) centroid += m;
    centroid /= static_cast<double>(k);

    Mat3 cov = Mat3::Zero();
    for (const Vec3& m : members) {
        const Vec3 d = m - centroid;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(k);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    // Ascending from Eigen; we want descending lambda1 >= lambda2 >= lambda3.
    const double l1 = std::max(eig.eigenvalues()(2), 0.0);
    const double l2 = std::max(eig.eigenvalues()(1), 0.0);
    const double l3 = std::max(eig.eigenvalues()(0), 0.0);

    double linearity = 0.0, planarity = 0.0, sphericity = 0.0;
    if (l1 > 1e-12) {
        linearity = (l1 - l2) / l1;
        planarity = (l2 - l3) / l1;
        sphericity = l3 / l1;
    }
    const double verticality = std::abs(eig.eigenvectors().col(0).z());  // smallest-lambda axis

    std::vector<double> dists(k);
    double d_mean = 0.0, z_min = members[0].z(), z_max = members[0].z();
    for (std::size_t i = 0; i < k; ++i) {
        dists[i] = (members[i] - keypoint).norm();
        d_mean += dists[i];
        z_min = std::min(z_min, members[i].z());
        z_max = std::max(z_max, members[i].z());
    }
    d_mean /= static_cast<double>(k);
    double d_var = 0.0;
    for (double d : dists) d_var += (d - d_mean) * (d - d_mean);
    const double d_std = std::sqrt(d_var / static_cast<double>(k));

    const double rel_height = (keypoint.z() - centroid.z()) / (d_mean + 1e-9);
    const double abs_height = (keypoint.z() - z_ref) / 3.0;
    const double z_extent = (z_max - z_min) / 3.0;

    // Azimuthal distance histogram anchored to the principal horizontal
    // direction of the neighborhood so it tolerates yaw; the anchor sign is
    // fixed by the distance-weighted projection sum.
    Eigen::Matrix2d cov_xy = Eigen::Matrix2d::Zero();
    for (const Vec3& m : members) {
        const Eigen::Vector2d d(m.x() - keypoint.x(), m.y() - keypoint.y());
        cov_xy += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> exy(cov_xy);
    Eigen::Vector2d axis = exy.eigenvectors().col(1);  // largest eigenvalue
    double proj_sum = 0.0;
    for (const Vec3& m : members)
        proj_sum += axis.dot(Eigen::Vector2d(m.x() - keypoint.x(), m.y() - keypoint.y()));
    if (proj_sum < 0.0) axis = -axis;
    const double anchor = std::atan2(axis.y(), axis.x());

    Eigen::VectorXd hist = Eigen::VectorXd::Zero(8);
    double hist_sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const Vec3 off = members[i] - keypoint;
        double az = std::atan2(off.y(), off.x()) - anchor;
        az = std::fmod(az + 4.0 * M_PI, 2.0 * M_PI);  // [0, 2pi)
        int bin = static_cast<int>(std::floor(az / (2.0 * M_PI) * 8.0));
        bin = std::clamp(bin, 0, 7);
        hist(bin) += dists[i];
        hist_sum += dists[i];
    }
    hist /= (hist_sum + 1e-9);

    Eigen::VectorXd base(17);
    base << linearity, planarity, sphericity, verticality, rel_height, abs_height, z_extent,
        d_mean / (voxel_size * static_cast<double>(k)), d_std / (d_mean + 1e-9), 0.5 * hist;
    const double bn = base.norm();
    if (bn > 1e-12) base /= bn;

    Eigen::VectorXd out(out_dim);
    for (int i = 0; i < out_dim; ++i) out(i) = base(i % base.size());
    const double on = out.norm();
    if (on > 1e-12) out /= on;
    return out;
}

PyramidLevel build_level(const PyramidLevel& input, const PipelineConfig& cfg, int level,
                         const DetectorParams* detector) {
    const std::size_t n_out = cfg.level_sizes[level - 1];
    const int c_out = cfg.level_dims[level - 1];
    if (n_out > input.size())
        throw DegenerateInput("build_level: level size exceeds input point count");

    PointCloud input_cloud;
    input_cloud.points = input.keypoints;
    const std::vector<int> candidates =
        wfps(input_cloud, input.uncertainties, n_out, cfg.seed + static_cast<std::uint64_t>(level));

    const int k = static_cast<int>(std::min<std::size_t>(cfg.k1, input.size()));
    std::vector<Vec3> centers;
    centers.reserve(n_out);
    for (int c : candidates) centers.push_back(input.keypoints[c]);
    const NeighborIndex nn = knn_points(input.keypoints, centers, k);

    const bool learned = cfg.mode == Mode::Learned && detector != nullptr;
    const DetectorLevelParams* det = learned ? &detector->levels[level - 1] : nullptr;

    PyramidLevel out;
    out.level = level;
    out.keypoints.resize(n_out);
    out.uncertainties.resize(n_out);
    out.descriptors.resize(static_cast<Eigen::Index>(n_out), c_out);

    std::vector<Vec3> members(k);
    for (std::size_t i = 0; i < n_out; ++i) {
        const Vec3& center = centers[i];
        for (int j = 0; j < k; ++j) members[j] = input.keypoints[nn.indices[i][j]];

        Vector weights;
        std::vector<Vector> feats;  // learned-mode per-member MLP outputs
        if (!learned) {
            double tau = 0.0;
            for (int j = 0; j < k; ++j) tau += nn.dists[i][j];
            tau = std::max(tau / k, 1e-9);
            Vector scores(k);
            for (int j = 0; j < k; ++j) scores(j) = -nn.dists[i][j] / tau;
            weights = softmax(scores);
        } else {
            std::vector<Vector> raw(k);
            for (int j = 0; j < k; ++j) {
                Vector f(detector_in_dim(cfg, level));
                f.head<3>() = members[j] - center;
                f(3) = nn.dists[i][j];
                if (level > 1) f.tail(f.size() - 4) = input.descriptors.row(nn.indices[i][j]).transpose();
                raw[j] = std::move(f);
            }
            feats = shared_mlp_forward(det->mlp, raw);
            const Vector pooled = maxpool(feats);
            Vector scores(k);
            for (int j = 0; j < k; ++j) {
                Vector cat(2 * feats[j].size());
                cat << feats[j], pooled;
                scores(j) = dense_stack_forward(det->scorer, cat)(0);
            }
            weights = softmax(scores);
        }

        Vec3 keypoint = Vec3::Zero();
        for (int j = 0; j < k; ++j) keypoint += weights(j) * members[j];
        out.keypoints[i] = keypoint;

        double sigma = 0.0;
        for (int j = 0; j < k; ++j) sigma += weights(j) * (members[j] - keypoint).norm();
        out.uncertainties[i] = sigma;

        if (learned) {
            Vector desc = maxpool(feats);
            const double dn = desc.norm();
            if (dn > 1e-12) desc /= dn;
            out.descriptors.row(static_cast<Eigen::Index>(i)) = desc.transpose();
        }
    }

    if (!learned) {
        // Descriptor support is wider than the aggregation cluster: the
        // shape statistics need more than a handful of neighbors to be
        // discriminative.
        const int k_desc = static_cast<int>(std::min<std::size_t>(32, input.size()));
        const NeighborIndex dn = knn_points(input.keypoints, out.keypoints, k_desc);
        double z_ref = input.keypoints[0].z();
        for (const Vec3& p : input.keypoints) z_ref = std::min(z_ref, p.z());
        std::vector<Vec3> support(static_cast<std::size_t>(k_desc));
        for (std::size_t i = 0; i < n_out; ++i) {
            for (int j = 0; j < k_desc; ++j) support[static_cast<std::size_t>(j)] = input.keypoints[dn.indices[i][j]];
            out.descriptors.row(static_cast<Eigen::Index>(i)) =
                handcrafted_descriptor(out.keypoints[i], support, c_out, cfg.voxel_size, z_ref)
                    .transpose();
        }
    }
    return out;
}

std::array<PyramidLevel, 3> build_pyramid(const PointCloud& raw, const PipelineConfig& cfg,
                                          const DetectorParams* detector) {
    if (raw.empty()) throw EmptyCloud("build_pyramid: empty cloud");
    std::array<PyramidLevel, 3> levels;
    PyramidLevel current = level_from_cloud(raw);
    for (int l = 1; l <= 3; ++l) {
        levels[l - 1] = build_level(current, cfg, l, detector);
        current = levels[l - 1];
    }
    return levels;
}

}  // namespace hdm
