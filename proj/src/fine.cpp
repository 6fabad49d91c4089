#include "hdm/fine.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "hdm/errors.hpp"
#include "hdm/eval.hpp"
#include "hdm/learned.hpp"
#include "hdm/sampling.hpp"

namespace hdm {

std::vector<double> upsample_confidence(const std::vector<Vec3>& shallow_pts,
                                        const std::vector<Vec3>& deep_pts,
                                        const std::vector<double>& deep_conf, int k) {
    if (deep_conf.size() != deep_pts.size())
        throw DimensionMismatch("upsample_confidence: confidences misaligned");
    const NeighborIndex nn = knn_points(deep_pts, shallow_pts, static_cast<std::size_t>(k));
    std::vector<double> out(shallow_pts.size());
    for (std::size_t i = 0; i < shallow_pts.size(); ++i) {
        double wsum = 0.0, csum = 0.0;
        for (int j = 0; j < k; ++j) {
            const double w = 1.0 / std::max(nn.dists[i][j], 1e-9);
            wsum += w;
            csum += w * deep_conf[nn.indices[i][j]];
        }
        out[i] = csum / wsum;
    }
    return out;
}

RefineResult refine_layer_det(const PyramidLevel& src_level, const PyramidLevel& tgt_level,
                              const RigidTransform& T_prev, const std::vector<double>& mask,
                              const PipelineConfig& cfg) {
    const std::size_t n = src_level.size();
    std::vector<Vec3> transformed(n);
    for (std::size_t i = 0; i < n; ++i) transformed[i] = T_prev(src_level.keypoints[i]);

    SoftMatchOptions opts;
    opts.k = cfg.k1;
    opts.with_confidence = true;
    opts.feature_consistency = cfg.feature_consistency;
    opts.euclidean_knn = true;
    if (cfg.mask && !mask.empty()) opts.scalar_mask = &mask;

    const SoftMatchResult match = soft_match_once_det(
        transformed, src_level.descriptors, tgt_level.keypoints, tgt_level.descriptors, opts);

    WeightedCorrespondences wc;
    wc.source_pts = transformed;
    wc.target_pts = match.points;
    wc.weights = match.confidences;
    const RigidTransform delta = weighted_kabsch(wc);

    RefineResult res;
    res.transform = compose(delta, T_prev);
    res.confidences = match.confidences;
    res.correspondences.source = src_level.keypoints;
    res.correspondences.virtual_targets = match.points;
    res.correspondences.confidences = match.confidences;
    res.correspondences.target_descriptors = match.descriptors;
    return res;
}

RigidTransform point_to_plane_polish(const std::vector<Vec3>& src_pts,
                                     const std::vector<Vec3>& tgt_pts,
                                     const RigidTransform& init, int iterations,
                                     double nn_gate_m) {
    if (src_pts.empty() || tgt_pts.empty())
        throw EmptyCloud("point_to_plane_polish: empty cloud");

    const GridIndex grid(tgt_pts, 1.0);
    std::vector<Vec3> normals(tgt_pts.size(), Vec3::UnitZ());
    for (std::size_t i = 0; i < tgt_pts.size(); ++i) {
        const std::vector<int> nb = grid.radius(tgt_pts[i], 0.9);
        if (nb.size() < 5) continue;
        Vec3 c = Vec3::Zero();
        for (int j : nb) c += tgt_pts[static_cast<std::size_t>(j)];
        c /= static_cast<double>(nb.size());
        Mat3 cov = Mat3::Zero();
        for (int j : nb) {
            const Vec3 d = tgt_pts[static_cast<std::size_t>(j)] - c;
            cov += d * d.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
        normals[i] = eig.eigenvectors().col(0);
    }

    RigidTransform T = init;
    for (int it = 0; it < iterations; ++it) {
        std::vector<std::tuple<Vec3, Vec3, double>> rows;  // point, normal, residual
        std::vector<double> abs_res;
        for (const Vec3& s : src_pts) {
            const Vec3 p = T(s);
            double d = 0.0;
            const int j = grid.nearest(p, d);
            if (j < 0 || d > nn_gate_m) continue;
            const Vec3& n = normals[static_cast<std::size_t>(j)];
            const double r = n.dot(p - tgt_pts[static_cast<std::size_t>(j)]);
            rows.emplace_back(p, n, r);
            abs_res.push_back(std::abs(r));
        }
        if (rows.size() < 10) break;

        std::nth_element(abs_res.begin(), abs_res.begin() + abs_res.size() / 2, abs_res.end());
        const double sigma = std::max(3.0 * abs_res[abs_res.size() / 2], 0.15);

        Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
        for (const auto& [p, n, r] : rows) {
            const double w = 1.0 / (1.0 + (r * r) / (sigma * sigma));
            Eigen::Matrix<double, 6, 1> J;
            J << p.cross(n), n;
            A += w * J * J.transpose();
            b -= w * r * J;
        }
        const Eigen::Matrix<double, 6, 1> x = A.ldlt().solve(b);
        if (!x.allFinite()) break;
        RigidTransform delta;
        const double angle = x.head<3>().norm();
        delta.R = angle < 1e-15 ? Mat3::Identity()
                                : rot_axis_angle(x.head<3>() / angle, angle * 180.0 / M_PI);
        delta.t = x.tail<3>();
        T = compose(delta, T);
        if (angle < 1e-9 && x.tail<3>().norm() < 1e-9) break;
    }
    return T;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

StageDiagnostics make_stage(const std::string& name, const RigidTransform& T, double ms,
                            const RigidTransform* gt) {
    StageDiagnostics d;
    d.name = name;
    d.transform = T;
    d.ms = ms;
    if (gt) {
        d.rte_m = rte(T, *gt);
        d.rre_deg = rre(T, *gt);
    }
    return d;
}

PointCloud preprocess(const PointCloud& raw, const PipelineConfig& cfg, std::uint64_t seed) {
    return random_subsample(voxel_downsample(raw, cfg.voxel_size), cfg.input_points, seed);
}

}  // namespace

PipelineResult run_pipeline(const PointCloud& src_raw, const PointCloud& tgt_raw,
                            const PipelineConfig& cfg, const PipelineParams& params,
                            const RigidTransform* gt) {
    cfg.validate();
    const bool learned = cfg.mode == Mode::Learned;
    if (learned && (params.matcher == nullptr))
        throw DegenerateInput("run_pipeline: learned mode requires matcher parameters");

    PipelineResult result;
    auto run_stage = [](const std::string& name, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error("stage " + name + ": " + e.what());
        }
    };

    // Preprocess.
    auto t0 = Clock::now();
    PointCloud src_pre, tgt_pre;
    run_stage("preprocess", [&]() {
        // Same subsample seed on both sides: identical inputs then yield
        // identical pyramids, which keeps tgt == src an exact fixed point.
        src_pre = preprocess(src_raw, cfg, cfg.seed);
        tgt_pre = preprocess(tgt_raw, cfg, cfg.seed);
        return 0;
    });
    result.stages.push_back(make_stage("preprocess", RigidTransform::identity(),
                                       elapsed_ms(t0), nullptr));

    // Pyramids.
    t0 = Clock::now();
    run_stage("pyramid", [&]() {
        result.src_pyramid = build_pyramid(src_pre, cfg, params.detector);
        result.tgt_pyramid = build_pyramid(tgt_pre, cfg, params.detector);
        return 0;
    });
    result.stages.push_back(make_stage("pyramid", RigidTransform::identity(),
                                       elapsed_ms(t0), nullptr));

    const PyramidLevel& src3 = result.src_pyramid[2];
    const PyramidLevel& tgt3 = result.tgt_pyramid[2];

    // Dense geometric arbiter between candidate poses: median nearest-neighbor
    // residual of the transformed source against the target cloud. Descriptor
    // consensus can be fooled by symmetric structure (a ground plane looks the
    // same after a 180-degree yaw); the dense residual cannot.
    std::unique_ptr<GridIndex> arb_index;
    if (!learned) arb_index = std::make_unique<GridIndex>(tgt_pre.points, 1.0);
    auto median_residual = [&](const RigidTransform& pose) {
        // A fixed stride keeps this cheap on full-size clouds.
        const std::size_t stride = std::max<std::size_t>(1, src_pre.points.size() / 2048);
        std::vector<double> res;
        res.reserve(src_pre.points.size() / stride + 1);
        for (std::size_t i = 0; i < src_pre.points.size(); i += stride) {
            double d = 0.0;
            if (arb_index->nearest(pose(src_pre.points[i]), d) < 0) d = 5.0;  // out of range
            res.push_back(d);
        }
        std::nth_element(res.begin(), res.begin() + res.size() / 2, res.end());
        return res[res.size() / 2];
    };

    MatcherVars vars;
    if (learned) vars = make_matcher_vars(*params.matcher, /*trainable=*/false);

    // Coarse local-to-local registration at level 3.
    t0 = Clock::now();
    RigidTransform T = RigidTransform::identity();
    std::vector<double> stage_conf;
    run_stage("coarse", [&]() {
        if (!learned) {
            result.coarse_correspondences = double_soft_match_det(src3, tgt3, cfg);
            T = coarse_pose(result.coarse_correspondences);
            // The handcrafted descriptors carry too many false soft matches
            // for the weighted solve alone; arbitrate against a consensus
            // pose over the hard mutual pairs.
            const HardPairs pairs = mutual_consensus_pairs(src3, tgt3);
            if (pairs.source.size() >= 3) {
                RobustPoseOptions ropts;
                ropts.seed = cfg.seed;
                const RigidTransform Tr = robust_pose(pairs, ropts);
                if (median_residual(Tr) < median_residual(T)) T = Tr;
            }
        } else {
            const LearnedStage stage = learned_double_soft(src3, tgt3, cfg, vars);
            result.coarse_correspondences.source = src3.keypoints;
            result.coarse_correspondences.virtual_targets.clear();
            for (Eigen::Index i = 0; i < stage.coords->value.rows(); ++i)
                result.coarse_correspondences.virtual_targets.emplace_back(
                    stage.coords->value.row(i).transpose());
            result.coarse_correspondences.confidences.assign(
                stage.confidences->value.data(),
                stage.confidences->value.data() + stage.confidences->value.rows());
            result.coarse_correspondences.target_descriptors = stage.descs->value;
            T = coarse_pose(result.coarse_correspondences);
        }
        stage_conf = result.coarse_correspondences.confidences;
        return 0;
    });
    result.stages.push_back(make_stage("coarse", T, elapsed_ms(t0), gt));

    // Two fine layers, confidences chained through the upsampled mask.
    for (int level = 2; level >= 1; --level) {
        const PyramidLevel& src_l = result.src_pyramid[level - 1];
        const PyramidLevel& tgt_l = result.tgt_pyramid[level - 1];
        const PyramidLevel& src_deeper = result.src_pyramid[level];

        t0 = Clock::now();
        const std::string name = "refine_level" + std::to_string(level);
        run_stage(name, [&]() {
            std::vector<double> mask;
            if (cfg.mask)
                mask = upsample_confidence(src_l.keypoints, src_deeper.keypoints, stage_conf,
                                           cfg.upsample_k);
            if (!learned) {
                // Reseed from level-l hard pairs when they score better than
                // the propagated pose; the denser level separates true from
                // false mutual matches far more cleanly than level 3.
                const HardPairs pairs = mutual_consensus_pairs(src_l, tgt_l);
                if (pairs.source.size() >= 3) {
                    RobustPoseOptions ropts;
                    ropts.seed = cfg.seed + static_cast<std::uint64_t>(level);
                    const RigidTransform Tr = robust_pose(pairs, ropts);
                    if (median_residual(Tr) < median_residual(T)) T = Tr;
                }
                RefineResult r = refine_layer_det(src_l, tgt_l, T, mask, cfg);
                T = r.transform;
                stage_conf = std::move(r.confidences);
                if (level == 1) T = point_to_plane_polish(src_pre.points, tgt_pre.points, T);
            } else {
                const LearnedStage stage =
                    learned_refine_match(src_l, tgt_l, T, mask, cfg, vars, level);
                std::vector<Vec3> transformed(src_l.size());
                for (std::size_t i = 0; i < src_l.size(); ++i)
                    transformed[i] = T(src_l.keypoints[i]);
                const RigidTransform delta =
                    kabsch_from_vars(transformed, stage.coords, stage.confidences);
                T = compose(delta, T);
                stage_conf.assign(stage.confidences->value.data(),
                                  stage.confidences->value.data() +
                                      stage.confidences->value.rows());
            }
            return 0;
        });
        result.stages.push_back(make_stage(name, T, elapsed_ms(t0), gt));
    }

    result.transform = T;
    return result;
}

}  // namespace hdm
