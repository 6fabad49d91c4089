#include "hdm/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "hdm/errors.hpp"

namespace hdm {

Eigen::VectorXd feature_consistency(const Eigen::VectorXd& d_center,
                                    const DescMatrix& d_members) {
    const double cn = d_center.norm();
    if (cn < 1e-12) throw DegenerateInput("feature_consistency: zero-norm center descriptor");
    Eigen::VectorXd raw(d_members.rows());
    for (Eigen::Index i = 0; i < d_members.rows(); ++i) {
        const double mn = d_members.row(i).norm();
        if (mn < 1e-12)
            throw DegenerateInput("feature_consistency: zero-norm member descriptor");
        raw(i) = d_members.row(i).dot(d_center) / (cn * mn);
    }
    const double denom = std::max(raw.maxCoeff(), 1e-12);
    return raw / denom;
}

int bilateral_consensus(int source_idx, int target_idx, const NeighborIndex& knn_s2t,
                        const NeighborIndex& knn_t2s) {
    const auto& fwd = knn_s2t.indices[source_idx];
    const auto& bwd = knn_t2s.indices[target_idx];
    const bool forward = std::find(fwd.begin(), fwd.end(), target_idx) != fwd.end();
    const bool backward = std::find(bwd.begin(), bwd.end(), source_idx) != bwd.end();
    return forward && backward ? 1 : 0;
}

SoftMatchResult soft_match_once_det(const std::vector<Vec3>& center_pts,
                                    const DescMatrix& center_descs,
                                    const std::vector<Vec3>& pool_pts,
                                    const DescMatrix& pool_descs,
                                    const SoftMatchOptions& opts) {
    const std::size_t n = center_pts.size();
    if (static_cast<Eigen::Index>(n) != center_descs.rows())
        throw DimensionMismatch("soft_match_once: centers and descriptors misaligned");
    if (pool_pts.size() != static_cast<std::size_t>(pool_descs.rows()))
        throw DimensionMismatch("soft_match_once: pool and descriptors misaligned");
    if (static_cast<std::size_t>(opts.k) > pool_pts.size())
        throw DegenerateInput("soft_match_once: k exceeds pool size");

    const NeighborIndex nn = opts.euclidean_knn
                                 ? knn_points(pool_pts, center_pts, opts.k)
                                 : knn_descriptors(pool_descs, center_descs, opts.k);

    const int k = opts.k;
    SoftMatchResult res;
    res.points.resize(n);
    res.descriptors.resize(static_cast<Eigen::Index>(n), pool_descs.cols());
    res.weights.resize(n);
    res.neighbor_indices = nn.indices;
    if (opts.with_confidence) res.confidences.resize(n);

    DescMatrix member_descs(k, pool_descs.cols());
    for (std::size_t i = 0; i < n; ++i) {
        // An exact spatial coincidence is a known correspondence, not a
        // candidate set to smooth over; taking it verbatim gives the
        // already-aligned fixed point exactly.
        if (opts.euclidean_knn && nn.dists[i][0] < 1e-12) {
            const int j0 = nn.indices[i][0];
            res.points[i] = pool_pts[static_cast<std::size_t>(j0)];
            res.descriptors.row(static_cast<Eigen::Index>(i)) = pool_descs.row(j0);
            res.weights[i] = Eigen::VectorXd::Unit(k, 0);
            if (opts.with_confidence) res.confidences[i] = 1.0;
            continue;
        }
        for (int j = 0; j < k; ++j) member_descs.row(j) = pool_descs.row(nn.indices[i][j]);

        double tau = 0.0;
        for (int j = 0; j < k; ++j) tau += nn.dists[i][j];
        tau = std::max(tau / k, 1e-9);

        Eigen::VectorXd scores = Eigen::VectorXd::Zero(k);
        if (opts.feature_consistency)
            scores = feature_consistency(center_descs.row(static_cast<Eigen::Index>(i)).transpose(),
                                         member_descs);
        for (int j = 0; j < k; ++j) scores(j) -= nn.dists[i][j] / tau;
        scores *= opts.sharpness;
        if (opts.scalar_mask) scores *= (*opts.scalar_mask)[i];

        const Eigen::VectorXd w = softmax(scores);
        res.weights[i] = w;

        Vec3 agg = Vec3::Zero();
        Eigen::RowVectorXd desc = Eigen::RowVectorXd::Zero(pool_descs.cols());
        for (int j = 0; j < k; ++j) {
            agg += w(j) * pool_pts[nn.indices[i][j]];
            desc += w(j) * member_descs.row(j);
        }
        const double dn = desc.norm();
        if (dn > 1e-12) desc /= dn;  // keep cosine similarity well-scaled downstream
        res.points[i] = agg;
        res.descriptors.row(static_cast<Eigen::Index>(i)) = desc;
        if (opts.with_confidence) res.confidences[i] = w.maxCoeff();
    }
    return res;
}

CorrespondenceSet double_soft_match_det(const PyramidLevel& src, const PyramidLevel& tgt,
                                        const PipelineConfig& cfg) {
    if (src.size() != tgt.size())
        throw DimensionMismatch("double_soft_match: level sizes differ");

    SoftMatchOptions stage2;
    stage2.with_confidence = true;
    stage2.feature_consistency = cfg.feature_consistency;
    stage2.k = cfg.k1;

    SoftMatchResult final_match;
    if (!cfg.double_soft) {
        // Single-soft variant: match straight against the original target.
        final_match = soft_match_once_det(src.keypoints, src.descriptors, tgt.keypoints,
                                          tgt.descriptors, stage2);
    } else {
        SoftMatchOptions stage1;
        stage1.k = cfg.k2;
        stage1.feature_consistency = cfg.feature_consistency;
        const SoftMatchResult updated = soft_match_once_det(
            src.keypoints, src.descriptors, tgt.keypoints, tgt.descriptors, stage1);

        std::vector<Vec3> pool_pts = updated.points;
        DescMatrix pool_descs = updated.descriptors;
        if (cfg.sparse_to_denser) {
            pool_pts.insert(pool_pts.end(), tgt.keypoints.begin(), tgt.keypoints.end());
            DescMatrix both(pool_descs.rows() + tgt.descriptors.rows(), pool_descs.cols());
            both.topRows(pool_descs.rows()) = pool_descs;
            both.bottomRows(tgt.descriptors.rows()) = tgt.descriptors;
            pool_descs = std::move(both);
        }
        final_match =
            soft_match_once_det(src.keypoints, src.descriptors, pool_pts, pool_descs, stage2);
    }

    CorrespondenceSet corr;
    corr.source = src.keypoints;
    corr.virtual_targets = final_match.points;
    corr.confidences = final_match.confidences;
    corr.target_descriptors = final_match.descriptors;
    return corr;
}

HardPairs mutual_consensus_pairs(const PyramidLevel& src, const PyramidLevel& tgt) {
    const NeighborIndex fwd = knn_descriptors(tgt.descriptors, src.descriptors, 1);
    const NeighborIndex bwd = knn_descriptors(src.descriptors, tgt.descriptors, 1);
    HardPairs out;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const int j = fwd.indices[i][0];
        if (bwd.indices[static_cast<std::size_t>(j)][0] == static_cast<int>(i)) {
            out.source.push_back(src.keypoints[i]);
            out.target.push_back(tgt.keypoints[static_cast<std::size_t>(j)]);
            out.indices.emplace_back(static_cast<int>(i), j);
        }
    }
    return out;
}

double pose_inlier_score(const RigidTransform& T, const HardPairs& pairs, double gate_m) {
    double score = 0.0;
    for (std::size_t i = 0; i < pairs.source.size(); ++i) {
        const double r = (T(pairs.source[i]) - pairs.target[i]).norm();
        if (r < gate_m) score += 1.0 - r / gate_m;
    }
    return score;
}

RigidTransform robust_pose(const HardPairs& pairs, const RobustPoseOptions& opts) {
    const std::size_t n = pairs.source.size();
    if (n < 3) throw DegenerateInput("robust_pose: need at least 3 hard pairs");

    std::mt19937_64 rng(opts.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    RigidTransform best;
    double best_score = -1.0;
    for (int it = 0; it < opts.iterations; ++it) {
        const std::size_t a = pick(rng), b = pick(rng), c = pick(rng);
        if (a == b || b == c || a == c) continue;
        WeightedCorrespondences h;
        for (std::size_t i : {a, b, c}) {
            h.source_pts.push_back(pairs.source[i]);
            h.target_pts.push_back(pairs.target[i]);
            h.weights.push_back(1.0);
        }
        RigidTransform Th;
        try {
            Th = weighted_kabsch(h);
        } catch (const DegenerateInput&) {
            continue;
        }
        const double score = pose_inlier_score(Th, pairs, opts.inlier_gate_m);
        if (score > best_score) {
            best_score = score;
            best = Th;
        }
    }
    if (best_score < 0.0) throw DegenerateInput("robust_pose: no valid hypothesis found");

    for (const double gate : {opts.inlier_gate_m, 0.7 * opts.inlier_gate_m}) {
        WeightedCorrespondences wc;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = (best(pairs.source[i]) - pairs.target[i]).norm();
            if (r < gate) {
                wc.source_pts.push_back(pairs.source[i]);
                wc.target_pts.push_back(pairs.target[i]);
                wc.weights.push_back(1.0 - r / gate);
            }
        }
        if (wc.source_pts.size() < 3) break;
        try {
            best = weighted_kabsch(wc);
        } catch (const DegenerateInput&) {
            break;
        }
    }
    return best;
}

RigidTransform coarse_pose(const CorrespondenceSet& corr) {
    WeightedCorrespondences wc;
    wc.source_pts = corr.source;
    wc.target_pts = corr.virtual_targets;
    wc.weights = corr.confidences;
    return weighted_kabsch(wc);
}

}  // namespace hdm
