#include "hdm/learned.hpp"

#include <cmath>

#include "hdm/errors.hpp"

namespace hdm {

namespace {

using tape::Var;

int coarse_s1_dim(const PipelineConfig& cfg) { return 1 + 4 + 2 * cfg.level_dims[2]; }
int coarse_s2_dim(const PipelineConfig& cfg) { return 2 + 4 + 2 * cfg.level_dims[2]; }
int fine_dim(const PipelineConfig& cfg, int level) { return 1 + 4 + 2 * cfg.level_dims[level - 1]; }

void add_stack(ModelParams& params, const std::string& prefix, const std::vector<int>& widths,
               std::mt19937_64& rng) {
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        params.tensors[prefix + "." + std::to_string(i) + ".W"] =
            glorot_uniform(widths[i], widths[i + 1], rng);  // stored in x out
        params.tensors[prefix + "." + std::to_string(i) + ".b"] =
            Matrix::Zero(1, widths[i + 1]);
    }
}

void add_context(ModelParams& params, const std::string& prefix, int feat_dim, int hidden,
                 bool with_confidence, std::mt19937_64& rng) {
    add_stack(params, prefix + ".mlp", {feat_dim, hidden, hidden, hidden}, rng);
    add_stack(params, prefix + ".scorer", {2 * hidden, hidden, 1}, rng);
    if (with_confidence)
        add_stack(params, prefix + ".conf", {hidden, std::max(hidden / 2, 1), 1}, rng);
}

tape::DenseStackVar stack_vars(const MatcherVars& vars, const std::string& prefix,
                               int n_layers, const std::vector<Activation>& acts) {
    tape::DenseStackVar stack;
    for (int i = 0; i < n_layers; ++i) {
        tape::DenseStackVar::Layer layer;
        layer.W = vars.at(prefix + "." + std::to_string(i) + ".W");
        layer.b = vars.at(prefix + "." + std::to_string(i) + ".b");
        layer.act = acts[static_cast<std::size_t>(i)];
        stack.layers.push_back(std::move(layer));
    }
    return stack;
}

struct ContextStacks {
    tape::DenseStackVar mlp;
    tape::DenseStackVar scorer;
    tape::DenseStackVar conf;  // may be empty
};

ContextStacks context_stacks(const MatcherVars& vars, const std::string& prefix,
                             bool with_confidence) {
    ContextStacks cs;
    cs.mlp = stack_vars(vars, prefix + ".mlp", 3,
                        {Activation::Relu, Activation::Relu, Activation::None});
    cs.scorer = stack_vars(vars, prefix + ".scorer", 2, {Activation::Relu, Activation::None});
    if (with_confidence)
        cs.conf = stack_vars(vars, prefix + ".conf", 2, {Activation::Relu, Activation::None});
    return cs;
}

struct SoftMatchVars {
    Var weights;  // (N*k) x 1
    Var coords;   // N x 3
    Var descs;    // N x C
    Var conf;     // N x 1 when requested
};

// Shared learned scorer: masked features -> shared MLP -> maxpool-concat ->
// member scores -> per-cluster softmax -> weighted aggregation.
SoftMatchVars learned_soft_match(const Var& features, const Var& member_coords,
                                 const Var& member_descs, int k, const ContextStacks& cs,
                                 bool with_confidence, const Var& mask /* N x F or null */) {
    Var feat_in = features;
    if (mask) feat_in = tape::cwise_mul(feat_in, tape::repeat_rows(mask, k));
    const Var mapped = cs.mlp.forward(feat_in);
    const Var pooled = tape::block_max(mapped, k);
    const Var cat = tape::hconcat({mapped, tape::repeat_rows(pooled, k)});
    const Var scores = cs.scorer.forward(cat);
    SoftMatchVars out;
    out.weights = tape::block_softmax(scores, k);
    out.coords = tape::block_weighted_sum(out.weights, member_coords, k);
    out.descs = tape::rows_l2_normalize(tape::block_weighted_sum(out.weights, member_descs, k));
    if (with_confidence) out.conf = tape::sigmoid(cs.conf.forward(pooled));
    return out;
}

// Per-cluster normalized cosine similarity column, computed on values.
Eigen::VectorXd similarity_column(const DescMatrix& center_descs, const Matrix& pool_descs,
                                  const std::vector<std::vector<int>>& idx, int k) {
    const std::size_t n = idx.size();
    Eigen::VectorXd s(static_cast<Eigen::Index>(n) * k);
    DescMatrix members(k, pool_descs.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) members.row(j) = pool_descs.row(idx[i][j]);
        const Eigen::VectorXd si = feature_consistency(
            center_descs.row(static_cast<Eigen::Index>(i)).transpose(), members);
        s.segment(static_cast<Eigen::Index>(i) * k, k) = si;
    }
    return s;
}

Matrix flatten_points(const std::vector<Vec3>& pts) {
    Matrix m(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    return m;
}

std::vector<int> flatten_indices(const std::vector<std::vector<int>>& idx) {
    std::vector<int> flat;
    for (const auto& row : idx) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

}  // namespace

ModelParams init_matcher_params(const PipelineConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ModelParams params;
    const int c3 = cfg.level_dims[2];
    add_context(params, "coarse.s1", coarse_s1_dim(cfg), c3, false, rng);
    add_context(params, "coarse.s2", coarse_s2_dim(cfg), c3, true, rng);
    for (int level : {2, 1}) {
        const int cl = cfg.level_dims[level - 1];
        add_context(params, "fine." + std::to_string(level), fine_dim(cfg, level), cl, true, rng);
        add_stack(params, "mask." + std::to_string(level), {1, cl, fine_dim(cfg, level)}, rng);
    }
    return params;
}

const tape::Var& MatcherVars::at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw DegenerateInput("MatcherVars: missing tensor " + name);
    return it->second;
}

std::vector<std::string> MatcherVars::ordered_names() const {
    std::vector<std::string> names;
    names.reserve(vars.size());
    for (const auto& [name, var] : vars) names.push_back(name);
    return names;
}

MatcherVars make_matcher_vars(const ModelParams& params, bool trainable) {
    MatcherVars out;
    for (const auto& [name, tensor] : params.tensors)
        out.vars.emplace(name, trainable ? tape::leaf(tensor) : tape::constant(tensor));
    return out;
}

LearnedStage learned_double_soft(const PyramidLevel& src, const PyramidLevel& tgt,
                                 const PipelineConfig& cfg, const MatcherVars& vars) {
    const std::size_t n = src.size();
    if (n != tgt.size()) throw DimensionMismatch("learned_double_soft: level sizes differ");
    const int c3 = cfg.level_dims[2];
    const Matrix src_pts = flatten_points(src.keypoints);
    const Matrix tgt_pts = flatten_points(tgt.keypoints);

    Var pool_coords, pool_descs;  // stage-2 pool
    if (cfg.double_soft) {
        // Stage 1: aggregate a k2-cluster of the target per source keypoint.
        const int k2 = cfg.k2;
        const NeighborIndex nn = knn_descriptors(tgt.descriptors, src.descriptors, k2);
        const std::vector<int> flat = flatten_indices(nn.indices);

        Matrix features(static_cast<Eigen::Index>(n) * k2, coarse_s1_dim(cfg));
        features.setZero();
        if (cfg.feature_consistency)
            features.col(0) = similarity_column(src.descriptors, tgt.descriptors, nn.indices, k2);
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < k2; ++j) {
                const Eigen::Index r = static_cast<Eigen::Index>(i) * k2 + j;
                const Vec3 off = tgt.keypoints[nn.indices[i][j]] - src.keypoints[i];
                features.block(r, 1, 1, 3) = off.transpose();
                features(r, 4) = off.norm();
                features.block(r, 5, 1, c3) = src.descriptors.row(static_cast<Eigen::Index>(i));
                features.block(r, 5 + c3, 1, c3) = tgt.descriptors.row(nn.indices[i][j]);
            }

        Matrix member_coords(static_cast<Eigen::Index>(n) * k2, 3);
        Matrix member_descs(static_cast<Eigen::Index>(n) * k2, c3);
        for (std::size_t r = 0; r < flat.size(); ++r) {
            member_coords.row(static_cast<Eigen::Index>(r)) = tgt_pts.row(flat[r]);
            member_descs.row(static_cast<Eigen::Index>(r)) = tgt.descriptors.row(flat[r]);
        }
        const SoftMatchVars s1 = learned_soft_match(
            tape::constant(features), tape::constant(member_coords),
            tape::constant(member_descs), k2, context_stacks(vars, "coarse.s1", false), false, {});

        if (cfg.sparse_to_denser) {
            pool_coords = tape::vconcat(s1.coords, tape::constant(tgt_pts));
            pool_descs = tape::vconcat(s1.descs, tape::constant(tgt.descriptors));
        } else {
            pool_coords = s1.coords;
            pool_descs = s1.descs;
        }
    } else {
        pool_coords = tape::constant(tgt_pts);
        pool_descs = tape::constant(tgt.descriptors);
    }

    // Stage 2 on the (optionally densified) pool; kNN and similarity use
    // current values, aggregation stays differentiable.
    const int k1 = cfg.k1;
    DescMatrix pool_desc_vals = pool_descs->value;
    const NeighborIndex nn2 = knn_descriptors(pool_desc_vals, src.descriptors, k1);
    const std::vector<int> flat2 = flatten_indices(nn2.indices);
    const NeighborIndex fwd1 = knn_descriptors(pool_desc_vals, src.descriptors, 1);
    const NeighborIndex bwd1 = knn_descriptors(src.descriptors, pool_desc_vals, 1);

    Matrix sim_b = Matrix::Zero(static_cast<Eigen::Index>(n) * k1, 2);
    if (cfg.feature_consistency)
        sim_b.col(0) = similarity_column(src.descriptors, pool_desc_vals, nn2.indices, k1);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < k1; ++j)
            sim_b(static_cast<Eigen::Index>(i) * k1 + j, 1) = bilateral_consensus(
                static_cast<int>(i), nn2.indices[i][j], fwd1, bwd1);

    const Var member_coords2 = tape::gather_rows(pool_coords, flat2);
    const Var member_descs2 = tape::gather_rows(pool_descs, flat2);

    Matrix centers_rep(static_cast<Eigen::Index>(n) * k1, 3);
    Matrix center_desc_rep(static_cast<Eigen::Index>(n) * k1, c3);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < k1; ++j) {
            centers_rep.row(static_cast<Eigen::Index>(i) * k1 + j) = src_pts.row(static_cast<Eigen::Index>(i));
            center_desc_rep.row(static_cast<Eigen::Index>(i) * k1 + j) =
                src.descriptors.row(static_cast<Eigen::Index>(i));
        }
    const Var offsets = tape::sub(member_coords2, tape::constant(centers_rep));
    const Var dists = tape::row_norm(offsets);
    const Var features2 = tape::hconcat({tape::constant(sim_b), offsets, dists,
                                         tape::constant(center_desc_rep), member_descs2});

    const SoftMatchVars s2 =
        learned_soft_match(features2, member_coords2, member_descs2, k1,
                           context_stacks(vars, "coarse.s2", true), true, {});
    LearnedStage out;
    out.coords = s2.coords;
    out.descs = s2.descs;
    out.confidences = s2.conf;
    return out;
}

LearnedStage learned_refine_match(const PyramidLevel& src_level, const PyramidLevel& tgt_level,
                                  const RigidTransform& T_prev,
                                  const std::vector<double>& mask_init,
                                  const PipelineConfig& cfg, const MatcherVars& vars, int level) {
    const std::size_t n = src_level.size();
    const int k = cfg.k1;
    const int cl = cfg.level_dims[level - 1];
    std::vector<Vec3> centers(n);
    for (std::size_t i = 0; i < n; ++i) centers[i] = T_prev(src_level.keypoints[i]);

    const NeighborIndex nn = knn_points(tgt_level.keypoints, centers, k);
    const std::vector<int> flat = flatten_indices(nn.indices);

    Matrix features(static_cast<Eigen::Index>(n) * k, fine_dim(cfg, level));
    features.setZero();
    if (cfg.feature_consistency)
        features.col(0) =
            similarity_column(src_level.descriptors, tgt_level.descriptors, nn.indices, k);
    Matrix member_coords(static_cast<Eigen::Index>(n) * k, 3);
    Matrix member_descs(static_cast<Eigen::Index>(n) * k, cl);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
            const Eigen::Index r = static_cast<Eigen::Index>(i) * k + j;
            const Vec3& member = tgt_level.keypoints[nn.indices[i][j]];
            const Vec3 off = member - centers[i];
            features.block(r, 1, 1, 3) = off.transpose();
            features(r, 4) = off.norm();
            features.block(r, 5, 1, cl) = src_level.descriptors.row(static_cast<Eigen::Index>(i));
            features.block(r, 5 + cl, 1, cl) = tgt_level.descriptors.row(nn.indices[i][j]);
            member_coords.row(r) = member.transpose();
            member_descs.row(r) = tgt_level.descriptors.row(nn.indices[i][j]);
        }

    Var mask_map;  // N x F channel mask from the upsampled confidences
    if (cfg.mask) {
        Matrix init(static_cast<Eigen::Index>(n), 1);
        for (std::size_t i = 0; i < n; ++i) init(static_cast<Eigen::Index>(i), 0) = mask_init[i];
        const tape::DenseStackVar mask_mlp = stack_vars(
            vars, "mask." + std::to_string(level), 2, {Activation::Relu, Activation::Sigmoid});
        mask_map = mask_mlp.forward(tape::constant(init));
    }

    const SoftMatchVars sm = learned_soft_match(
        tape::constant(features), tape::constant(member_coords), tape::constant(member_descs), k,
        context_stacks(vars, "fine." + std::to_string(level), true), true, mask_map);

    LearnedStage out;
    out.coords = sm.coords;
    out.descs = sm.descs;
    out.confidences = sm.conf;
    return out;
}

namespace {

RigidTransform kabsch_eval(const std::vector<Vec3>& src_pts, const Matrix& targets,
                           const Matrix& weights) {
    WeightedCorrespondences wc;
    wc.source_pts = src_pts;
    wc.target_pts.reserve(src_pts.size());
    wc.weights.reserve(src_pts.size());
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        wc.target_pts.emplace_back(targets.row(i).transpose());
        wc.weights.push_back(std::max(weights(i, 0), 0.0));
    }
    return weighted_kabsch(wc);
}

}  // namespace

RigidTransform kabsch_from_vars(const std::vector<Vec3>& src_pts, const tape::Var& targets,
                                const tape::Var& weights) {
    return kabsch_eval(src_pts, targets->value, weights->value);
}

tape::Var kabsch_loss(const std::vector<Vec3>& src_pts, const tape::Var& targets,
                      const tape::Var& weights, const RigidTransform& gt, double alpha,
                      double step_factor) {
    LossConfig lc{alpha};
    const double loss0 = loss_total(kabsch_eval(src_pts, targets->value, weights->value), gt, lc);

    auto node = std::make_shared<tape::Node>();
    node->value = Matrix::Constant(1, 1, loss0);
    node->parents = {targets, weights};
    node->requires_grad = targets->requires_grad || weights->requires_grad;
    if (!node->requires_grad) return node;

    tape::Node* raw = node.get();
    node->backprop = [raw, src_pts, targets, weights, gt, lc, step_factor]() {
        const double g = raw->grad(0, 0);
        auto fd_into = [&](const tape::Var& input, const Matrix& other, bool input_is_targets) {
            if (!input->requires_grad) return;
            input->ensure_grad();
            const double rms = std::sqrt(input->value.array().square().mean());
            const double h = step_factor * std::max(rms, 1e-6);
            Matrix perturbed = input->value;
            for (Eigen::Index r = 0; r < perturbed.rows(); ++r)
                for (Eigen::Index c = 0; c < perturbed.cols(); ++c) {
                    const double orig = perturbed(r, c);
                    perturbed(r, c) = orig + h;
                    const double lp = loss_total(
                        input_is_targets ? kabsch_eval(src_pts, perturbed, other)
                                         : kabsch_eval(src_pts, other, perturbed),
                        gt, lc);
                    perturbed(r, c) = orig - h;
                    const double lm = loss_total(
                        input_is_targets ? kabsch_eval(src_pts, perturbed, other)
                                         : kabsch_eval(src_pts, other, perturbed),
                        gt, lc);
                    perturbed(r, c) = orig;
                    input->grad(r, c) += g * (lp - lm) / (2.0 * h);
                }
        };
        fd_into(targets, weights->value, true);
        fd_into(weights, targets->value, false);
    };
    return node;
}

}  // namespace hdm
