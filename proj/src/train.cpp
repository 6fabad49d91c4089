#include "hdm/train.hpp"

#include <cstdio>

#include "hdm/errors.hpp"
#include "hdm/fine.hpp"
#include "hdm/sampling.hpp"

namespace hdm {

namespace {

struct CachedPair {
    std::array<PyramidLevel, 3> src;
    std::array<PyramidLevel, 3> tgt;
    RigidTransform gt;
};

CachedPair prepare(const ScenePairSpec& scene, std::uint64_t pair_seed,
                   const PipelineConfig& cfg) {
    ScenePairSpec s = scene;
    s.seed = pair_seed;
    const ScenePair pair = generate_pair(s);
    auto preprocess = [&](const PointCloud& raw, std::uint64_t seed) {
        PointCloud c = voxel_downsample(raw, cfg.voxel_size);
        if (c.size() > cfg.input_points) c = random_subsample(c, cfg.input_points, seed);
        return c;
    };
    PipelineConfig pc = cfg;
    CachedPair out;
    out.gt = pair.gt;
    out.src = build_pyramid(preprocess(pair.src, cfg.seed), pc, nullptr);
    out.tgt = build_pyramid(preprocess(pair.tgt, cfg.seed), pc, nullptr);
    return out;
}

std::vector<double> column_values(const tape::Var& v) {
    std::vector<double> out(static_cast<std::size_t>(v->value.rows()));
    for (Eigen::Index i = 0; i < v->value.rows(); ++i) out[static_cast<std::size_t>(i)] = v->value(i, 0);
    return out;
}

// Sum of the coarse loss and both refinement losses; each refinement layer
// is scored against the residual of the detached previous estimate.
tape::Var pair_loss(const CachedPair& pair, const PipelineConfig& cfg, const MatcherVars& vars) {
    const LearnedStage s3 = learned_double_soft(pair.src[2], pair.tgt[2], cfg, vars);
    tape::Var loss =
        kabsch_loss(pair.src[2].keypoints, s3.coords, s3.confidences, pair.gt, cfg.alpha);

    RigidTransform T_prev = kabsch_from_vars(pair.src[2].keypoints, s3.coords, s3.confidences);
    std::vector<double> conf = column_values(s3.confidences);
    const PyramidLevel* deeper = &pair.src[2];

    for (int level = 2; level >= 1; --level) {
        const PyramidLevel& src_l = pair.src[static_cast<std::size_t>(level - 1)];
        const PyramidLevel& tgt_l = pair.tgt[static_cast<std::size_t>(level - 1)];
        const std::vector<double> mask = upsample_confidence(
            src_l.keypoints, deeper->keypoints, conf, cfg.upsample_k);
        const LearnedStage sl = learned_refine_match(src_l, tgt_l, T_prev, mask, cfg, vars, level);

        std::vector<Vec3> moved(src_l.size());
        for (std::size_t i = 0; i < src_l.size(); ++i) moved[i] = T_prev(src_l.keypoints[i]);
        const RigidTransform gt_delta = compose(pair.gt, invert(T_prev));
        loss = tape::add(loss, kabsch_loss(moved, sl.coords, sl.confidences, gt_delta, cfg.alpha));

        const RigidTransform delta = kabsch_from_vars(moved, sl.coords, sl.confidences);
        T_prev = compose(delta, T_prev);
        conf = column_values(sl.confidences);
        deeper = &src_l;
    }
    return loss;
}

}  // namespace

TrainReport train_matcher(const PipelineConfig& cfg, const TrainConfig& tcfg,
                          ModelParams& matcher) {
    if (tcfg.n_pairs <= 0 || tcfg.epochs <= 0)
        throw DegenerateInput("train_matcher: epochs and n_pairs must be positive");

    std::vector<CachedPair> pairs;
    pairs.reserve(static_cast<std::size_t>(tcfg.n_pairs));
    for (int i = 0; i < tcfg.n_pairs; ++i)
        pairs.push_back(prepare(tcfg.scene, tcfg.seed + 1000 + static_cast<std::uint64_t>(i), cfg));

    const std::vector<std::string> names = [&] {
        std::vector<std::string> out;
        for (const auto& [name, tensor] : matcher.tensors) out.push_back(name);
        return out;
    }();

    AdamState adam;
    TrainReport report;
    {
        // Pre-training evaluation: the baseline the halving target is
        // measured against, before any parameter update.
        double total = 0.0;
        for (const CachedPair& pair : pairs) {
            const MatcherVars vars = make_matcher_vars(matcher, false);
            total += pair_loss(pair, cfg, vars)->value(0, 0);
        }
        report.initial_loss = total / static_cast<double>(tcfg.n_pairs);
        if (tcfg.verbose) std::fprintf(stderr, "initial loss %.6f\n", report.initial_loss);
    }
    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        double total = 0.0;
        for (const CachedPair& pair : pairs) {
            MatcherVars vars = make_matcher_vars(matcher, true);
            const tape::Var loss = pair_loss(pair, cfg, vars);
            total += loss->value(0, 0);
            tape::backward(loss);

            std::vector<Matrix> params, grads;
            params.reserve(names.size());
            grads.reserve(names.size());
            for (const std::string& name : names) {
                const tape::Var& v = vars.at(name);
                params.push_back(v->value);
                grads.push_back(v->grad.size() == 0
                                    ? Matrix::Zero(v->value.rows(), v->value.cols())
                                    : v->grad);
            }
            adam_step(params, grads, adam, tcfg.adam, epoch);
            for (std::size_t i = 0; i < names.size(); ++i) matcher.tensors[names[i]] = params[i];
        }
        const double mean = total / static_cast<double>(tcfg.n_pairs);
        report.epoch_loss.push_back(mean);
        if (tcfg.verbose) std::fprintf(stderr, "epoch %d loss %.6f\n", epoch, mean);
    }
    report.final_loss = report.epoch_loss.back();
    return report;
}

std::string loss_curve_csv(const TrainReport& report) {
    std::string out = "epoch,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, report.epoch_loss[i]);
        out += buf;
    }
    return out;
}

}  // namespace hdm
