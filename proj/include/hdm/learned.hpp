#pragma once

#include <map>
#include <string>
#include <vector>

#include "hdm/coarse.hpp"
#include "hdm/config.hpp"
#include "hdm/pyramid.hpp"
#include "hdm/tape.hpp"

namespace hdm {

// Trainable matcher parameters: soft-matching MLPs for the coarse stages and
// both fine levels, confidence heads, and the per-level mask MLPs. The
// pyramid detector is a separate parameter set and stays frozen.
ModelParams init_matcher_params(const PipelineConfig& cfg, std::uint64_t seed);

// Tape leaves over a parameter snapshot in deterministic (map) order.
// When trainable, gradients accumulate on the leaves after backward().
struct MatcherVars {
    std::map<std::string, tape::Var> vars;

    const tape::Var& at(const std::string& name) const;
    std::vector<std::string> ordered_names() const;
};

MatcherVars make_matcher_vars(const ModelParams& params, bool trainable);

struct LearnedStage {
    tape::Var coords;       // N x 3
    tape::Var descs;        // N x C, rows L2-normalized
    tape::Var confidences;  // N x 1, empty Var unless the stage predicts them
};

LearnedStage learned_double_soft(const PyramidLevel& src, const PyramidLevel& tgt,
                                 const PipelineConfig& cfg, const MatcherVars& vars);

// Fine-layer single soft matching in Euclidean space with the channel mask.
LearnedStage learned_refine_match(const PyramidLevel& src_level, const PyramidLevel& tgt_level,
                                  const RigidTransform& T_prev,
                                  const std::vector<double>& mask_init,
                                  const PipelineConfig& cfg, const MatcherVars& vars, int level);

// Weighted Kabsch on current values (no gradient).
RigidTransform kabsch_from_vars(const std::vector<Vec3>& src_pts, const tape::Var& targets,
                                const tape::Var& weights);

// 1x1 loss node: weighted Kabsch over (src, targets, weights) followed by
// loss_total against gt. Backward is central finite differences over the
// target coordinates and weights, step = step_factor * per-tensor RMS scale.
tape::Var kabsch_loss(const std::vector<Vec3>& src_pts, const tape::Var& targets,
                      const tape::Var& weights, const RigidTransform& gt, double alpha,
                      double step_factor = 1e-5);

}  // namespace hdm
