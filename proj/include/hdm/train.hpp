#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdm/config.hpp"
#include "hdm/learned.hpp"
#include "hdm/synth.hpp"

namespace hdm {

struct TrainConfig {
    int epochs = 30;
    int n_pairs = 32;
    AdamConfig adam;
    std::uint64_t seed = 0;
    double step_factor = 1e-5;
    bool verbose = false;
    ScenePairSpec scene;  // per-pair seed offsets are applied internally
};

struct TrainReport {
    std::vector<double> epoch_loss;  // mean per-pair loss
    double initial_loss = 0.0;       // epoch-0 mean
    double final_loss = 0.0;
};

// Trains the matcher on synthetic pairs with the deterministic handcrafted
// pyramid acting as the frozen detector. Pyramids are built once per pair and
// cached; Adam updates after every pair.
TrainReport train_matcher(const PipelineConfig& cfg, const TrainConfig& tcfg,
                          ModelParams& matcher);

std::string loss_curve_csv(const TrainReport& report);

}  // namespace hdm
