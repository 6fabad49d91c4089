#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace hdm {

enum class Mode { Deterministic, Learned };

// All pipeline hyperparameters plus the ablation switches.
struct PipelineConfig {
    double voxel_size = 0.3;           // meters
    std::size_t input_points = 16384;  // random subsample target after voxelization
    std::array<std::size_t, 3> level_sizes = {1024, 512, 256};
    std::array<int, 3> level_dims = {64, 128, 256};
    int k1 = 8;  // cluster size in pyramid build and second soft-matching stage
    int k2 = 8;  // first soft-matching stage cluster size
    int upsample_k = 8;  // confidence upsampling between layers
    double alpha = 1.8;  // rotation loss weight

    // Ablation switches (all on = full model).
    bool double_soft = true;
    bool sparse_to_denser = true;
    bool feature_consistency = true;
    bool mask = true;

    Mode mode = Mode::Deterministic;
    std::uint64_t seed = 0;

    void validate() const;  // throws DegenerateInput on inconsistent counts

    // Reduced configuration used by toy training runs.
    static PipelineConfig toy();
};

}  // namespace hdm
