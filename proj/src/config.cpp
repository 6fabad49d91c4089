#include "hdm/config.hpp"

#include "hdm/errors.hpp"

namespace hdm {

void PipelineConfig::validate() const {
    if (voxel_size <= 0.0) throw DegenerateInput("config: voxel_size must be > 0");
    if (input_points == 0) throw DegenerateInput("config: input_points must be positive");
    for (std::size_t n : level_sizes)
        if (n == 0) throw DegenerateInput("config: level sizes must be positive");
    for (int c : level_dims)
        if (c <= 0) throw DegenerateInput("config: level dims must be positive");
    if (k1 <= 0 || k2 <= 0 || upsample_k <= 0)
        throw DegenerateInput("config: k values must be positive");
    if (alpha <= 0.0) throw DegenerateInput("config: alpha must be > 0");
    if (static_cast<std::size_t>(k1) * static_cast<std::size_t>(k2) > level_sizes[2])
        throw DegenerateInput("config: k1*k2 must not exceed the deepest level size");
}

PipelineConfig PipelineConfig::toy() {
    PipelineConfig cfg;
    cfg.input_points = 2048;
    cfg.level_sizes = {256, 128, 64};
    cfg.level_dims = {16, 32, 64};
    return cfg;
}

}  // namespace hdm
