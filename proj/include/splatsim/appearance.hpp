#pragma once

#include <vector>

#include "splatsim/core.hpp"
#include "splatsim/raster.hpp"

namespace splatsim {

struct DistillView {
    Camera camera;
    RgbImage image;
    Mask mask;
};

struct DistillConfig {
    int iters = 300;
    /// Damping on the diagonally preconditioned step (1 = full Gauss-Newton
    /// step for an isolated splat).
    double learning_rate = 0.05;
    int patch_size = 8;
    double weight_pixel = 1.0;
    double weight_patch_stats = 0.5;
    std::vector<DistillView> views;
    RenderSettings render;

    void validate() const;
};

struct DistillResult {
    /// Object-frame cloud with refined colors; geometry and opacity untouched.
    SplatCloud cloud;
    std::vector<double> loss_trace;
    /// Set when no view has any overlap; the input is returned unchanged.
    bool empty_overlap = false;
    std::size_t supported_splats = 0;
};

/// gt_mask AND (rendered_alpha > threshold).
Mask overlap_region(const Mask& gt_mask, const GrayImage& rendered_alpha, double threshold = 0.5);

/// Color-only refinement against the views inside the overlap of observed
/// and rendered masks: pixel L2 plus per-patch mean/variance matching.
DistillResult distill_colors(const SplatCloud& object, const RigidPose& pose, const DistillConfig& config);

}  // namespace splatsim
