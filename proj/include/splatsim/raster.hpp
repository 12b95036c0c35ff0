#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splatsim/core.hpp"

namespace splatsim {

enum class DepthEstimator {
    /// Alpha-blended ray/splat-plane intersection depth.
    unbiased,
    /// Alpha-blended camera-frame centroid depth.
    centroid,
};

struct RenderSettings {
    Vec3 background = Vec3::Zero();
    /// Depth is valid only where accumulated alpha exceeds this.
    double alpha_threshold = 0.5;
    /// Blending stops once transmittance drops below this.
    double min_transmittance = 1e-4;
    /// Added to the diagonal of every screen-space covariance (px^2).
    double dilation = 0.3;
    /// Footprint truncation in standard deviations.
    double truncation_sigma = 3.0;
    int tile_size = 16;
    /// Splats with camera-frame depth at or below this are culled.
    double near_plane = 1e-3;
    /// Splats whose plane is within this of parallel to the pixel ray are
    /// skipped by the unbiased depth estimator.
    double grazing_epsilon = 1e-8;
    DepthEstimator depth_estimator = DepthEstimator::unbiased;
};

struct RenderOutput {
    RgbImage color;
    GrayImage alpha;
    DepthMap depth;
};

/// Screen-space covariance J W Σ W^T J^T of splat `index`, without dilation.
/// nullopt when the splat is not in front of the camera.
std::optional<Mat2> project_covariance(const SplatCloud& cloud, std::size_t index, const Camera& camera);

RenderOutput render(const SplatCloud& cloud, const Camera& camera, const RenderSettings& settings = {});

/// Accumulated alpha only; cheaper than render().
GrayImage render_silhouette(const SplatCloud& cloud, const Camera& camera, const RenderSettings& settings = {});

DepthMap render_depth_unbiased(const SplatCloud& cloud, const Camera& camera, RenderSettings settings = {});
DepthMap render_depth_centroid(const SplatCloud& cloud, const Camera& camera, RenderSettings settings = {});

/// Per-pixel blending weights alpha_i * prod_{j<i}(1 - alpha_j), stored in
/// compressed rows: entries for pixel p are [offsets[p], offsets[p+1]).
struct ContributionMap {
    int width = 0;
    int height = 0;
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> splat;
    std::vector<double> weight;
    /// Final transmittance per pixel.
    std::vector<double> transmittance;
};

ContributionMap render_contributions(const SplatCloud& cloud, const Camera& camera,
                                     const RenderSettings& settings = {});

/// Evaluates the color image implied by a contribution map for a given
/// color table; identical to render().color for the same cloud.
RgbImage compose_colors(const ContributionMap& contributions, const std::vector<Vec3>& colors, const Vec3& background);

}  // namespace splatsim
