#pragma once

#include <stdexcept>
#include <vector>

#include "splatsim/core.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/raster.hpp"

namespace splatsim {

enum class SilhouetteLoss { ssim, ms_ssim };

struct AlignView {
    Camera camera;
    Mask mask;
};

struct AlignConfig {
    int max_iters = 200;
    double translation_step = 0.01;  // m
    double rotation_step = 0.01;     // rad
    double fd_epsilon_t = 1e-3;
    double fd_epsilon_r = 1e-3;
    SilhouetteLoss loss_t = SilhouetteLoss::ms_ssim;
    SilhouetteLoss loss_r = SilhouetteLoss::ssim;
    /// Converged once the total loss changes by less than this over
    /// `convergence_window` iterations.
    double convergence_tol = 1e-5;
    int convergence_window = 10;
    int max_backtracks = 5;
    std::vector<AlignView> views;
    SsimParams ssim;
    RenderSettings render;

    void validate() const;
};

struct AlignResult {
    RigidPose pose;
    /// Total loss (translation + rotation objective) at the start and after
    /// every iteration.
    std::vector<double> loss_trace;
    bool converged = false;
    int iters_used = 0;
};

/// Thrown when the object leaves every view; carries the last pose that
/// still produced a silhouette.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, const RigidPose& last_valid)
        : std::runtime_error(what), last_valid_pose(last_valid) {}
    RigidPose last_valid_pose;
};

struct PoseInit {
    RigidPose pose;
    /// Isotropic correction about the cloud centroid (RMS radius ratio).
    double scale = 1.0;
    Vec3 target_centroid = Vec3::Zero();
    std::size_t support = 0;
};

struct PointmapObservation {
    const Pointmap* pointmap;
    const Mask* mask;
    const Camera* camera;
};

inline constexpr std::size_t kMinInitSupport = 50;

/// Places the cloud centroid on the centroid of the masked pointmap points
/// (world frame), with identity rotation.
PoseInit initialize_pose(const SplatCloud& object_cloud, const Pointmap& pointmap, const Mask& object_mask,
                         const Camera& camera);
/// Same, fusing masked points from several views.
PoseInit initialize_pose(const SplatCloud& object_cloud, const std::vector<PointmapObservation>& observations);

/// Alternating translation / rotation render-and-compare refinement.
/// Rotation increments pivot about the posed cloud centroid.
AlignResult refine_pose(const SplatCloud& object_cloud, const RigidPose& initial, const AlignConfig& config);

/// Pose after rotating by `omega` (axis-angle) about the world-space
/// centroid of the posed cloud.
RigidPose rotate_about_centroid(const RigidPose& pose, const Vec3& local_centroid, const Vec3& omega);

/// Summed loss sum_v (1 - similarity(silhouette, mask)).
double silhouette_loss(const SplatCloud& object_cloud, const RigidPose& pose, const AlignConfig& config,
                       SilhouetteLoss kind);

/// IoU of (rendered alpha > 0.5) against the mask.
double silhouette_iou(const GrayImage& alpha, const Mask& mask);

}  // namespace splatsim
