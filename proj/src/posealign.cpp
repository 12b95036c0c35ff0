#include "splatsim/posealign.hpp"

#include <array>
#include <cmath>
#include <string>

namespace splatsim {

namespace {

double similarity(const GrayImage& a, const GrayImage& b, SilhouetteLoss kind, const SsimParams& params) {
    return kind == SilhouetteLoss::ms_ssim ? ms_ssim(a, b, params).value : ssim(a, b, params);
}

struct Evaluation {
    double lt = 0.0;
    double lr = 0.0;
    bool visible = false;
    double total() const { return lt + lr; }
};

class Objective {
public:
    Objective(const SplatCloud& cloud, const AlignConfig& config) : cloud_(cloud), config_(config) {
        for (const auto& v : config.views) targets_.push_back(mask_to_gray(v.mask));
    }

    Evaluation both(const RigidPose& pose) const {
        const SplatCloud posed = transform_cloud(cloud_, pose);
        Evaluation e;
        for (std::size_t v = 0; v < targets_.size(); ++v) {
            const GrayImage alpha = render_silhouette(posed, config_.views[v].camera, config_.render);
            for (double a : alpha.data)
                if (a > 0.0) {
                    e.visible = true;
                    break;
                }
            const double st = similarity(alpha, targets_[v], config_.loss_t, config_.ssim);
            const double sr = config_.loss_r == config_.loss_t
                                  ? st
                                  : similarity(alpha, targets_[v], config_.loss_r, config_.ssim);
            e.lt += 1.0 - st;
            e.lr += 1.0 - sr;
        }
        return e;
    }

    double single(const RigidPose& pose, SilhouetteLoss kind) const {
        const SplatCloud posed = transform_cloud(cloud_, pose);
        double loss = 0.0;
        for (std::size_t v = 0; v < targets_.size(); ++v) {
            const GrayImage alpha = render_silhouette(posed, config_.views[v].camera, config_.render);
            loss += 1.0 - similarity(alpha, targets_[v], kind, config_.ssim);
        }
        return loss;
    }

private:
    const SplatCloud& cloud_;
    const AlignConfig& config_;
    std::vector<GrayImage> targets_;
};

// Central differences over three coordinates of a pose perturbation.
template <typename Perturb>
Vec3 central_gradient(const Objective& obj, SilhouetteLoss kind, double eps, Perturb&& perturb) {
    std::array<double, 6> values{};
#pragma omp parallel for
    for (int probe = 0; probe < 6; ++probe) {
        Vec3 delta = Vec3::Zero();
        delta[probe / 2] = (probe % 2 == 0) ? eps : -eps;
        values[probe] = obj.single(perturb(delta), kind);
    }
    Vec3 g;
    for (int k = 0; k < 3; ++k) g[k] = (values[2 * k] - values[2 * k + 1]) / (2.0 * eps);
    return g;
}

}  // namespace

void AlignConfig::validate() const {
    if (!(translation_step > 0.0) || !(rotation_step > 0.0) || !(fd_epsilon_t > 0.0) || !(fd_epsilon_r > 0.0))
        throw ConfigError("alignment steps and finite-difference epsilons must be positive");
    if (views.empty()) throw ConfigError("alignment needs at least one view");
    if (max_iters < 0 || convergence_window < 1 || max_backtracks < 0)
        throw ConfigError("alignment iteration limits must be non-negative");
    for (const auto& v : views) {
        v.camera.validate();
        if (!v.mask.same_shape(v.camera.width, v.camera.height))
            throw ConfigError("alignment mask dimensions do not match its camera");
    }
    ssim.validate();
}

PoseInit initialize_pose(const SplatCloud& object_cloud, const std::vector<PointmapObservation>& observations) {
    if (object_cloud.empty()) throw ConfigError("cannot initialise the pose of an empty cloud");
    std::vector<Vec3> pts;
    for (const auto& obs : observations) {
        if (!obs.mask->same_shape(obs.pointmap->validity) ||
            !obs.pointmap->validity.same_shape(obs.camera->width, obs.camera->height))
            throw ConfigError("pointmap, mask and camera dimensions disagree");
        const RigidPose cam_to_world = obs.camera->world_to_camera.inverse();
        for (std::size_t i = 0; i < obs.mask->size(); ++i)
            if (obs.mask->data[i] && obs.pointmap->validity.data[i])
                pts.push_back(cam_to_world.apply(obs.pointmap->points.data[i]));
    }
    if (pts.size() < kMinInitSupport)
        throw ConfigError("only " + std::to_string(pts.size()) +
                          " masked pixels have valid depth (need at least 50); check the depth map and object mask");
    Vec3 target = Vec3::Zero();
    for (const auto& p : pts) target += p;
    target /= static_cast<double>(pts.size());
    const Vec3 source = object_cloud.mean_centroid();

    double target_ms = 0.0, source_ms = 0.0;
    for (const auto& p : pts) target_ms += (p - target).squaredNorm();
    for (const auto& c : object_cloud.centroids) source_ms += (c - source).squaredNorm();
    target_ms /= static_cast<double>(pts.size());
    source_ms /= static_cast<double>(object_cloud.size());

    PoseInit init;
    init.pose = RigidPose::from_translation(target - source);
    init.scale = (target_ms > 0.0 && source_ms > 0.0) ? std::sqrt(target_ms / source_ms) : 1.0;
    init.target_centroid = target;
    init.support = pts.size();
    return init;
}

PoseInit initialize_pose(const SplatCloud& object_cloud, const Pointmap& pointmap, const Mask& object_mask,
                         const Camera& camera) {
    return initialize_pose(object_cloud, std::vector<PointmapObservation>{{&pointmap, &object_mask, &camera}});
}

RigidPose rotate_about_centroid(const RigidPose& pose, const Vec3& local_centroid, const Vec3& omega) {
    const Quat dq = quat_from_rotation_vector(omega);
    const Vec3 pivot = pose.apply(local_centroid);
    RigidPose out;
    out.rotation = (dq * pose.rotation).normalized();
    out.translation = dq * (pose.translation - pivot) + pivot;
    return out;
}

double silhouette_loss(const SplatCloud& object_cloud, const RigidPose& pose, const AlignConfig& config,
                       SilhouetteLoss kind) {
    return Objective(object_cloud, config).single(pose, kind);
}

double silhouette_iou(const GrayImage& alpha, const Mask& mask) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const bool a = alpha.data[i] > 0.5;
        const bool m = mask.data[i] != 0;
        inter += a && m;
        uni += a || m;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

AlignResult refine_pose(const SplatCloud& object_cloud, const RigidPose& initial, const AlignConfig& config) {
    config.validate();
    const Objective obj(object_cloud, config);
    const Vec3 pivot = object_cloud.mean_centroid();

    AlignResult result;
    result.pose = initial;
    Evaluation cur = obj.both(initial);
    if (!cur.visible) throw DivergenceError("object silhouette is empty in every view at the initial pose", initial);
    result.loss_trace.push_back(cur.total());

    for (int iter = 0; iter < config.max_iters; ++iter) {
        bool moved = false;

        // Translation sub-step on L_t.
        const RigidPose base_t = result.pose;
        const Vec3 gt = central_gradient(obj, config.loss_t, config.fd_epsilon_t, [&](const Vec3& d) {
            RigidPose p = base_t;
            p.translation += d;
            return p;
        });
        if (gt.norm() > 0.0) {
            const Vec3 dir = -gt.normalized();
            double step = config.translation_step;
            for (int b = 0; b <= config.max_backtracks; ++b, step *= 0.5) {
                RigidPose cand = result.pose;
                cand.translation += step * dir;
                const Evaluation e = obj.both(cand);
                if (e.visible && e.lt < cur.lt && e.total() <= cur.total()) {
                    result.pose = cand;
                    cur = e;
                    moved = true;
                    break;
                }
            }
        }

        // Rotation sub-step on L_R, applied to the updated translation.
        const RigidPose base_r = result.pose;
        const Vec3 gr = central_gradient(obj, config.loss_r, config.fd_epsilon_r,
                                         [&](const Vec3& d) { return rotate_about_centroid(base_r, pivot, d); });
        if (gr.norm() > 0.0) {
            const Vec3 dir = -gr.normalized();
            double step = config.rotation_step;
            for (int b = 0; b <= config.max_backtracks; ++b, step *= 0.5) {
                const RigidPose cand = rotate_about_centroid(result.pose, pivot, step * dir);
                const Evaluation e = obj.both(cand);
                if (e.visible && e.lr < cur.lr && e.total() <= cur.total()) {
                    result.pose = cand;
                    cur = e;
                    moved = true;
                    break;
                }
            }
        }

        result.iters_used = iter + 1;
        result.loss_trace.push_back(cur.total());
        if (!moved) {
            result.converged = true;
            break;
        }
        const auto n = result.loss_trace.size();
        if (n > static_cast<std::size_t>(config.convergence_window) &&
            result.loss_trace[n - 1 - config.convergence_window] - result.loss_trace[n - 1] < config.convergence_tol) {
            result.converged = true;
            break;
        }
    }
    return result;
}

}  // namespace splatsim
