#pragma once

// Scene builders shared by the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <vector>

#include "splatsim/core.hpp"
#include "splatsim/posealign.hpp"
#include "splatsim/raster.hpp"
#include "splatsim/synthetic.hpp"

namespace fixtures {

using namespace splatsim;

inline constexpr double kPi = 3.14159265358979323846;

inline double deg(double rad) { return rad * 180.0 / kPi; }
inline double rad(double deg) { return deg * kPi / 180.0; }

inline Vec3 random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v;
    do v = Vec3(n(rng), n(rng), n(rng));
    while (v.norm() < 1e-6);
    return v.normalized();
}

/// Camera on a circle of radius `dist` around `target`, raised by `height`.
inline Camera orbit_camera(double azimuth_deg, double height, double dist, const Vec3& target, double focal, int size) {
    const Vec3 eye = target + Vec3(dist * std::sin(rad(azimuth_deg)), height, dist * std::cos(rad(azimuth_deg)));
    return look_at_camera(eye, target, Vec3::UnitY(), focal, size, size);
}

/// Asymmetric box (0.3 x 0.2 x 0.12 m) with about 1500 surface splats.
inline SplatCloud asymmetric_box() {
    return make_box_cloud(Vec3(0.15, 0.1, 0.06), [](const Vec3&) { return Vec3(0.7, 0.6, 0.5); }, 0.0127);
}

struct PoseScene {
    SplatCloud cloud;
    RigidPose truth;
    AlignConfig config;
};

/// Two views about 90 degrees apart at about 1.2 m; masks are the ground
/// truth silhouettes.
inline PoseScene pose_scene(int size = 256) {
    PoseScene s;
    s.cloud = asymmetric_box();
    s.truth.rotation = Quat(Eigen::AngleAxisd(rad(25.0), Vec3(0.2, 1.0, 0.1).normalized()));
    s.truth.translation = Vec3(0.02, 0.0, -0.01);
    const Vec3 target = s.truth.translation;
    const std::vector<Camera> cams = {orbit_camera(20.0, 0.45, 1.12, target, 300.0, size),
                                      orbit_camera(110.0, 0.45, 1.12, target, 300.0, size)};
    const SplatCloud posed = transform_cloud(s.cloud, s.truth);
    for (const auto& cam : cams) {
        const GrayImage sil = render_silhouette(posed, cam);
        Mask m(sil.width, sil.height, 0);
        for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = sil.data[i] > 0.5;
        s.config.views.push_back({cam, m});
    }
    return s;
}

/// Random deformation gradient with det > 0: a rotation times a
/// perturbation of the identity.
inline Mat3 random_deformation(std::mt19937_64& rng, double spread = 0.3) {
    std::uniform_real_distribution<double> u(-spread, spread);
    Mat3 a;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) a(r, c) = (r == c ? 1.0 : 0.0) + u(rng);
    if (a.determinant() <= 0.0) a.col(0) *= -1.0;
    std::uniform_real_distribution<double> ang(-kPi, kPi);
    return Eigen::AngleAxisd(ang(rng), random_unit(rng)).toRotationMatrix() * a;
}

}  // namespace fixtures
