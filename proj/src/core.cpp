#include "splatsim/core.hpp"

#include <cmath>
#include <sstream>

namespace splatsim {

RigidPose RigidPose::compose(const RigidPose& rhs) const {
    RigidPose out;
    out.rotation = (rotation * rhs.rotation).normalized();
    out.translation = rotation * rhs.translation + translation;
    return out;
}

RigidPose RigidPose::inverse() const {
    RigidPose out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
}

bool RigidPose::is_identity() const {
    return rotation.w() == 1.0 && rotation.x() == 0.0 && rotation.y() == 0.0 && rotation.z() == 0.0 &&
           translation.isZero(0.0);
}

std::size_t count_set(const Mask& mask) {
    std::size_t n = 0;
    for (auto v : mask.data) n += v != 0;
    return n;
}

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ConfigError("camera dimensions must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
        throw ConfigError("camera principal point must lie inside the image");
    if (std::abs(world_to_camera.rotation.norm() - 1.0) > 1e-6)
        throw ConfigError("camera rotation quaternion is not unit-norm");
}

Vec3 Camera::center_world() const { return world_to_camera.inverse().translation; }

std::optional<PixelProjection> project_point(const Camera& camera, const Vec3& world_point) {
    const Vec3 p = camera.to_camera(world_point);
    if (!(p.z() > 0.0)) return std::nullopt;
    return PixelProjection{camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy, p.z()};
}

Pointmap backproject(const DepthMap& depth, const Camera& camera) {
    if (!depth.values.same_shape(camera.width, camera.height) || !depth.validity.same_shape(depth.values)) {
        std::ostringstream msg;
        msg << "depth map is " << depth.values.width << "x" << depth.values.height << " but camera is "
            << camera.width << "x" << camera.height;
        throw ConfigError(msg.str());
    }
    Pointmap out;
    out.points = Image<Vec3>(camera.width, camera.height, Vec3::Zero());
    out.validity = Mask(camera.width, camera.height, 0);
    for (int v = 0; v < camera.height; ++v) {
        for (int u = 0; u < camera.width; ++u) {
            const double d = depth.values.at(u, v);
            if (!depth.validity.at(u, v) || !std::isfinite(d) || d <= 0.0) continue;
            out.points.at(u, v) = Vec3((u - camera.cx) * d / camera.fx, (v - camera.cy) * d / camera.fy, d);
            out.validity.at(u, v) = 1;
        }
    }
    return out;
}

void SplatCloud::reserve(std::size_t n) {
    centroids.reserve(n);
    scales.reserve(n);
    orientations.reserve(n);
    opacities.reserve(n);
    colors.reserve(n);
}

void SplatCloud::push_back(const Vec3& centroid, const Vec3& scale, const Quat& orientation, double opacity,
                           const Vec3& color) {
    centroids.push_back(centroid);
    scales.push_back(scale);
    orientations.push_back(orientation);
    opacities.push_back(opacity);
    colors.push_back(color);
}

void SplatCloud::append(const SplatCloud& other) {
    centroids.insert(centroids.end(), other.centroids.begin(), other.centroids.end());
    scales.insert(scales.end(), other.scales.begin(), other.scales.end());
    orientations.insert(orientations.end(), other.orientations.begin(), other.orientations.end());
    opacities.insert(opacities.end(), other.opacities.begin(), other.opacities.end());
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
}

Mat3 SplatCloud::covariance(std::size_t i) const {
    const Mat3 r = orientations[i].toRotationMatrix();
    const Vec3 s2 = scales[i].cwiseProduct(scales[i]);
    return r * s2.asDiagonal() * r.transpose();
}

Vec3 SplatCloud::mean_centroid() const {
    Vec3 sum = Vec3::Zero();
    for (const auto& c : centroids) sum += c;
    return empty() ? sum : Vec3(sum / static_cast<double>(size()));
}

void SplatCloud::validate() const {
    const std::size_t n = centroids.size();
    if (scales.size() != n || orientations.size() != n || opacities.size() != n || colors.size() != n)
        throw ConfigError("splat cloud attribute arrays have different lengths");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(scales[i].minCoeff() > 0.0)) throw ConfigError("splat " + std::to_string(i) + " has a non-positive scale");
        if (std::abs(orientations[i].norm() - 1.0) > 1e-6)
            throw ConfigError("splat " + std::to_string(i) + " orientation is not unit-norm");
        if (!(opacities[i] >= 0.0 && opacities[i] <= 1.0))
            throw ConfigError("splat " + std::to_string(i) + " opacity outside [0,1]");
        if (!centroids[i].allFinite()) throw ConfigError("splat " + std::to_string(i) + " centroid is not finite");
    }
}

SplatCloud transform_cloud(const SplatCloud& cloud, const RigidPose& pose) {
    if (pose.is_identity()) return cloud;
    SplatCloud out = cloud;
    const Mat3 r = pose.rotation_matrix();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.centroids[i] = r * cloud.centroids[i] + pose.translation;
        out.orientations[i] = (pose.rotation * cloud.orientations[i]).normalized();
    }
    return out;
}

std::vector<Vec3> transform_points(const std::vector<Vec3>& points, const RigidPose& pose) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    const Mat3 r = pose.rotation_matrix();
    for (const auto& p : points) out.push_back(r * p + pose.translation);
    return out;
}

SplatCloud scale_cloud(const SplatCloud& cloud, double factor, const Vec3& pivot) {
    SplatCloud out = cloud;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.centroids[i] = pivot + factor * (cloud.centroids[i] - pivot);
        out.scales[i] = cloud.scales[i] * factor;
    }
    return out;
}

Quat quat_from_rotation_vector(const Vec3& omega) {
    const double angle = omega.norm();
    if (angle < 1e-300) return Quat::Identity();
    return Quat(Eigen::AngleAxisd(angle, omega / angle));
}

Vec3 rotation_vector_from_quat(const Quat& q) {
    Eigen::AngleAxisd aa(q.normalized());
    double angle = aa.angle();
    Vec3 axis = aa.axis();
    if (angle > M_PI) {
        angle = 2.0 * M_PI - angle;
        axis = -axis;
    }
    return axis * angle;
}

double rotation_angle_between(const Quat& a, const Quat& b) {
    return a.normalized().angularDistance(b.normalized());
}

}  // namespace splatsim
