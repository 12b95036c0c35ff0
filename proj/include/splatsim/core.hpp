#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatsim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Raised when inputs violate a documented precondition (bad dimensions,
/// malformed files, inconsistent configuration).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rigid transform x -> R(q) x + t.
struct RigidPose {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidPose identity() { return {}; }
    static RigidPose from_translation(const Vec3& t) { return {Quat::Identity(), t}; }

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
    Vec3 apply_rotation(const Vec3& x) const { return rotation * x; }

    /// (this ∘ rhs)(x) = this(rhs(x)).
    RigidPose compose(const RigidPose& rhs) const;
    RigidPose inverse() const;
    bool is_identity() const;
};

template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, const T& fill = T{}) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

    T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(int w, int h) const { return width == w && height == h; }
    template <typename U>
    bool same_shape(const Image<U>& o) const { return width == o.width && height == o.height; }
};

using GrayImage = Image<double>;
using RgbImage = Image<Vec3>;
/// Nonzero = foreground.
using Mask = Image<std::uint8_t>;

std::size_t count_set(const Mask& mask);

struct DepthMap {
    GrayImage values;
    Mask validity;

    DepthMap() = default;
    DepthMap(int w, int h) : values(w, h, 0.0), validity(w, h, 0) {}
    int width() const { return values.width; }
    int height() const { return values.height; }
};

/// Camera-frame points per pixel.
struct Pointmap {
    Image<Vec3> points;
    Mask validity;
};

struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    RigidPose world_to_camera;

    void validate() const;
    Vec3 center_world() const;
    Vec3 to_camera(const Vec3& world) const { return world_to_camera.apply(world); }
};

struct PixelProjection {
    double u;
    double v;
    double depth;
};

/// Projects a world point; nullopt when the point is at or behind the camera plane.
std::optional<PixelProjection> project_point(const Camera& camera, const Vec3& world_point);

/// Pinhole back-projection of a depth map into camera-frame points.
Pointmap backproject(const DepthMap& depth, const Camera& camera);

/// Gaussian splat cloud with degree-0 colors. Covariance i is
/// R(q_i) diag(s_i^2) R(q_i)^T.
struct SplatCloud {
    std::vector<Vec3> centroids;
    std::vector<Vec3> scales;
    std::vector<Quat> orientations;
    std::vector<double> opacities;
    std::vector<Vec3> colors;

    std::size_t size() const { return centroids.size(); }
    bool empty() const { return centroids.empty(); }
    void reserve(std::size_t n);
    void push_back(const Vec3& centroid, const Vec3& scale, const Quat& orientation, double opacity, const Vec3& color);
    void append(const SplatCloud& other);

    Mat3 covariance(std::size_t i) const;
    Vec3 mean_centroid() const;
    /// Throws ConfigError on inconsistent lengths or out-of-range attributes.
    void validate() const;
};

SplatCloud transform_cloud(const SplatCloud& cloud, const RigidPose& pose);
std::vector<Vec3> transform_points(const std::vector<Vec3>& points, const RigidPose& pose);

/// Uniformly scales centroids about `pivot` and multiplies splat scales.
SplatCloud scale_cloud(const SplatCloud& cloud, double factor, const Vec3& pivot);

/// Rotation by axis-angle vector (angle = norm).
Quat quat_from_rotation_vector(const Vec3& omega);
Vec3 rotation_vector_from_quat(const Quat& q);
double rotation_angle_between(const Quat& a, const Quat& b);

}  // namespace splatsim
