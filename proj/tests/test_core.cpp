#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "splatsim/core.hpp"

using namespace splatsim;

TEST(RigidPose, ComposeMatchesSequentialApplication) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        const RigidPose a{Quat(Eigen::AngleAxisd(0.3 * t, fixtures::random_unit(rng))), Vec3(0.1 * t, -0.2, 0.3)};
        const RigidPose b{Quat(Eigen::AngleAxisd(-0.2 * t, fixtures::random_unit(rng))), Vec3(0.5, 0.1 * t, 0.0)};
        const Vec3 x(0.3, -0.4, 1.1);
        EXPECT_LT((a.compose(b).apply(x) - a.apply(b.apply(x))).norm(), 1e-12);
        EXPECT_LT((a.inverse().apply(a.apply(x)) - x).norm(), 1e-12);
    }
}

TEST(RigidPose, IdentityDetection) {
    EXPECT_TRUE(RigidPose::identity().is_identity());
    EXPECT_FALSE(RigidPose::from_translation(Vec3(0, 0, 1e-3)).is_identity());
}

TEST(Camera, ProjectsPointOnOpticalAxisToPrincipalPoint) {
    Camera cam;
    cam.fx = cam.fy = 100;
    cam.cx = 32;
    cam.cy = 24;
    cam.width = 64;
    cam.height = 48;
    const auto p = project_point(cam, Vec3(0, 0, 2));
    ASSERT_TRUE(p);
    EXPECT_DOUBLE_EQ(p->u, 32);
    EXPECT_DOUBLE_EQ(p->v, 24);
    EXPECT_DOUBLE_EQ(p->depth, 2);
    EXPECT_FALSE(project_point(cam, Vec3(0, 0, -1)));
}

TEST(Camera, RejectsNonPositiveFocal) {
    Camera cam;
    cam.fx = 0;
    EXPECT_THROW(cam.validate(), ConfigError);
}

TEST(Camera, LookAtPlacesCenterAtEye) {
    const Vec3 eye(0.4, 0.3, 0.5);
    const Camera cam = look_at_camera(eye, Vec3::Zero(), Vec3::UnitY(), 200, 64, 64);
    EXPECT_LT((cam.center_world() - eye).norm(), 1e-12);
    const auto p = project_point(cam, Vec3::Zero());
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, 32, 1e-9);
    EXPECT_NEAR(p->v, 32, 1e-9);
}

TEST(Backproject, InvertsProjection) {
    const Camera cam = fixtures::orbit_camera(30, 0.2, 1.0, Vec3::Zero(), 120, 48);
    DepthMap depth(48, 48);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            depth.values.at(x, y) = 0.8 + 0.01 * x;
            depth.validity.at(x, y) = (x + y) % 3 != 0;
        }
    const Pointmap pm = backproject(depth, cam);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            ASSERT_EQ(pm.validity.at(x, y) != 0, depth.validity.at(x, y) != 0);
            if (!pm.validity.at(x, y)) continue;
            // Pointmaps are camera-frame.
            const auto p = project_point(cam, cam.world_to_camera.inverse().apply(pm.points.at(x, y)));
            ASSERT_TRUE(p);
            EXPECT_NEAR(p->u, x, 1e-9);
            EXPECT_NEAR(p->v, y, 1e-9);
            EXPECT_NEAR(p->depth, depth.values.at(x, y), 1e-12);
        }
}

TEST(SplatCloud, CovarianceIsRotatedDiagonal) {
    SplatCloud c;
    const Quat q(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
    c.push_back(Vec3::Zero(), Vec3(0.1, 0.2, 0.3), q, 0.5, Vec3(1, 0, 0));
    const Mat3 r = q.toRotationMatrix();
    const Mat3 expect = r * Vec3(0.01, 0.04, 0.09).asDiagonal() * r.transpose();
    EXPECT_LT((c.covariance(0) - expect).norm(), 1e-14);
}

TEST(SplatCloud, ValidateRejectsBadOpacity) {
    SplatCloud c;
    c.push_back(Vec3::Zero(), Vec3(0.1, 0.1, 0.1), Quat::Identity(), 1.5, Vec3::Zero());
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SplatCloud, TransformKeepsShapeAndMovesCentroid) {
    const SplatCloud box = fixtures::asymmetric_box();
    const RigidPose pose{Quat(Eigen::AngleAxisd(0.4, Vec3::UnitZ())), Vec3(1, 2, 3)};
    const SplatCloud moved = transform_cloud(box, pose);
    ASSERT_EQ(moved.size(), box.size());
    EXPECT_LT((moved.mean_centroid() - pose.apply(box.mean_centroid())).norm(), 1e-12);
    for (std::size_t i = 0; i < box.size(); i += 97)
        EXPECT_LT((moved.covariance(i) - pose.rotation_matrix() * box.covariance(i) * pose.rotation_matrix().transpose())
                      .norm(),
                  1e-14);
}

TEST(Rotation, VectorRoundTrip) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ang(0.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        const Vec3 omega = ang(rng) * fixtures::random_unit(rng);
        EXPECT_LT((rotation_vector_from_quat(quat_from_rotation_vector(omega)) - omega).norm(), 1e-10);
    }
    EXPECT_NEAR(rotation_angle_between(Quat::Identity(), Quat(Eigen::AngleAxisd(0.25, Vec3::UnitX()))), 0.25, 1e-12);
}

namespace {

Camera hundred_camera() {
    Camera cam;
    cam.fx = cam.fy = 100;
    cam.cx = cam.cy = 50;
    cam.width = cam.height = 100;
    return cam;
}

}  // namespace

TEST(Backproject, HandEvaluatedPixels) {
    DepthMap d(100, 100);
    d.values.at(50, 50) = 2.0;
    d.validity.at(50, 50) = 1;
    d.values.at(60, 50) = 2.0;
    d.validity.at(60, 50) = 1;
    d.validity.at(10, 10) = 1;  // zero depth
    const Pointmap pm = backproject(d, hundred_camera());
    EXPECT_EQ(pm.points.at(50, 50), Vec3(0, 0, 2));
    EXPECT_LT((pm.points.at(60, 50) - Vec3(0.2, 0, 2)).norm(), 1e-15);
    EXPECT_FALSE(pm.validity.at(10, 10));
    const auto p = project_point(hundred_camera(), Vec3(0.2, 0, 2));
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->u, 60, 1e-12);
    EXPECT_NEAR(p->v, 50, 1e-12);
}

TEST(TransformCloud, IdentityIsBitwiseAndInverseRestores) {
    const SplatCloud box = fixtures::asymmetric_box();
    const SplatCloud same = transform_cloud(box, RigidPose::identity());
    EXPECT_EQ(same.centroids, box.centroids);
    for (std::size_t i = 0; i < box.size(); ++i) EXPECT_EQ(same.orientations[i].coeffs(), box.orientations[i].coeffs());
    const RigidPose pose{Quat(Eigen::AngleAxisd(1.1, Vec3(0, 1, 1).normalized())), Vec3(0.3, -2, 1)};
    const SplatCloud back = transform_cloud(transform_cloud(box, pose), pose.inverse());
    for (std::size_t i = 0; i < box.size(); ++i) EXPECT_LT((back.centroids[i] - box.centroids[i]).norm(), 1e-6);
    SplatCloud one;
    one.push_back(Vec3::Zero(), Vec3(1, 1, 1), Quat::Identity(), 1, Vec3::Zero());
    EXPECT_EQ(transform_cloud(one, RigidPose::from_translation(Vec3(1, 0, 0))).centroids[0], Vec3(1, 0, 0));
}
