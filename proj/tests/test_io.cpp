#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "splatsim/io.hpp"

using namespace splatsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "splatsim_test_io";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Ply, SplatRoundTripAtFloatPrecision) {
    SplatCloud c = fixtures::asymmetric_box();
    c.opacities[3] = 0.2;
    c.colors[5] = Vec3(0.0, 1.0, 0.25);
    const fs::path p = scratch("box.ply");
    io::write_splat_ply(p, c);
    const SplatCloud r = io::read_splat_ply(p);
    ASSERT_EQ(r.size(), c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        EXPECT_LT((r.centroids[i] - c.centroids[i]).norm(), 1e-6);
        EXPECT_LT((r.scales[i] - c.scales[i]).norm(), 1e-6);
        EXPECT_LT(rotation_angle_between(r.orientations[i], c.orientations[i]), 1e-5);
        EXPECT_NEAR(r.opacities[i], c.opacities[i], 1e-5);
        EXPECT_LT((r.colors[i] - c.colors[i]).norm(), 1e-5);
    }
}

TEST(Ply, ShDcInverse) {
    for (double c : {0.0, 0.1, 0.5, 0.9, 1.0}) EXPECT_NEAR(io::sh_dc_to_color(io::color_to_sh_dc(c)), c, 1e-15);
    EXPECT_NEAR(io::color_to_sh_dc(0.5), 0.0, 1e-15);
}

TEST(Ply, PointRoundTrip) {
    const std::vector<Vec3> pts = {Vec3(1, 2, 3), Vec3(-0.5, 0.25, 0.125)};
    const fs::path p = scratch("pts.ply");
    io::write_point_ply(p, pts);
    const auto r = io::read_point_ply(p);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[1], pts[1]);
}

TEST(Ply, MissingFileThrows) { EXPECT_ANY_THROW(io::read_splat_ply(scratch("absent.ply"))); }

TEST(Ply, TruncatedBodyThrows) {
    const fs::path p = scratch("trunc.ply");
    io::write_splat_ply(p, fixtures::asymmetric_box());
    fs::resize_file(p, fs::file_size(p) - 100);
    EXPECT_ANY_THROW(io::read_splat_ply(p));
}

TEST(Images, PpmRoundTripQuantizes) {
    RgbImage img(7, 5, Vec3::Zero());
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) img.at(x, y) = Vec3(x / 6.0, y / 4.0, 0.5);
    const fs::path p = scratch("img.ppm");
    io::write_ppm(p, img);
    const RgbImage r = io::read_ppm(p);
    ASSERT_TRUE(r.same_shape(img));
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_LT((r.data[i] - img.data[i]).cwiseAbs().maxCoeff(), 0.5 / 255 + 1e-12);
}

TEST(Images, MaskRoundTrip) {
    Mask m(9, 4, 0);
    m.at(2, 1) = 1;
    m.at(8, 3) = 1;
    const fs::path p = scratch("mask.pgm");
    io::write_pgm(p, m);
    const Mask r = io::read_pgm_mask(p);
    EXPECT_EQ(count_set(r), 2u);
    EXPECT_TRUE(r.at(2, 1));
    EXPECT_TRUE(r.at(8, 3));
}

TEST(Images, DepthRoundTripKeepsValidity) {
    DepthMap d(4, 3);
    d.values.at(1, 2) = 1.25;
    d.validity.at(1, 2) = 1;
    const fs::path p = scratch("d.depth");
    io::write_depth(p, d);
    const DepthMap r = io::read_depth(p);
    EXPECT_EQ(r.width(), 4);
    EXPECT_EQ(r.height(), 3);
    EXPECT_EQ(r.values.at(1, 2), 1.25);
    EXPECT_EQ(count_set(r.validity), 1u);
}

TEST(Json, CameraAndPoseRoundTrip) {
    const Camera cam = fixtures::orbit_camera(40, 0.3, 1.0, Vec3(0.1, 0, 0), 250, 96);
    const Camera r = io::camera_from_json(io::to_json(cam));
    EXPECT_EQ(r.width, cam.width);
    EXPECT_DOUBLE_EQ(r.fx, cam.fx);
    EXPECT_LT(rotation_angle_between(r.world_to_camera.rotation, cam.world_to_camera.rotation), 1e-12);
    EXPECT_LT((r.world_to_camera.translation - cam.world_to_camera.translation).norm(), 1e-15);
}

TEST(Digest, DependsOnBytes) {
    EXPECT_EQ(io::bytes_digest("abc"), io::bytes_digest("abc"));
    EXPECT_NE(io::bytes_digest("abc"), io::bytes_digest("abd"));
}
