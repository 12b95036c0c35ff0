#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "splatsim/appearance.hpp"
#include "splatsim/metrics.hpp"

using namespace splatsim;

namespace {

Camera axis_camera(int size) {
    Camera cam;
    cam.fx = cam.fy = 60;
    cam.cx = cam.cy = size / 2.0;
    cam.width = cam.height = size;
    return cam;
}

}  // namespace

TEST(OverlapRegion, SetIntersection) {
    Mask full(6, 4, 1);
    GrayImage ones(6, 4, 1.0), zeros(6, 4, 0.0);
    EXPECT_EQ(count_set(overlap_region(full, ones)), 24u);

    Mask left(6, 4, 0);
    GrayImage right(6, 4, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) {
            left.at(x, y) = x < 3;
            right.at(x, y) = x >= 2 ? 0.9 : 0.1;
        }
    const Mask shared = overlap_region(left, right);
    EXPECT_EQ(count_set(shared), 4u);
    for (int y = 0; y < 4; ++y) EXPECT_TRUE(shared.at(2, y));

    Mask disjoint(6, 4, 0);
    EXPECT_EQ(count_set(overlap_region(disjoint, ones)), 0u);
}

TEST(DistillColors, MatchingImageLeavesColorsUnchanged) {
    const SplatCloud box = fixtures::asymmetric_box();
    DistillConfig cfg;
    const Camera cam = fixtures::orbit_camera(30, 0.3, 0.9, Vec3::Zero(), 120, 64);
    const RenderOutput out = render(box, cam);
    Mask m(64, 64, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = out.alpha.data[i] > 0.5;
    cfg.views.push_back({cam, out.color, m});
    cfg.iters = 20;
    const DistillResult r = distill_colors(box, RigidPose::identity(), cfg);
    for (std::size_t i = 0; i < box.size(); ++i) EXPECT_LT((r.cloud.colors[i] - box.colors[i]).norm(), 1e-12);
}

TEST(DistillColors, SingleOpaqueSplatConvergesToGray) {
    SplatCloud c;
    // Wide enough that alpha is 1 to within 1e-4 over the whole image.
    c.push_back(Vec3(0, 0, 2), Vec3(100.0, 100.0, 0.01), Quat::Identity(), 1.0, Vec3::Constant(0.9));
    DistillConfig cfg;
    const Camera cam = axis_camera(32);
    cfg.views.push_back({cam, RgbImage(32, 32, Vec3::Constant(0.5)), Mask(32, 32, 1)});
    const DistillResult r = distill_colors(c, RigidPose::identity(), cfg);
    EXPECT_LT((r.cloud.colors[0] - Vec3::Constant(0.5)).cwiseAbs().maxCoeff(), 1e-3);
    for (std::size_t k = 1; k < r.loss_trace.size(); ++k) EXPECT_LE(r.loss_trace[k], r.loss_trace[k - 1]);
}

TEST(DistillColors, EmptyOverlapIsFlagged) {
    SplatCloud c;
    c.push_back(Vec3(0, 0, 2), Vec3(0.1, 0.1, 0.01), Quat::Identity(), 1.0, Vec3::Constant(0.9));
    DistillConfig cfg;
    cfg.views.push_back({axis_camera(32), RgbImage(32, 32, Vec3::Zero()), Mask(32, 32, 0)});
    const DistillResult r = distill_colors(c, RigidPose::identity(), cfg);
    EXPECT_TRUE(r.empty_overlap);
    EXPECT_EQ(r.cloud.colors[0], c.colors[0]);
}

TEST(DistillColors, RecoloringRaisesMaskedPsnr) {
    const SplatCloud truth = make_box_cloud(
        Vec3(0.1, 0.06, 0.08), [](const Vec3& p) { return p.x() > 0 ? Vec3(0.9, 0.2, 0.1) : Vec3(0.1, 0.3, 0.9); }, 0.012);
    SplatCloud start = truth;
    for (auto& col : start.colors) col = Vec3::Constant(0.5);
    DistillConfig cfg;
    const Camera cam = fixtures::orbit_camera(20, 0.3, 0.7, Vec3::Zero(), 150, 96);
    const RenderOutput gt = render(truth, cam);
    Mask m(96, 96, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = gt.alpha.data[i] > 0.5;
    cfg.views.push_back({cam, gt.color, m});
    cfg.iters = 60;
    const DistillResult r = distill_colors(start, RigidPose::identity(), cfg);
    EXPECT_GT(masked_psnr(render(r.cloud, cam).color, gt.color, m), masked_psnr(render(start, cam).color, gt.color, m));
    EXPECT_GT(r.supported_splats, 0u);
}

TEST(DistillConfig, RejectsBadSettings) {
    DistillConfig cfg;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.views.push_back({axis_camera(16), RgbImage(16, 16), Mask(16, 16, 1)});
    cfg.learning_rate = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}
