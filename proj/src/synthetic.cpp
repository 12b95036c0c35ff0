#include "splatsim/synthetic.hpp"

#include <cmath>
#include <random>

#include "splatsim/io.hpp"
#include "splatsim/physlayout.hpp"
#include "splatsim/raster.hpp"

namespace splatsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

Quat frame_quat(const Vec3& t1, const Vec3& t2, const Vec3& n) {
    Mat3 r;
    r.col(0) = t1;
    r.col(1) = t2;
    r.col(2) = n;
    return Quat(r).normalized();
}

// Tiles one rectangle with n_u x n_v splats.
void tile_face(SplatCloud& out, const Vec3& center, const Vec3& u_axis, double half_u, const Vec3& v_axis,
               double half_v, const Vec3& normal, const ColorField& color, double spacing, double opacity) {
    const int nu = std::max(1, static_cast<int>(std::ceil(2.0 * half_u / spacing)));
    const int nv = std::max(1, static_cast<int>(std::ceil(2.0 * half_v / spacing)));
    const double du = 2.0 * half_u / nu, dv = 2.0 * half_v / nv;
    const Vec3 scale(0.6 * du, 0.6 * dv, 0.06 * std::min(du, dv));
    const Quat q = frame_quat(u_axis, v_axis, normal);
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            const Vec3 p = center + (-half_u + (i + 0.5) * du) * u_axis + (-half_v + (j + 0.5) * dv) * v_axis;
            out.push_back(p, scale, q, opacity, color(p));
        }
}

Vec3 box_a_texture(const Vec3& p) {
    const bool stripe = static_cast<long>(std::floor((p.x() + 1.0) * 25.0)) % 2 == 0;
    return stripe ? Vec3(0.85, 0.25, 0.2) : Vec3(0.95, 0.8, 0.55);
}

Vec3 box_b_texture(const Vec3& p) {
    const long c = static_cast<long>(std::floor((p.x() + 1.0) / 0.035)) + static_cast<long>(std::floor((p.y() + 1.0) / 0.035)) +
                   static_cast<long>(std::floor((p.z() + 1.0) / 0.035));
    return c % 2 == 0 ? Vec3(0.15, 0.45, 0.8) : Vec3(0.9, 0.85, 0.3);
}

Vec3 ground_texture(const Vec3& p) {
    const long c = static_cast<long>(std::floor((p.x() + 5.0) / 0.1)) + static_cast<long>(std::floor((p.z() + 5.0) / 0.1));
    return c % 2 == 0 ? Vec3(0.55, 0.55, 0.52) : Vec3(0.38, 0.4, 0.42);
}

Quat euler_yx(double yaw_deg, double pitch_deg) {
    return (Quat(Eigen::AngleAxisd(yaw_deg * kPi / 180.0, Vec3::UnitY())) *
            Quat(Eigen::AngleAxisd(pitch_deg * kPi / 180.0, Vec3::UnitX())))
        .normalized();
}

io::json vec_json(const Vec3& v) { return io::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

SplatCloud make_box_cloud(const Vec3& h, const ColorField& color, double spacing, double opacity) {
    if (!(spacing > 0.0) || !(h.minCoeff() > 0.0)) throw ConfigError("box cloud needs positive extents and spacing");
    SplatCloud out;
    const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
    tile_face(out, h.x() * ex, ey, h.y(), ez, h.z(), ex, color, spacing, opacity);
    tile_face(out, -h.x() * ex, ez, h.z(), ey, h.y(), -ex, color, spacing, opacity);
    tile_face(out, h.y() * ey, ez, h.z(), ex, h.x(), ey, color, spacing, opacity);
    tile_face(out, -h.y() * ey, ex, h.x(), ez, h.z(), -ey, color, spacing, opacity);
    tile_face(out, h.z() * ez, ex, h.x(), ey, h.y(), ez, color, spacing, opacity);
    tile_face(out, -h.z() * ez, ey, h.y(), ex, h.x(), -ez, color, spacing, opacity);
    return out;
}

SplatCloud make_ground_cloud(const Vec3& center, double half, const ColorField& color, double spacing, double opacity) {
    if (!(spacing > 0.0) || !(half > 0.0)) throw ConfigError("ground cloud needs positive extent and spacing");
    SplatCloud out;
    tile_face(out, center, Vec3::UnitZ(), half, Vec3::UnitX(), half, Vec3::UnitY(), color, spacing, opacity);
    return out;
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height) {
    const Vec3 f = (target - eye).normalized();
    const Vec3 r = f.cross(up).normalized();
    const Vec3 d = f.cross(r);
    Mat3 rot;
    rot.row(0) = r;
    rot.row(1) = d;
    rot.row(2) = f;
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.world_to_camera.rotation = Quat(rot).normalized();
    cam.world_to_camera.translation = -(cam.world_to_camera.rotation * eye);
    cam.validate();
    return cam;
}

void write_two_boxes_bundle(const std::filesystem::path& dir, const SyntheticBundleOptions& opt) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "objects");
    fs::create_directories(dir / "views");
    std::mt19937_64 rng(opt.seed);

    struct Spec {
        std::string id;
        Vec3 half;
        ColorField texture;
        RigidPose world;  // canonical box -> world
        Quat stored;      // canonical box -> stored object frame
        Vec3 flat_color;
    };
    const double spacing = 0.01;
    std::vector<Spec> specs = {
        {"box_a", Vec3(0.08, 0.05, 0.06), box_a_texture, {Quat::Identity(), Vec3(-0.1, 0.05, 0.0)}, euler_yx(-3.0, 2.0),
         Vec3(0.6, 0.45, 0.4)},
        {"box_b", Vec3(0.06, 0.07, 0.05), box_b_texture, {euler_yx(20.0, 0.0), Vec3(0.1, 0.07, 0.03)},
         euler_yx(17.0, -2.0), Vec3(0.5, 0.55, 0.6)},
    };

    const SplatCloud ground = make_ground_cloud(Vec3::Zero(), 0.45, ground_texture, 0.02);
    io::write_splat_ply(dir / "background.ply", ground);

    SplatCloud scene = ground;
    std::vector<SplatCloud> gt_objects;
    std::normal_distribution<double> noise(0.0, 0.03);
    io::json objects = io::json::object();
    for (const auto& s : specs) {
        const SplatCloud canon = make_box_cloud(s.half, s.texture, spacing);
        SplatCloud world = transform_cloud(canon, s.world);
        // Texture is defined in the canonical frame, so recompute after posing.
        world.colors = canon.colors;
        gt_objects.push_back(world);
        scene.append(world);

        SplatCloud stored = transform_cloud(canon, {s.stored, Vec3::Zero()});
        for (auto& c : stored.colors) c = (s.flat_color + Vec3(noise(rng), noise(rng), noise(rng))).cwiseMax(0.0).cwiseMin(1.0);
        const fs::path rel = fs::path("objects") / (s.id + ".ply");
        io::write_splat_ply(dir / rel, stored);
        objects[s.id] = rel.generic_string();
    }

    const Vec3 target(0.0, 0.05, 0.0);
    const std::vector<Camera> cameras = {
        look_at_camera(Vec3(0.45, 0.36, 0.45), target, Vec3::UnitY(), opt.focal, opt.width, opt.height),
        look_at_camera(Vec3(-0.45, 0.36, 0.45), target, Vec3::UnitY(), opt.focal, opt.width, opt.height),
    };
    RenderSettings rs;
    io::json views = io::json::array();
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const std::string stem = "views/view" + std::to_string(v);
        RenderSettings depth_rs = rs;
        depth_rs.depth_estimator = DepthEstimator::unbiased;
        const RenderOutput out = render(scene, cameras[v], depth_rs);
        io::write_ppm(dir / (stem + ".ppm"), out.color);
        io::write_depth(dir / (stem + ".depth"), out.depth);
        io::json masks = io::json::object();
        for (std::size_t o = 0; o < specs.size(); ++o) {
            const GrayImage sil = render_silhouette(gt_objects[o], cameras[v], rs);
            Mask m(sil.width, sil.height, 0);
            for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = sil.data[i] > 0.5 ? 255 : 0;
            const std::string mp = stem + "_" + specs[o].id + ".pgm";
            io::write_pgm(dir / mp, m);
            masks[specs[o].id] = mp;
        }
        views.push_back({{"camera", io::to_json(cameras[v])},
                         {"image", stem + ".ppm"},
                         {"depth", stem + ".depth"},
                         {"masks", masks}});
    }

    RelationGraph graph;
    graph.planes.push_back({Vec3::UnitY(), 0.0});
    for (const auto& s : specs) {
        graph.objects.push_back(s.id);
        graph.os_edges.push_back({s.id, 0, 0.005});
    }
    graph.oo_edges.push_back({"box_a", "box_b", 0.01});
    io::write_json(dir / "relation_graph.json", graph.to_json());

    io::json sim = {
        {"grid", {{"dims", {64, 64, 64}}, {"dx", 1.0 / 64.0}, {"origin", {-0.5, -0.1, -0.5}}}},
        {"dt", 1e-4},
        {"gravity", {0.0, -9.8, 0.0}},
        {"frames", opt.frames},
        {"substeps_per_frame", opt.substeps_per_frame},
        {"materials",
         {{"box_a", {{"E", 2e5}, {"nu", 0.3}, {"density", 400.0}}},
          {"box_b", {{"E", 3e5}, {"nu", 0.3}, {"density", 500.0}}}}},
        {"colliders", io::json::array({{{"normal", {0.0, 1.0, 0.0}}, {"offset", 0.0}, {"condition", "separating"},
                                        {"friction", 0.05}}})},
        {"fill_factor", 0.5},
        {"upsample", true},
        {"upsample_max_distance", 0.2},
        {"domain_walls", true},
        {"render_view", 0},
    };
    io::write_json(dir / "sim_config.json", sim);

    const Vec3 a_center = specs[0].world.translation;
    io::json schedule = {
        {"events",
         io::json::array({{{"kind", "impulse_at_point"},
                           {"target", "box_a"},
                           {"start_frame", 2},
                           {"end_frame", 2},
                           {"point", vec_json(a_center)},
                           {"radius", 0.2},
                           {"delta_v", {0.0, 1.5, 0.0}}},
                          {{"kind", "force_field"},
                           {"target", "box_b"},
                           {"start_frame", 6},
                           {"end_frame", 10},
                           {"acceleration", {2.0, 3.0, 0.0}}}})},
    };
    io::write_json(dir / "force_schedule.json", schedule);

    io::json bundle = {
        {"seed", opt.seed},
        {"background", "background.ply"},
        {"objects", objects},
        {"views", views},
        {"relation_graph", "relation_graph.json"},
        {"sim_config", "sim_config.json"},
        {"force_schedule", "force_schedule.json"},
    };
    io::write_json(dir / "bundle.json", bundle);
}

}  // namespace splatsim
