#include <gtest/gtest.h>

#include <fstream>
#include <iterator>

#include "splatsim/io.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/pipeline.hpp"
#include "splatsim/synthetic.hpp"

using namespace splatsim;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small two-box bundle with short stage budgets, built once per process.
const SceneBundle& mini_bundle() {
    static const SceneBundle bundle = [] {
        const fs::path dir = fs::temp_directory_path() / "splatsim_test_pipeline" / "bundle";
        fs::remove_all(dir);
        SyntheticBundleOptions opt;
        opt.width = opt.height = 96;
        opt.focal = 112.5;
        opt.frames = 3;
        opt.substeps_per_frame = 4;
        write_two_boxes_bundle(dir, opt);
        io::json b = io::read_json(dir / "bundle.json");
        b["pipeline"] = {{"align", {{"max_iters", 3}}}, {"distill", {{"iters", 5}}}, {"layout", {{"max_iters", 50}}}};
        io::write_json(dir / "bundle.json", b);
        return SceneBundle::load(dir / "bundle.json");
    }();
    return bundle;
}

fs::path run_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "splatsim_test_pipeline" / name;
    fs::remove_all(p);
    return p;
}

RunOptions options(const fs::path& out, const std::string& stages) {
    RunOptions o;
    o.out = out;
    o.stages = parse_stages(stages);
    return o;
}

}  // namespace

TEST(Stages, ParsingAndDependencies) {
    const auto all = parse_stages("all");
    ASSERT_EQ(all.size(), 6u);
    EXPECT_EQ(all.front(), Stage::init);
    EXPECT_EQ(all.back(), Stage::render);
    EXPECT_TRUE(parse_stages("").empty());
    EXPECT_EQ(parse_stages("render,init"), (std::vector<Stage>{Stage::init, Stage::render}));
    EXPECT_THROW(parse_stages("init,bogus"), ConfigError);
    EXPECT_FALSE(required_stage(Stage::init));
    EXPECT_EQ(*required_stage(Stage::physfit), Stage::align);
    EXPECT_EQ(*required_stage(Stage::evaluate), Stage::render);
    EXPECT_EQ(stage_name(Stage::distill), "distill");
}

TEST(Bundle, LoadsAndValidates) {
    const SceneBundle& b = mini_bundle();
    b.validate();
    EXPECT_EQ(b.object_ids(), (std::vector<std::string>{"box_a", "box_b"}));
    EXPECT_EQ(b.views.size(), 2u);
    EXPECT_EQ(b.digest(), SceneBundle::load(b.file).digest());
}

TEST(Bundle, MissingObjectFileFailsValidation) {
    const fs::path dir = fs::temp_directory_path() / "splatsim_test_pipeline" / "broken";
    fs::remove_all(dir);
    fs::copy(mini_bundle().root, dir, fs::copy_options::recursive);
    fs::remove(dir / "objects" / "box_b.ply");
    EXPECT_THROW(SceneBundle::load(dir / "bundle.json").validate(), ConfigError);
}

TEST(SimConfigJson, ResolvesTargetsAndRejectsUnknown) {
    const SceneBundle& b = mini_bundle();
    const io::json sim = io::read_json(b.sim_config);
    io::json sched = io::read_json(b.force_schedule);
    const SimConfig cfg = sim_config_from_json(sim, sched, b.object_ids());
    EXPECT_EQ(cfg.params.materials.size(), 2u);
    EXPECT_EQ(cfg.params.schedule.events[0].target_object, 0);
    EXPECT_EQ(cfg.params.schedule.events[1].target_object, 1);
    EXPECT_EQ(cfg.params.substeps_per_frame, 4);
    sched["events"][0]["target"] = "box_z";
    EXPECT_THROW(sim_config_from_json(sim, sched, b.object_ids()), ConfigError);
}

TEST(RunPipeline, DryRunWritesOnlyManifest) {
    const fs::path out = run_dir("dry");
    run_pipeline(mini_bundle(), options(out, ""));
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_FALSE(fs::exists(out / "init"));
}

TEST(RunPipeline, MissingPredecessorNamesTheStage) {
    const fs::path out = run_dir("orphan");
    try {
        run_pipeline(mini_bundle(), options(out, "align"));
        FAIL() << "expected PipelineError";
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.stage, "align");
    }
}

TEST(RunPipeline, EndToEndArtifactsAndDeterminism) {
    const fs::path a = run_dir("full_a"), b = run_dir("full_b");
    run_pipeline(mini_bundle(), options(a, "all"));
    run_pipeline(mini_bundle(), options(b, "all"));
    for (const std::string id : {"box_a", "box_b"}) {
        EXPECT_TRUE(fs::exists(a / "align" / (id + ".pose.json")));
        EXPECT_TRUE(fs::exists(a / "physfit" / (id + ".ply")));
        EXPECT_TRUE(fs::exists(a / "distill" / (id + ".ply")));
    }
    for (int f = 0; f < 3; ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04d", f);
        ASSERT_TRUE(fs::exists(a / "render" / (std::string(name) + ".ppm")));
        EXPECT_EQ(slurp(a / "render" / (std::string(name) + ".ppm")), slurp(b / "render" / (std::string(name) + ".ppm")));
        EXPECT_EQ(slurp(a / "simulate" / (std::string(name) + ".bin")), slurp(b / "simulate" / (std::string(name) + ".bin")));
    }
    EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));

    // Re-running simulate alone reproduces the snapshots.
    const std::string before = slurp(a / "simulate" / "frame_0002.bin");
    run_pipeline(mini_bundle(), options(a, "simulate"));
    EXPECT_EQ(slurp(a / "simulate" / "frame_0002.bin"), before);

    run_pipeline(mini_bundle(), options(a, "evaluate"));
    const io::json report = io::read_json(a / "evaluate" / "report.json");
    EXPECT_EQ(report["views"].size(), 2u);
    EXPECT_TRUE(report["mean"].contains("edge_error"));
    EXPECT_EQ(io::json::parse(report.dump()), report);
    EXPECT_EQ(report["ablation"]["columns"], io::json({"without_alignment", "full"}));
}

TEST(Evaluate, PerfectRenderingScores) {
    const SceneBundle& b = mini_bundle();
    const fs::path out = run_dir("perfect");
    fs::create_directories(out / "render");
    for (std::size_t v = 0; v < b.views.size(); ++v) fs::copy_file(b.views[v].image, out / "render" / ("view" + std::to_string(v) + ".ppm"));
    const io::json r = evaluate_run(b, out, false);
    EXPECT_EQ(r["mean"]["edge_error"].get<double>(), 0.0);
    EXPECT_EQ(r["mean"]["ssim"].get<double>(), 1.0);
    EXPECT_EQ(r["views"][0]["psnr"], "inf");
    EXPECT_FALSE(r.contains("ablation"));
}

TEST(Snapshot, RoundTripIsExact) {
    FrameSnapshot s;
    s.frame = 4;
    s.positions = {Vec3(0.1, 0.2, 0.3), Vec3(-1e-9, 5, 1.0 / 3.0)};
    s.deformation = {Mat3::Identity(), Mat3::Constant(0.7)};
    const fs::path p = run_dir("snap") / "s.bin";
    fs::create_directories(p.parent_path());
    write_snapshot(p, s);
    const FrameSnapshot r = read_snapshot(p);
    EXPECT_EQ(r.positions, s.positions);
    EXPECT_EQ(r.deformation, s.deformation);
    EXPECT_EQ(fs::file_size(p), 4u + 2 * 12 * 8);
}

TEST(ScoreJson, InfinityIsAString) {
    EXPECT_EQ(score_json(kPsnrInfinity), "inf");
    EXPECT_EQ(score_json(30.5).get<double>(), 30.5);
}
