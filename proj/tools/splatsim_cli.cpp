#include <cstdlib>
#include <iostream>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "splatsim/io.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/pipeline.hpp"
#include "splatsim/synthetic.hpp"

using namespace splatsim;

namespace {

void set_threads(int requested) {
    int n = requested;
    if (n <= 0)
        if (const char* env = std::getenv("SPLATSIM_THREADS")) n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
}

struct Common {
    std::string bundle;
    std::string out = "run";
    std::string stages;
    long long seed = -1;
    int threads = 0;
};

void add_common(CLI::App* app, Common& c, bool with_stages) {
    app->add_option("--bundle", c.bundle, "Path to bundle.json")->required()->check(CLI::ExistingFile);
    app->add_option("--out", c.out, "Run directory");
    app->add_option("--seed", c.seed, "Override the bundle seed");
    app->add_option("--threads", c.threads, "Worker threads (default: SPLATSIM_THREADS or all cores)");
    if (with_stages)
        app->add_option("--stages", c.stages,
                        "Comma-separated subset of init,align,physfit,distill,simulate,render,evaluate or 'all'");
}

void run_stages(const Common& c, const std::string& stages) {
    set_threads(c.threads);
    const SceneBundle bundle = SceneBundle::load(c.bundle);
    RunOptions opt;
    opt.out = c.out;
    if (c.seed >= 0) opt.seed = static_cast<std::uint64_t>(c.seed);
    opt.stages = parse_stages(stages);
    opt.log = &std::cerr;
    run_pipeline(bundle, opt);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Physically grounded object insertion and simulation for Gaussian splat scenes"};
    app.require_subcommand(1);

    Common run_c;
    auto* run = app.add_subcommand("run", "Run pipeline stages (default: all)");
    add_common(run, run_c, true);
    run->callback([&] { run_stages(run_c, run_c.stages.empty() ? "all" : run_c.stages); });

    Common val_c;
    auto* validate = app.add_subcommand("validate", "Check a bundle and write a manifest-only run");
    add_common(validate, val_c, false);
    validate->callback([&] {
        run_stages(val_c, "");
        std::cout << "bundle ok\n";
    });

    struct Single {
        const char* name;
        const char* help;
        const char* stages;
        Common c;
    };
    static Single singles[] = {
        {"align-pose", "Initialise and refine object poses", "init,align", {}},
        {"refine-physical", "Enforce support and non-penetration constraints", "physfit", {}},
        {"distill-appearance", "Refine object colors against the views", "distill", {}},
        {"simulate", "Run the elastic simulation", "simulate", {}},
        {"render", "Render the refined views and simulated frames", "render", {}},
    };
    for (auto& s : singles) {
        auto* sub = app.add_subcommand(s.name, s.help);
        add_common(sub, s.c, false);
        sub->callback([&s] { run_stages(s.c, s.stages); });
    }

    Common eval_c;
    bool no_ablation = false;
    auto* evaluate = app.add_subcommand("evaluate", "Score rendered views against the bundle images");
    add_common(evaluate, eval_c, false);
    evaluate->add_flag("--no-ablation", no_ablation, "Skip the column without pose alignment");
    evaluate->callback([&] {
        set_threads(eval_c.threads);
        const SceneBundle bundle = SceneBundle::load(eval_c.bundle);
        RunOptions opt;
        opt.out = eval_c.out;
        opt.stages = {Stage::evaluate};
        opt.ablation = !no_ablation;
        opt.log = &std::cerr;
        run_pipeline(bundle, opt);
        std::cout << io::read_json(fs::path(eval_c.out) / "evaluate" / "report.json").dump(2) << "\n";
    });

    std::string bp_bundle, bp_out, bp_object;
    int bp_view = 0;
    auto* bp = app.add_subcommand("backproject", "Write the masked pointmap of one view as a PLY");
    bp->add_option("--bundle", bp_bundle, "Path to bundle.json")->required()->check(CLI::ExistingFile);
    bp->add_option("--view", bp_view, "View index");
    bp->add_option("--object", bp_object, "Restrict to this object's mask");
    bp->add_option("--out", bp_out, "Output PLY")->required();
    bp->callback([&] {
        const SceneBundle bundle = SceneBundle::load(bp_bundle);
        if (bp_view < 0 || bp_view >= static_cast<int>(bundle.views.size())) throw ConfigError("no such view");
        const auto& view = bundle.views[bp_view];
        const Pointmap pm = backproject(io::read_depth(view.depth), view.camera);
        Mask mask(pm.validity.width, pm.validity.height, 1);
        if (!bp_object.empty()) {
            if (!view.masks.count(bp_object)) throw ConfigError("no mask for object '" + bp_object + "'");
            mask = io::read_pgm_mask(view.masks.at(bp_object));
        }
        const RigidPose to_world = view.camera.world_to_camera.inverse();
        std::vector<Vec3> pts;
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask.data[i] && pm.validity.data[i]) pts.push_back(to_world.apply(pm.points.data[i]));
        io::write_point_ply(bp_out, pts);
        std::cout << pts.size() << " points\n";
    });

    std::string m_rendered, m_truth, m_mask;
    auto* metrics = app.add_subcommand("metrics", "Edge error, masked PSNR and SSIM of one image pair");
    metrics->add_option("--rendered", m_rendered, "Rendered PPM")->required()->check(CLI::ExistingFile);
    metrics->add_option("--truth", m_truth, "Reference PPM")->required()->check(CLI::ExistingFile);
    metrics->add_option("--mask", m_mask, "PGM mask")->required()->check(CLI::ExistingFile);
    metrics->callback([&] {
        const RgbImage r = io::read_ppm(m_rendered), t = io::read_ppm(m_truth);
        const Mask mask = io::read_pgm_mask(m_mask);
        const MaskedScores s = masked_psnr_ssim(r, t, mask);
        const io::json j = {{"edge_error", edge_error(to_gray(r), to_gray(t), mask)},
                            {"psnr", score_json(s.psnr)},
                            {"ssim", s.ssim}};
        std::cout << j.dump(2) << "\n";
    });

    std::string syn_out;
    long long syn_seed = 7;
    int syn_frames = 24, syn_substeps = 300;
    auto* syn = app.add_subcommand("make-synthetic", "Write the two-boxes-on-a-plane bundle");
    syn->add_option("--out", syn_out, "Bundle directory")->required();
    syn->add_option("--seed", syn_seed, "Seed for the recoloring noise");
    syn->add_option("--frames", syn_frames, "Simulated frames");
    syn->add_option("--substeps", syn_substeps, "Substeps per frame");
    syn->callback([&] {
        SyntheticBundleOptions o;
        o.seed = static_cast<std::uint64_t>(syn_seed);
        o.frames = syn_frames;
        o.substeps_per_frame = syn_substeps;
        write_two_boxes_bundle(syn_out, o);
        std::cout << "wrote " << (fs::path(syn_out) / "bundle.json").string() << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const PipelineError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
