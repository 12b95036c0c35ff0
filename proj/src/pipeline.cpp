#include "splatsim/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "splatsim/appearance.hpp"
#include "splatsim/io.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/physlayout.hpp"
#include "splatsim/posealign.hpp"
#include "splatsim/raster.hpp"

namespace splatsim {

using nlohmann::json;

PipelineError::PipelineError(const std::string& s, const std::string& o, const std::string& what)
    : std::runtime_error("stage " + s + (o.empty() ? "" : ", object " + o) + ": " + what), stage(s), object(o) {}

namespace {

Vec3 vec_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must have 3 components");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

}  // namespace

SceneBundle SceneBundle::load(const fs::path& bundle_json) {
    SceneBundle b;
    b.file = bundle_json;
    b.root = bundle_json.parent_path();
    const json j = io::read_json(bundle_json);
    try {
        b.seed = j.value("seed", std::uint64_t{0});
        b.background = io::resolve(b.root, j.at("background").get<std::string>());
        for (const auto& [id, path] : j.at("objects").items()) b.objects[id] = io::resolve(b.root, path.get<std::string>());
        for (const auto& v : j.at("views")) {
            BundleView view;
            view.camera = io::camera_from_json(v.at("camera"));
            view.image = io::resolve(b.root, v.at("image").get<std::string>());
            view.depth = io::resolve(b.root, v.at("depth").get<std::string>());
            for (const auto& [id, path] : v.at("masks").items())
                view.masks[id] = io::resolve(b.root, path.get<std::string>());
            b.views.push_back(std::move(view));
        }
        b.relation_graph = io::resolve(b.root, j.at("relation_graph").get<std::string>());
        b.sim_config = io::resolve(b.root, j.at("sim_config").get<std::string>());
        b.force_schedule = io::resolve(b.root, j.at("force_schedule").get<std::string>());
        if (j.contains("pipeline")) b.pipeline = j.at("pipeline");
    } catch (const json::exception& e) {
        throw ConfigError(bundle_json.string() + ": " + e.what());
    }
    return b;
}

std::vector<std::string> SceneBundle::object_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : objects) ids.push_back(id);
    return ids;
}

void SceneBundle::validate() const {
    if (objects.empty()) throw ConfigError("bundle lists no objects");
    if (views.empty()) throw ConfigError("bundle lists no views");
    require_file(background, "background cloud");
    io::read_splat_ply(background).validate();
    for (const auto& [id, path] : objects) {
        require_file(path, "object cloud '" + id + "'");
        const SplatCloud c = io::read_splat_ply(path);
        c.validate();
        if (c.empty()) throw ConfigError("object cloud '" + id + "' is empty");
    }
    for (std::size_t v = 0; v < views.size(); ++v) {
        const auto& view = views[v];
        const std::string tag = "view " + std::to_string(v);
        require_file(view.image, tag + " image");
        require_file(view.depth, tag + " depth");
        const RgbImage img = io::read_ppm(view.image);
        if (!img.same_shape(view.camera.width, view.camera.height))
            throw ConfigError(tag + " image does not match the camera size");
        const DepthMap d = io::read_depth(view.depth);
        if (!d.values.same_shape(img)) throw ConfigError(tag + " depth does not match the camera size");
        for (const auto& [id, path] : view.masks) {
            if (!objects.count(id)) throw ConfigError(tag + " has a mask for unknown object '" + id + "'");
            require_file(path, tag + " mask of '" + id + "'");
            if (!io::read_pgm_mask(path).same_shape(img))
                throw ConfigError(tag + " mask of '" + id + "' does not match the camera size");
        }
        for (const auto& [id, _] : objects)
            if (!view.masks.count(id)) throw ConfigError(tag + " has no mask for object '" + id + "'");
    }
    require_file(relation_graph, "relation graph");
    const RelationGraph graph = RelationGraph::from_json(io::read_json(relation_graph));
    for (const auto& id : graph.objects)
        if (!objects.count(id)) throw ConfigError("relation graph object '" + id + "' is not in the bundle");
    require_file(sim_config, "simulation config");
    require_file(force_schedule, "force schedule");
    sim_config_from_json(io::read_json(sim_config), io::read_json(force_schedule), object_ids());
}

std::string SceneBundle::digest() const {
    std::string acc = io::file_digest(file);
    auto add = [&](const fs::path& p) { acc += io::file_digest(p); };
    add(background);
    for (const auto& [_, p] : objects) add(p);
    for (const auto& v : views) {
        add(v.image);
        add(v.depth);
        for (const auto& [_, p] : v.masks) add(p);
    }
    add(relation_graph);
    add(sim_config);
    add(force_schedule);
    return io::bytes_digest(acc);
}

SimConfig sim_config_from_json(const json& sim, const json& schedule, const std::vector<std::string>& object_ids) {
    SimConfig c;
    auto object_index = [&](const std::string& id) {
        const auto it = std::find(object_ids.begin(), object_ids.end(), id);
        if (it == object_ids.end()) throw ConfigError("simulation config references unknown object '" + id + "'");
        return static_cast<int>(it - object_ids.begin());
    };
    try {
        const auto& g = sim.at("grid");
        const auto& dims = g.at("dims");
        if (dims.size() != 3) throw ConfigError("grid dims must have 3 entries");
        for (int d = 0; d < 3; ++d) c.grid.dims[d] = dims[d].get<int>();
        c.grid.dx = g.at("dx").get<double>();
        c.grid.origin = vec_from_json(g.at("origin"), "grid origin");
        c.grid.validate();

        c.params.dt = sim.at("dt").get<double>();
        c.params.gravity = vec_from_json(sim.value("gravity", json::array({0.0, -9.8, 0.0})), "gravity");
        c.params.substeps_per_frame = sim.value("substeps_per_frame", 300);
        c.frames = sim.value("frames", 24);
        if (c.frames < 0) throw ConfigError("frame count must be non-negative");
        c.params.domain_walls = sim.value("domain_walls", true);
        c.render_view = sim.value("render_view", 0);

        c.params.materials.assign(object_ids.size(), Material{});
        if (sim.contains("materials"))
            for (const auto& [id, m] : sim.at("materials").items()) {
                Material mat;
                mat.youngs_modulus = m.value("E", mat.youngs_modulus);
                mat.poisson_ratio = m.value("nu", mat.poisson_ratio);
                mat.density = m.value("density", mat.density);
                c.params.materials[object_index(id)] = mat;
            }
        if (sim.contains("colliders"))
            for (const auto& cj : sim.at("colliders")) {
                Collider col;
                col.normal = vec_from_json(cj.at("normal"), "collider normal");
                col.offset = cj.value("offset", 0.0);
                const std::string cond = cj.value("condition", std::string("separating"));
                if (cond == "sticky")
                    col.condition = BoundaryCondition::sticky;
                else if (cond == "separating")
                    col.condition = BoundaryCondition::separating;
                else
                    throw ConfigError("unknown collider condition '" + cond + "'");
                col.friction = cj.value("friction", 0.0);
                c.params.colliders.push_back(col);
            }

        c.sampling.fill_factor = sim.value("fill_factor", 0.5);
        c.sampling.upsample = sim.value("upsample", false);
        c.sampling.upsample_spacing = sim.value("upsample_spacing", 0.0);
        c.sampling.upsample_max_distance = sim.value("upsample_max_distance", 0.0);

        for (const auto& ej : schedule.value("events", json::array())) {
            ForceEvent e;
            const std::string kind = ej.at("kind").get<std::string>();
            if (kind == "impulse_at_point") {
                e.kind = ForceKind::impulse_at_point;
                e.point = vec_from_json(ej.at("point"), "impulse point");
                e.radius = ej.at("radius").get<double>();
                e.value = vec_from_json(ej.at("delta_v"), "impulse delta_v");
            } else if (kind == "force_field") {
                e.kind = ForceKind::force_field;
                e.value = vec_from_json(ej.at("acceleration"), "field acceleration");
            } else {
                throw ConfigError("unknown force event kind '" + kind + "'");
            }
            const std::string target = ej.value("target", std::string());
            e.target_object = target.empty() ? -1 : object_index(target);
            e.start_frame = ej.at("start_frame").get<int>();
            e.end_frame = ej.value("end_frame", e.start_frame);
            c.params.schedule.events.push_back(e);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("simulation config: ") + e.what());
    }
    c.params.validate();
    return c;
}

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::init: return "init";
        case Stage::align: return "align";
        case Stage::physfit: return "physfit";
        case Stage::distill: return "distill";
        case Stage::simulate: return "simulate";
        case Stage::render: return "render";
        case Stage::evaluate: return "evaluate";
    }
    return "?";
}

std::vector<Stage> parse_stages(const std::string& list) {
    static const std::vector<Stage> order = {Stage::init,     Stage::align,  Stage::physfit, Stage::distill,
                                             Stage::simulate, Stage::render, Stage::evaluate};
    std::vector<bool> want(order.size(), false);
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item.erase(std::remove_if(item.begin(), item.end(), [](unsigned char ch) { return std::isspace(ch); }), item.end());
        if (item.empty()) continue;
        if (item == "all") {
            std::fill(want.begin(), want.end() - 1, true);
            continue;
        }
        bool found = false;
        for (std::size_t i = 0; i < order.size(); ++i)
            if (stage_name(order[i]) == item) want[i] = found = true;
        if (!found) throw ConfigError("unknown stage '" + item + "'");
    }
    std::vector<Stage> out;
    for (std::size_t i = 0; i < order.size(); ++i)
        if (want[i]) out.push_back(order[i]);
    return out;
}

std::optional<Stage> required_stage(Stage s) {
    switch (s) {
        case Stage::init: return std::nullopt;
        case Stage::align: return Stage::init;
        case Stage::physfit: return Stage::align;
        case Stage::distill: return Stage::physfit;
        case Stage::simulate: return Stage::distill;
        case Stage::render: return Stage::simulate;
        case Stage::evaluate: return Stage::render;
    }
    return std::nullopt;
}

json score_json(double value) {
    if (std::isinf(value) && value > 0) return "inf";
    return value;
}

void write_snapshot(const fs::path& path, const FrameSnapshot& snap) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    const auto n = static_cast<std::uint32_t>(snap.positions.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    for (std::uint32_t p = 0; p < n; ++p) {
        double buf[12];
        for (int d = 0; d < 3; ++d) buf[d] = snap.positions[p][d];
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) buf[3 + 3 * r + c] = snap.deformation[p](r, c);
        out.write(reinterpret_cast<const char*>(buf), sizeof buf);
    }
    if (!out) throw ConfigError("failed writing " + path.string());
}

FrameSnapshot read_snapshot(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::uint32_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    FrameSnapshot snap;
    snap.positions.resize(n);
    snap.deformation.resize(n);
    for (std::uint32_t p = 0; p < n; ++p) {
        double buf[12];
        in.read(reinterpret_cast<char*>(buf), sizeof buf);
        snap.positions[p] = Vec3(buf[0], buf[1], buf[2]);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) snap.deformation[p](r, c) = buf[3 + 3 * r + c];
    }
    if (!in) throw ConfigError("truncated snapshot " + path.string());
    return snap;
}

namespace {

std::string frame_name(int k, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.%s", k, ext);
    return buf;
}

json pose_json(const RigidPose& pose) { return io::to_json(pose); }

RigidPose read_pose(const fs::path& p) { return io::pose_from_json(io::read_json(p)); }

// Stage context shared by all stage runners.
class Runner {
public:
    Runner(const SceneBundle& bundle, const RunOptions& options)
        : b_(bundle), opt_(options), dir_(options.out), ids_(bundle.object_ids()) {
        seed_ = options.seed.value_or(bundle.seed);
    }

    void run() {
        fs::create_directories(dir_);
        b_.validate();
        json manifest = load_or(dir_ / "manifest.json");
        json timing = load_or(dir_ / "timing.json");
        manifest["format"] = 1;
        manifest["bundle_digest"] = b_.digest();
        manifest["seed"] = seed_;
        manifest["objects"] = ids_;
        if (!manifest.contains("stages")) manifest["stages"] = json::object();
        if (!timing.contains("stages")) timing["stages"] = json::object();
        // Written before the stages run so a failing stage still leaves a
        // manifest describing the bundle.
        io::write_json(dir_ / "manifest.json", manifest);

        for (Stage s : opt_.stages) {
            const std::string name = stage_name(s);
            check_dependency(s);
            log("stage " + name);
            const auto t0 = std::chrono::steady_clock::now();
            outputs_.clear();
            config_ = json::object();
            run_stage(s);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            json entry;
            entry["config"] = config_;
            entry["outputs"] = json::object();
            for (const auto& rel : outputs_) entry["outputs"][rel] = io::file_digest(dir_ / rel);
            manifest["stages"][name] = entry;
            timing["stages"][name] = secs;
            io::write_json(dir_ / "manifest.json", manifest);
            io::write_json(dir_ / "timing.json", timing);
        }
    }

private:
    const SceneBundle& b_;
    const RunOptions& opt_;
    fs::path dir_;
    std::vector<std::string> ids_;
    std::uint64_t seed_ = 0;
    std::vector<std::string> outputs_;
    json config_;

    void log(const std::string& msg) const {
        if (opt_.log) *opt_.log << msg << std::endl;
    }

    static json load_or(const fs::path& p) { return fs::exists(p) ? io::read_json(p) : json::object(); }

    // Files a stage must find from its predecessor.
    std::vector<fs::path> products(Stage s) const {
        std::vector<fs::path> out;
        switch (s) {
            case Stage::init:
            case Stage::align:
            case Stage::physfit:
                for (const auto& id : ids_) out.push_back(fs::path(stage_name(s)) / (id + ".pose.json"));
                break;
            case Stage::distill:
                for (const auto& id : ids_) out.push_back(fs::path("distill") / (id + ".ply"));
                break;
            case Stage::simulate: out.push_back("simulate/summary.json"); break;
            case Stage::render:
                for (std::size_t v = 0; v < b_.views.size(); ++v)
                    out.push_back(fs::path("render") / ("view" + std::to_string(v) + ".ppm"));
                break;
            case Stage::evaluate: out.push_back("evaluate/report.json"); break;
        }
        return out;
    }

    void check_dependency(Stage s) const {
        const auto req = required_stage(s);
        if (!req) return;
        for (const auto& p : products(*req))
            if (!fs::exists(dir_ / p))
                throw PipelineError(stage_name(s), "",
                                    "requires the '" + stage_name(*req) + "' stage to have run first (missing " +
                                        p.generic_string() + ")");
    }

    void record(const fs::path& rel) { outputs_.push_back(rel.generic_string()); }

    json overrides(const char* key) const { return b_.pipeline.value(key, json::object()); }

    SplatCloud object_cloud(const std::string& id) const { return io::read_splat_ply(b_.objects.at(id)); }

    template <class Fn>
    void guarded(Stage s, const std::string& id, Fn&& fn) {
        try {
            fn();
        } catch (const PipelineError&) {
            throw;
        } catch (const std::exception& e) {
            throw PipelineError(stage_name(s), id, e.what());
        }
    }

    void run_stage(Stage s) {
        switch (s) {
            case Stage::init: return stage_init();
            case Stage::align: return stage_align();
            case Stage::physfit: return stage_physfit();
            case Stage::distill: return stage_distill();
            case Stage::simulate: return stage_simulate();
            case Stage::render: return stage_render();
            case Stage::evaluate: return stage_evaluate();
        }
    }

    void stage_init() {
        fs::create_directories(dir_ / "init");
        std::vector<Pointmap> pointmaps;
        for (const auto& v : b_.views) pointmaps.push_back(backproject(io::read_depth(v.depth), v.camera));
        config_["views"] = b_.views.size();
        for (const auto& id : ids_)
            guarded(Stage::init, id, [&] {
                const SplatCloud cloud = object_cloud(id);
                std::vector<Mask> masks;
                for (const auto& v : b_.views) masks.push_back(io::read_pgm_mask(v.masks.at(id)));
                std::vector<PointmapObservation> obs;
                for (std::size_t v = 0; v < b_.views.size(); ++v)
                    obs.push_back({&pointmaps[v], &masks[v], &b_.views[v].camera});
                const PoseInit init = initialize_pose(cloud, obs);
                json j = pose_json(init.pose);
                j["scale"] = init.scale;
                j["support"] = init.support;
                const fs::path rel = fs::path("init") / (id + ".pose.json");
                io::write_json(dir_ / rel, j);
                record(rel);
            });
    }

    AlignConfig align_config(const std::string& id) const {
        AlignConfig cfg;
        const json o = overrides("align");
        cfg.max_iters = o.value("max_iters", cfg.max_iters);
        cfg.translation_step = o.value("translation_step", cfg.translation_step);
        cfg.rotation_step = o.value("rotation_step", cfg.rotation_step);
        for (const auto& v : b_.views) cfg.views.push_back({v.camera, io::read_pgm_mask(v.masks.at(id))});
        return cfg;
    }

    void stage_align() {
        fs::create_directories(dir_ / "align");
        for (const auto& id : ids_)
            guarded(Stage::align, id, [&] {
                const AlignConfig cfg = align_config(id);
                config_["max_iters"] = cfg.max_iters;
                config_["translation_step"] = cfg.translation_step;
                config_["rotation_step"] = cfg.rotation_step;
                const json init = io::read_json(dir_ / "init" / (id + ".pose.json"));
                const AlignResult r = refine_pose(object_cloud(id), io::pose_from_json(init), cfg);
                json j = pose_json(r.pose);
                j["scale"] = init.value("scale", 1.0);
                j["loss_trace"] = r.loss_trace;
                j["converged"] = r.converged;
                j["iters"] = r.iters_used;
                const fs::path rel = fs::path("align") / (id + ".pose.json");
                io::write_json(dir_ / rel, j);
                record(rel);
                log("  " + id + ": loss " + std::to_string(r.loss_trace.front()) + " -> " +
                    std::to_string(r.loss_trace.back()) + " in " + std::to_string(r.iters_used) + " iterations");
            });
    }

    LayoutConfig layout_config() const {
        LayoutConfig cfg;
        const json o = overrides("layout");
        cfg.max_iters = o.value("max_iters", cfg.max_iters);
        cfg.optimize_rotation = o.value("optimize_rotation", cfg.optimize_rotation);
        if (o.contains("anchor")) cfg.anchor = AnchorWeights{o["anchor"].value("translation", 0.1), o["anchor"].value("rotation", 0.1)};
        return cfg;
    }

    LayoutResult layout_from(const std::string& pose_stage, const LayoutConfig& cfg) const {
        const RelationGraph graph = RelationGraph::from_json(io::read_json(b_.relation_graph));
        std::vector<LayoutObject> objs;
        for (const auto& id : ids_)
            objs.push_back({id, object_cloud(id), read_pose(dir_ / pose_stage / (id + ".pose.json"))});
        return refine_layout(objs, graph, cfg);
    }

    void stage_physfit() {
        fs::create_directories(dir_ / "physfit");
        const LayoutConfig cfg = layout_config();
        config_["max_iters"] = cfg.max_iters;
        config_["optimize_rotation"] = cfg.optimize_rotation;
        config_["anchor"] = cfg.anchor.has_value();
        LayoutResult r;
        guarded(Stage::physfit, "", [&] { r = layout_from("align", cfg); });
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            const auto& id = ids_[i];
            json j = pose_json(r.poses[i]);
            const fs::path rel = fs::path("physfit") / (id + ".pose.json");
            io::write_json(dir_ / rel, j);
            record(rel);
            const fs::path ply = fs::path("physfit") / (id + ".ply");
            io::write_splat_ply(dir_ / ply, transform_cloud(object_cloud(id), r.poses[i]));
            record(ply);
        }
        json report = {{"converged", r.converged},
                       {"iters", r.iters},
                       {"final_os", r.final_os},
                       {"final_oo", r.final_oo},
                       {"objective_trace", r.objective_trace}};
        io::write_json(dir_ / "physfit" / "layout.json", report);
        record("physfit/layout.json");
        log("  layout: " + std::to_string(r.iters) + " iterations, os " + std::to_string(r.final_os) + ", oo " +
            std::to_string(r.final_oo));
    }

    DistillConfig distill_config(const std::string& id) const {
        DistillConfig cfg;
        const json o = overrides("distill");
        cfg.iters = o.value("iters", cfg.iters);
        cfg.learning_rate = o.value("learning_rate", cfg.learning_rate);
        cfg.patch_size = o.value("patch_size", cfg.patch_size);
        for (const auto& v : b_.views)
            cfg.views.push_back({v.camera, io::read_ppm(v.image), io::read_pgm_mask(v.masks.at(id))});
        return cfg;
    }

    void stage_distill() {
        fs::create_directories(dir_ / "distill");
        for (const auto& id : ids_)
            guarded(Stage::distill, id, [&] {
                const DistillConfig cfg = distill_config(id);
                config_["iters"] = cfg.iters;
                config_["learning_rate"] = cfg.learning_rate;
                config_["patch_size"] = cfg.patch_size;
                const RigidPose pose = read_pose(dir_ / "physfit" / (id + ".pose.json"));
                const DistillResult r = distill_colors(object_cloud(id), pose, cfg);
                const fs::path ply = fs::path("distill") / (id + ".ply");
                io::write_splat_ply(dir_ / ply, r.cloud);
                record(ply);
                const fs::path rep = fs::path("distill") / (id + ".json");
                io::write_json(dir_ / rep, {{"loss_trace", r.loss_trace},
                                            {"empty_overlap", r.empty_overlap},
                                            {"supported_splats", r.supported_splats}});
                record(rep);
            });
    }

    // Distilled object clouds placed at their refined poses.
    std::vector<SplatCloud> world_objects(const std::string& pose_stage) const {
        std::vector<SplatCloud> out;
        for (const auto& id : ids_)
            out.push_back(transform_cloud(io::read_splat_ply(dir_ / "distill" / (id + ".ply")),
                                          read_pose(dir_ / pose_stage / (id + ".pose.json"))));
        return out;
    }

    void stage_simulate() {
        fs::create_directories(dir_ / "simulate");
        const SimConfig cfg = sim_config_from_json(io::read_json(b_.sim_config), io::read_json(b_.force_schedule), ids_);
        config_["frames"] = cfg.frames;
        config_["substeps_per_frame"] = cfg.params.substeps_per_frame;
        config_["dt"] = cfg.params.dt;
        config_["seed"] = seed_;
        const auto clouds = world_objects("physfit");

        MpmState state{MpmParticles{}, MpmGrid(cfg.grid)};
        json summary = {{"objects", json::array()}};
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            ParticleSampling sampling = cfg.sampling;
            sampling.seed = seed_ + i;
            const std::size_t first = add_object_particles(state.particles, clouds[i], static_cast<int>(i),
                                                           cfg.params.materials[i], sampling, cfg.grid.dx);
            summary["objects"].push_back({{"id", ids_[i]}, {"first_particle", first}, {"splats", clouds[i].size()}});
        }
        summary["particles"] = state.particles.size();
        const auto warnings = cfg.params.warnings(cfg.grid);
        summary["warnings"] = warnings;
        for (const auto& w : warnings) log("  warning: " + w);
        log("  " + std::to_string(state.particles.size()) + " particles, " + std::to_string(cfg.frames) + " frames");

        guarded(Stage::simulate, "", [&] {
            simulate_frames(state, cfg.frames, cfg.params, [&](const FrameSnapshot& snap) {
                const fs::path rel = fs::path("simulate") / frame_name(snap.frame, "bin");
                write_snapshot(dir_ / rel, snap);
                record(rel);
            });
        });
        summary["frames"] = cfg.frames;
        io::write_json(dir_ / "simulate" / "summary.json", summary);
        record("simulate/summary.json");
    }

    SplatCloud static_scene(const std::vector<SplatCloud>& objects) const {
        SplatCloud scene = io::read_splat_ply(b_.background);
        for (const auto& c : objects) scene.append(c);
        return scene;
    }

    void stage_render() {
        fs::create_directories(dir_ / "render");
        const RenderSettings rs;
        const auto clouds = world_objects("physfit");
        for (std::size_t v = 0; v < b_.views.size(); ++v) {
            const fs::path rel = fs::path("render") / ("view" + std::to_string(v) + ".ppm");
            io::write_ppm(dir_ / rel, render(static_scene(clouds), b_.views[v].camera, rs).color);
            record(rel);
        }

        const json summary = io::read_json(dir_ / "simulate" / "summary.json");
        const SimConfig cfg = sim_config_from_json(io::read_json(b_.sim_config), io::read_json(b_.force_schedule), ids_);
        if (cfg.render_view < 0 || cfg.render_view >= static_cast<int>(b_.views.size()))
            throw PipelineError("render", "", "render_view " + std::to_string(cfg.render_view) + " does not exist");
        const Camera& cam = b_.views[cfg.render_view].camera;
        const SplatCloud background = io::read_splat_ply(b_.background);
        const int frames = summary.at("frames").get<int>();
        config_["frames"] = frames;
        config_["view"] = cfg.render_view;
        for (int k = 0; k < frames; ++k) {
            const FrameSnapshot snap = read_snapshot(dir_ / "simulate" / frame_name(k, "bin"));
            SplatCloud scene = background;
            for (std::size_t i = 0; i < ids_.size(); ++i) {
                const std::size_t first = summary["objects"][i].at("first_particle").get<std::size_t>();
                scene.append(advect_splats(clouds[i], snap.positions, snap.deformation, first));
            }
            const fs::path rel = fs::path("render") / frame_name(k, "ppm");
            io::write_ppm(dir_ / rel, render(scene, cam, rs).color);
            record(rel);
        }
    }

    void stage_evaluate() {
        fs::create_directories(dir_ / "evaluate");
        config_["ablation"] = opt_.ablation;
        const json report = evaluate_run(b_, dir_, opt_.ablation);
        io::write_json(dir_ / "evaluate" / "report.json", report);
        record("evaluate/report.json");
    }
};

struct ViewScores {
    double edge = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    EdgeErrorStats edge_stats;
};

ViewScores score_view(const RgbImage& rendered, const RgbImage& truth, const Mask& mask) {
    ViewScores s;
    s.edge_stats = edge_error_stats(to_gray(rendered), to_gray(truth), mask);
    s.edge = s.edge_stats.mean();
    const MaskedScores m = masked_psnr_ssim(rendered, truth, mask);
    s.psnr = m.psnr;
    s.ssim = m.ssim;
    return s;
}

json summarize(const std::vector<ViewScores>& scores) {
    double edge = 0.0, psnr = 0.0, ssim_sum = 0.0;
    EdgeErrorStats pooled;
    for (const auto& s : scores) {
        edge += s.edge;
        psnr += s.psnr;
        ssim_sum += s.ssim;
        pooled.sum += s.edge_stats.sum;
        pooled.count += s.edge_stats.count;
    }
    const double n = static_cast<double>(scores.size());
    return {{"edge_error", edge / n},
            {"edge_error_pooled", pooled.mean()},
            {"psnr", score_json(psnr / n)},
            {"ssim", ssim_sum / n}};
}

}  // namespace

void run_pipeline(const SceneBundle& bundle, const RunOptions& options) { Runner(bundle, options).run(); }

json evaluate_run(const SceneBundle& bundle, const fs::path& run_dir, bool ablation) {
    std::vector<std::string> missing;
    for (std::size_t v = 0; v < bundle.views.size(); ++v)
        if (!fs::exists(run_dir / "render" / ("view" + std::to_string(v) + ".ppm")))
            missing.push_back("view" + std::to_string(v));
    if (!missing.empty()) {
        std::string names;
        for (const auto& m : missing) names += (names.empty() ? "" : ", ") + m;
        throw PipelineError("evaluate", "", "run has no rendering for " + names);
    }
    const auto ids = bundle.object_ids();
    std::vector<Mask> masks;
    std::vector<RgbImage> truths;
    for (const auto& view : bundle.views) {
        Mask u(view.camera.width, view.camera.height, 0);
        for (const auto& id : ids) {
            const Mask m = io::read_pgm_mask(view.masks.at(id));
            for (std::size_t i = 0; i < u.size(); ++i) u.data[i] = u.data[i] || m.data[i];
        }
        masks.push_back(std::move(u));
        truths.push_back(io::read_ppm(view.image));
    }

    json report;
    report["views"] = json::array();
    std::vector<ViewScores> full;
    for (std::size_t v = 0; v < bundle.views.size(); ++v) {
        const RgbImage rendered = io::read_ppm(run_dir / "render" / ("view" + std::to_string(v) + ".ppm"));
        if (!rendered.same_shape(truths[v]))
            throw PipelineError("evaluate", "", "view" + std::to_string(v) + " rendering does not match the image size");
        full.push_back(score_view(rendered, truths[v], masks[v]));
        report["views"].push_back({{"view", v},
                                   {"edge_error", full.back().edge},
                                   {"psnr", score_json(full.back().psnr)},
                                   {"ssim", full.back().ssim}});
    }
    report["mean"] = summarize(full);

    if (ablation) {
        // Same pipeline with the alignment stage skipped: layout refinement
        // starts from the initial poses; colors are the distilled ones.
        const RelationGraph graph = RelationGraph::from_json(io::read_json(bundle.relation_graph));
        std::vector<LayoutObject> objs;
        for (const auto& id : ids)
            objs.push_back({id, io::read_splat_ply(bundle.objects.at(id)),
                            io::pose_from_json(io::read_json(run_dir / "init" / (id + ".pose.json")))});
        LayoutConfig cfg;
        const json o = bundle.pipeline.value("layout", json::object());
        cfg.max_iters = o.value("max_iters", cfg.max_iters);
        cfg.optimize_rotation = o.value("optimize_rotation", cfg.optimize_rotation);
        const LayoutResult lr = refine_layout(objs, graph, cfg);
        SplatCloud scene = io::read_splat_ply(bundle.background);
        for (std::size_t i = 0; i < ids.size(); ++i)
            scene.append(transform_cloud(io::read_splat_ply(run_dir / "distill" / (ids[i] + ".ply")), lr.poses[i]));
        std::vector<ViewScores> skipped;
        const RenderSettings rs;
        for (std::size_t v = 0; v < bundle.views.size(); ++v) {
            // Quantise like the stored renderings so both columns see the same pipeline.
            RgbImage img = render(scene, bundle.views[v].camera, rs).color;
            for (auto& c : img.data)
                for (int k = 0; k < 3; ++k) c[k] = std::round(std::clamp(c[k], 0.0, 1.0) * 255.0) / 255.0;
            skipped.push_back(score_view(img, truths[v], masks[v]));
        }
        const json a = summarize(skipped), b = report["mean"];
        report["ablation"] = {{"columns", {"without_alignment", "full"}},
                              {"edge_error", {a["edge_error"], b["edge_error"]}},
                              {"psnr", {a["psnr"], b["psnr"]}},
                              {"ssim", {a["ssim"], b["ssim"]}}};
    }
    return report;
}

}  // namespace splatsim
