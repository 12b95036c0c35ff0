#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "splatsim/core.hpp"
#include "splatsim/mpm.hpp"

namespace splatsim {

namespace fs = std::filesystem;

/// A failure inside a pipeline stage, tagged with the stage and object.
class PipelineError : public std::runtime_error {
public:
    PipelineError(const std::string& stage, const std::string& object, const std::string& what);
    std::string stage;
    std::string object;
};

struct BundleView {
    Camera camera;
    fs::path image;
    fs::path depth;
    std::map<std::string, fs::path> masks;  // object id -> mask
};

/// On-disk scene package described by a bundle.json file. Paths are stored
/// resolved against the bundle directory.
struct SceneBundle {
    fs::path file;
    fs::path root;
    std::uint64_t seed = 0;
    fs::path background;
    std::map<std::string, fs::path> objects;
    std::vector<BundleView> views;
    fs::path relation_graph;
    fs::path sim_config;
    fs::path force_schedule;
    /// Optional per-stage overrides ("align", "layout", "distill").
    nlohmann::json pipeline = nlohmann::json::object();

    static SceneBundle load(const fs::path& bundle_json);
    /// Checks that every referenced file exists and parses, dimensions agree
    /// and every graph object is present. Throws ConfigError.
    void validate() const;
    std::vector<std::string> object_ids() const;
    /// Digest over bundle.json and every referenced file.
    std::string digest() const;
};

struct SimConfig {
    GridSpec grid;
    SimParams params;
    int frames = 24;
    ParticleSampling sampling;
    int render_view = 0;
};

/// Parses sim_config.json and force_schedule.json. Material and event
/// targets are resolved against `object_ids` (in that order).
SimConfig sim_config_from_json(const nlohmann::json& sim, const nlohmann::json& schedule,
                               const std::vector<std::string>& object_ids);

enum class Stage { init, align, physfit, distill, simulate, render, evaluate };

std::string stage_name(Stage stage);
/// Comma-separated stage names; "all" expands to every stage except
/// evaluate, "" to none.
std::vector<Stage> parse_stages(const std::string& list);
/// The stage whose outputs `stage` consumes, if any.
std::optional<Stage> required_stage(Stage stage);

struct RunOptions {
    fs::path out;
    std::optional<std::uint64_t> seed;  // overrides the bundle seed
    std::vector<Stage> stages;
    bool ablation = true;  // evaluate: add the no-alignment column
    std::ostream* log = nullptr;
};

/// Runs the requested stages in pipeline order, each reading its
/// predecessor's files from the run directory. Writes manifest.json
/// (deterministic) and timing.json (wall times).
void run_pipeline(const SceneBundle& bundle, const RunOptions& options);

/// Per-view and mean edge error, masked PSNR and SSIM of the run's rendered
/// views against the bundle images.
nlohmann::json evaluate_run(const SceneBundle& bundle, const fs::path& run_dir, bool ablation);

/// JSON number, or the string "inf" for an infinite PSNR.
nlohmann::json score_json(double value);

/// Frame snapshot files: uint32 count, then per particle 3 position and 9
/// deformation values as float64 (little-endian).
void write_snapshot(const fs::path& path, const FrameSnapshot& snap);
FrameSnapshot read_snapshot(const fs::path& path);

}  // namespace splatsim
