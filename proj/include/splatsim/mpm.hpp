#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "splatsim/constitutive.hpp"
#include "splatsim/core.hpp"

namespace splatsim {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MpmParticles {
    std::vector<Vec3> positions;
    std::vector<Vec3> velocities;
    std::vector<double> masses;
    std::vector<double> volumes;  // initial volume V0
    std::vector<Mat3> deformation;  // F
    std::vector<Mat3> affine;  // B
    std::vector<int> object_id;  // index into the material table

    std::size_t size() const { return positions.size(); }
    void push_back(const Vec3& x, const Vec3& v, double mass, double volume, int object);
    void validate(std::size_t n_materials) const;

    Vec3 total_momentum() const;
    double total_mass() const;
};

struct GridSpec {
    std::array<int, 3> dims{64, 64, 64};
    double dx = 1.0 / 64.0;
    Vec3 origin = Vec3::Zero();

    void validate() const;
    std::size_t node_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
};

/// Quadratic B-spline stencil of one particle.
struct Stencil {
    std::array<int, 3> base;
    double w[3][3];  // [axis][node]
    double dw[3][3];  // derivative in world units
};

struct MpmGrid {
    explicit MpmGrid(const GridSpec& spec = GridSpec());

    GridSpec spec;
    std::vector<double> mass;
    std::vector<Vec3> momentum;  // after grid_update: velocity for massive nodes
    std::vector<Vec3> force;
    std::vector<Vec3> accel;  // per-step external acceleration (force fields)
    std::vector<std::uint8_t> boundary;  // set when a collider or wall touched the node this step
    // Inclusive node range holding all data of the last scatter.
    std::array<int, 3> active_lo{0, 0, 0};
    std::array<int, 3> active_hi{-1, -1, -1};

    // Scratch from the last p2g, reused by grid_update and force fields.
    std::vector<Stencil> stencils;
    std::vector<std::uint32_t> scatter_order;  // particles grouped by x slab
    std::vector<std::uint32_t> slab_start;
    std::vector<std::uint32_t> mark;
    std::uint32_t mark_stamp = 0;

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * spec.dims[1] + j) * spec.dims[2] + k;
    }
    Vec3 node_position(int i, int j, int k) const {
        return spec.origin + spec.dx * Vec3(i, j, k);
    }
    const Vec3& velocity(int i, int j, int k) const { return momentum[index(i, j, k)]; }

    /// Zeroes the active range.
    void clear();
    double total_mass() const;
    Vec3 total_momentum() const;
};

/// Minimum distance, in cells, between a particle stencil and the grid border.
inline constexpr int kGridMargin = 2;
/// Nodes lighter than this fraction of the heaviest particle get no velocity.
inline constexpr double kMassEpsilon = 1e-10;
inline constexpr double kMinDeterminant = 0.1;
inline constexpr double kMaxDeterminant = 10.0;

enum class BoundaryCondition { sticky, separating };

/// Half-space collider n.x + d <= 0 is solid.
struct Collider {
    Vec3 normal = Vec3::UnitY();
    double offset = 0.0;
    BoundaryCondition condition = BoundaryCondition::separating;
    double friction = 0.0;

    double signed_distance(const Vec3& x) const { return normal.dot(x) + offset; }
    void validate() const;
};

enum class ForceKind { impulse_at_point, force_field };

struct ForceEvent {
    ForceKind kind = ForceKind::impulse_at_point;
    int target_object = -1;  // -1 targets every object
    int start_frame = 0;
    int end_frame = 0;
    Vec3 point = Vec3::Zero();
    double radius = 0.0;
    /// Velocity change for impulses, acceleration for fields.
    Vec3 value = Vec3::Zero();

    void validate() const;
};

struct ForceSchedule {
    std::vector<ForceEvent> events;
    void validate() const;
};

struct SimParams {
    double dt = 1e-4;
    Vec3 gravity{0.0, -9.8, 0.0};
    int substeps_per_frame = 300;
    std::vector<Material> materials;  // indexed by particle object_id
    std::vector<Collider> colliders;
    ForceSchedule schedule;
    /// Removes outward velocity on nodes within three cells of the grid border.
    bool domain_walls = true;

    void validate() const;
    /// Human-readable warnings, currently only the CFL guard.
    std::vector<std::string> warnings(const GridSpec& grid) const;
};

struct MpmState {
    MpmParticles particles;
    MpmGrid grid;
    int frame = 0;
    int substep = 0;  // within the current frame
};

Stencil compute_stencil(const Vec3& x, const GridSpec& spec);

/// Throws SimulationError if a stencil leaves the margin.
void check_bounds(const MpmParticles& particles, const GridSpec& spec, int frame);

void p2g(const MpmParticles& particles, MpmGrid& grid, int frame = 0);

/// Converts momenta to velocities, adds stress, gravity and field
/// accelerations, then applies colliders and walls.
void grid_update(MpmGrid& grid, const MpmParticles& particles, const SimParams& params);

void g2p(const MpmGrid& grid, MpmParticles& particles, double dt);

/// One substep including scheduled forces. Advances the frame counter when
/// substep wraps.
void step(MpmState& state, const SimParams& params);

struct FrameSnapshot {
    int frame = 0;
    std::vector<Vec3> positions;
    std::vector<Mat3> deformation;
};

std::vector<FrameSnapshot> simulate_frames(MpmState& state, int n_frames, const SimParams& params,
                                           const std::function<void(const FrameSnapshot&)>& on_frame = {});

struct ParticleSampling {
    double fill_factor = 0.5;
    bool upsample = false;
    /// Target spacing for upsampled particles; 0 picks half the grid cell.
    double upsample_spacing = 0.0;
    /// Candidates farther than this from every splat are dropped; 0 means
    /// twice the spacing. Large values fill closed shells up to their box.
    double upsample_max_distance = 0.0;
    std::uint64_t seed = 0;
};

/// Appends one particle per splat centroid (plus optional upsampled
/// interior particles). Returns the index of the first appended particle.
std::size_t add_object_particles(MpmParticles& particles, const SplatCloud& world_cloud, int object_id,
                                 const Material& material, const ParticleSampling& sampling, double grid_dx);

/// Splats moved with their particles: centroids follow positions, orientations
/// co-rotate with the rotation factor of F.
SplatCloud advect_splats(const SplatCloud& rest, const std::vector<Vec3>& positions,
                         const std::vector<Mat3>& deformation, std::size_t first_particle);

}  // namespace splatsim
