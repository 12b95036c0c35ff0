#include "splatsim/mpm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "splatsim/spatial_hash.hpp"

namespace splatsim {

void MpmParticles::push_back(const Vec3& x, const Vec3& v, double mass, double volume, int object) {
    positions.push_back(x);
    velocities.push_back(v);
    masses.push_back(mass);
    volumes.push_back(volume);
    deformation.push_back(Mat3::Identity());
    affine.push_back(Mat3::Zero());
    object_id.push_back(object);
}

void MpmParticles::validate(std::size_t n_materials) const {
    const std::size_t n = positions.size();
    if (velocities.size() != n || masses.size() != n || volumes.size() != n || deformation.size() != n ||
        affine.size() != n || object_id.size() != n)
        throw ConfigError("particle arrays have different lengths");
    for (std::size_t p = 0; p < n; ++p) {
        if (!(masses[p] > 0.0) || !(volumes[p] > 0.0))
            throw ConfigError("particle " + std::to_string(p) + " has non-positive mass or volume");
        if (!(deformation[p].determinant() > 0.0))
            throw ConfigError("particle " + std::to_string(p) + " has det(F) <= 0");
        if (object_id[p] < 0 || static_cast<std::size_t>(object_id[p]) >= n_materials)
            throw ConfigError("particle " + std::to_string(p) + " references a missing material");
    }
}

Vec3 MpmParticles::total_momentum() const {
    Vec3 s = Vec3::Zero();
    for (std::size_t p = 0; p < size(); ++p) s += masses[p] * velocities[p];
    return s;
}

double MpmParticles::total_mass() const {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
}

void GridSpec::validate() const {
    for (int d : dims)
        if (d < 2 * kGridMargin + 3) throw ConfigError("grid dimensions too small for the boundary margin");
    if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("grid spacing must be positive");
    if (!origin.allFinite()) throw ConfigError("grid origin must be finite");
    if (node_count() > (std::size_t{1} << 31)) throw ConfigError("grid too large");
}

MpmGrid::MpmGrid(const GridSpec& s) : spec(s) {
    spec.validate();
    const std::size_t n = spec.node_count();
    mass.assign(n, 0.0);
    momentum.assign(n, Vec3::Zero());
    force.assign(n, Vec3::Zero());
    accel.assign(n, Vec3::Zero());
    boundary.assign(n, 0);
}

void MpmGrid::clear() {
    for (int i = active_lo[0]; i <= active_hi[0]; ++i)
        for (int j = active_lo[1]; j <= active_hi[1]; ++j)
            for (int k = active_lo[2]; k <= active_hi[2]; ++k) {
                const std::size_t idx = index(i, j, k);
                mass[idx] = 0.0;
                momentum[idx].setZero();
                force[idx].setZero();
                accel[idx].setZero();
                boundary[idx] = 0;
            }
}

double MpmGrid::total_mass() const {
    double s = 0.0;
    for (int i = active_lo[0]; i <= active_hi[0]; ++i)
        for (int j = active_lo[1]; j <= active_hi[1]; ++j)
            for (int k = active_lo[2]; k <= active_hi[2]; ++k) s += mass[index(i, j, k)];
    return s;
}

Vec3 MpmGrid::total_momentum() const {
    Vec3 s = Vec3::Zero();
    for (int i = active_lo[0]; i <= active_hi[0]; ++i)
        for (int j = active_lo[1]; j <= active_hi[1]; ++j)
            for (int k = active_lo[2]; k <= active_hi[2]; ++k) s += momentum[index(i, j, k)];
    return s;
}

void Collider::validate() const {
    if (std::abs(normal.norm() - 1.0) > 1e-9) throw ConfigError("collider normal must be unit length");
    if (!std::isfinite(offset)) throw ConfigError("collider offset must be finite");
    if (friction < 0.0 || friction > 1.0) throw ConfigError("collider friction must lie in [0, 1]");
}

void ForceEvent::validate() const {
    if (start_frame < 0 || end_frame < start_frame) throw ConfigError("force event needs 0 <= start_frame <= end_frame");
    if (kind == ForceKind::impulse_at_point && !(radius > 0.0)) throw ConfigError("impulse radius must be positive");
    if (!value.allFinite() || !point.allFinite()) throw ConfigError("force event values must be finite");
}

void ForceSchedule::validate() const {
    for (const auto& e : events) e.validate();
}

void SimParams::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("time step must be positive");
    if (substeps_per_frame < 1) throw ConfigError("substeps per frame must be at least 1");
    if (!gravity.allFinite()) throw ConfigError("gravity must be finite");
    if (materials.empty()) throw ConfigError("simulation needs at least one material");
    for (const auto& m : materials) m.validate();
    for (const auto& c : colliders) c.validate();
    schedule.validate();
    for (const auto& e : schedule.events)
        if (e.target_object >= static_cast<int>(materials.size()))
            throw ConfigError("force event targets a missing object");
}

std::vector<std::string> SimParams::warnings(const GridSpec& grid) const {
    std::vector<std::string> out;
    for (std::size_t m = 0; m < materials.size(); ++m) {
        const double limit = 0.2 * grid.dx / materials[m].wave_speed();
        if (dt > limit) {
            std::ostringstream os;
            os << "time step " << dt << " exceeds the CFL limit " << limit << " for material " << m;
            out.push_back(os.str());
        }
    }
    return out;
}

Stencil compute_stencil(const Vec3& x, const GridSpec& spec) {
    Stencil s;
    const double inv_dx = 1.0 / spec.dx;
    for (int d = 0; d < 3; ++d) {
        const double fx = (x[d] - spec.origin[d]) * inv_dx;
        const int base = static_cast<int>(std::floor(fx - 0.5));
        const double f = fx - base;
        s.base[d] = base;
        s.w[d][0] = 0.5 * (1.5 - f) * (1.5 - f);
        s.w[d][1] = 0.75 - (f - 1.0) * (f - 1.0);
        s.w[d][2] = 0.5 * (f - 0.5) * (f - 0.5);
        s.dw[d][0] = -(1.5 - f) * inv_dx;
        s.dw[d][1] = -2.0 * (f - 1.0) * inv_dx;
        s.dw[d][2] = (f - 0.5) * inv_dx;
    }
    return s;
}

void check_bounds(const MpmParticles& particles, const GridSpec& spec, int frame) {
    for (std::size_t p = 0; p < particles.size(); ++p) {
        const Vec3& x = particles.positions[p];
        bool ok = x.allFinite();
        for (int d = 0; ok && d < 3; ++d) {
            const double fx = (x[d] - spec.origin[d]) / spec.dx - 0.5;
            ok = fx >= kGridMargin && std::floor(fx) + 2 <= spec.dims[d] - 1 - kGridMargin;
        }
        if (!ok) {
            std::ostringstream os;
            os << "particle " << p << " left the grid margin at frame " << frame << " (position " << x.transpose()
               << ")";
            throw SimulationError(os.str());
        }
    }
}

namespace {

// Particles are grouped into slabs four cells wide along x. A stencil spans
// three nodes, so slabs two apart never write the same node: all even slabs
// run concurrently, then all odd ones. The summation order per node depends
// only on particle order, never on the thread count.
template <class Fn>
void colored_scatter(const MpmGrid& grid, Fn&& fn) {
    if (grid.slab_start.size() < 2) return;
    const long n_slabs = static_cast<long>(grid.slab_start.size()) - 1;
    for (long color = 0; color < 2; ++color) {
        const long half = (n_slabs - color + 1) / 2;
#pragma omp parallel for schedule(dynamic, 1)
        for (long h = 0; h < half; ++h) {
            const long s = 2 * h + color;
            for (std::uint32_t q = grid.slab_start[s]; q < grid.slab_start[s + 1]; ++q) fn(grid.scatter_order[q]);
        }
    }
}

std::uint32_t next_stamp(MpmGrid& grid) {
    if (grid.mark.size() != grid.spec.node_count()) grid.mark.assign(grid.spec.node_count(), 0);
    if (++grid.mark_stamp == 0) {
        std::fill(grid.mark.begin(), grid.mark.end(), 0);
        grid.mark_stamp = 1;
    }
    return grid.mark_stamp;
}

bool targets(const ForceEvent& e, int object) { return e.target_object < 0 || e.target_object == object; }

}  // namespace

void p2g(const MpmParticles& particles, MpmGrid& grid, int frame) {
    check_bounds(particles, grid.spec, frame);
    const std::size_t n = particles.size();
    grid.stencils.resize(n);
#pragma omp parallel for schedule(static)
    for (std::size_t p = 0; p < n; ++p) grid.stencils[p] = compute_stencil(particles.positions[p], grid.spec);

    grid.clear();
    std::array<int, 3> lo{0, 0, 0}, hi{-1, -1, -1};
    if (n > 0) {
        lo = grid.stencils[0].base;
        hi = lo;
        for (const auto& s : grid.stencils)
            for (int d = 0; d < 3; ++d) {
                lo[d] = std::min(lo[d], s.base[d]);
                hi[d] = std::max(hi[d], s.base[d]);
            }
        for (int d = 0; d < 3; ++d) hi[d] += 2;
    }
    grid.active_lo = lo;
    grid.active_hi = hi;
    grid.clear();

    // Stable counting sort by slab.
    const std::size_t n_slabs = n ? static_cast<std::size_t>((hi[0] - 2 - lo[0]) / 4 + 1) : 0;
    grid.slab_start.assign(n_slabs + 1, 0);
    for (const auto& s : grid.stencils) ++grid.slab_start[(s.base[0] - lo[0]) / 4 + 1];
    for (std::size_t s = 0; s < n_slabs; ++s) grid.slab_start[s + 1] += grid.slab_start[s];
    grid.scatter_order.resize(n);
    {
        std::vector<std::uint32_t> fill(grid.slab_start.begin(), grid.slab_start.end() - 1);
        for (std::size_t p = 0; p < n; ++p)
            grid.scatter_order[fill[(grid.stencils[p].base[0] - lo[0]) / 4]++] = static_cast<std::uint32_t>(p);
    }

    colored_scatter(grid, [&](std::uint32_t p) {
        const Stencil& s = grid.stencils[p];
        const double m = particles.masses[p];
        const Vec3 mv = m * particles.velocities[p];
        const Mat3 mb = m * particles.affine[p];
        const Vec3& xp = particles.positions[p];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    const int i = s.base[0] + a, j = s.base[1] + b, k = s.base[2] + c;
                    const double w = s.w[0][a] * s.w[1][b] * s.w[2][c];
                    const std::size_t idx = grid.index(i, j, k);
                    grid.mass[idx] += w * m;
                    grid.momentum[idx] += w * (mv + mb * (grid.node_position(i, j, k) - xp));
                }
    });
}

void grid_update(MpmGrid& grid, const MpmParticles& particles, const SimParams& params) {
    const std::size_t n = particles.size();
    if (grid.stencils.size() != n) throw SimulationError("grid_update called without a matching p2g");
    const double dt = params.dt;

    std::vector<Mat3> stress(n);
#pragma omp parallel for schedule(static)
    for (std::size_t p = 0; p < n; ++p) {
        const Material& mat = params.materials[particles.object_id[p]];
        stress[p] = -particles.volumes[p] * fixed_corotated_kirchhoff(particles.deformation[p], mat.mu(), mat.lambda());
    }
    colored_scatter(grid, [&](std::uint32_t p) {
        const Stencil& s = grid.stencils[p];
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    const Vec3 grad(s.dw[0][a] * s.w[1][b] * s.w[2][c], s.w[0][a] * s.dw[1][b] * s.w[2][c],
                                    s.w[0][a] * s.w[1][b] * s.dw[2][c]);
                    grid.force[grid.index(s.base[0] + a, s.base[1] + b, s.base[2] + c)] += stress[p] * grad;
                }
    });

    // Relative to the heaviest particle so the cutoff does not depend on mass units.
    const double heaviest = n ? *std::max_element(particles.masses.begin(), particles.masses.end()) : 0.0;
    const double cutoff = kMassEpsilon * heaviest;
    const auto& dims = grid.spec.dims;
    constexpr int wall = kGridMargin + 1;
#pragma omp parallel for schedule(static)
    for (int i = grid.active_lo[0]; i <= grid.active_hi[0]; ++i)
        for (int j = grid.active_lo[1]; j <= grid.active_hi[1]; ++j)
            for (int k = grid.active_lo[2]; k <= grid.active_hi[2]; ++k) {
                const std::size_t idx = grid.index(i, j, k);
                const double m = grid.mass[idx];
                if (!(m > cutoff)) {
                    grid.momentum[idx].setZero();
                    continue;
                }
                Vec3 v = grid.momentum[idx] / m + dt * (grid.force[idx] / m + params.gravity + grid.accel[idx]);
                const Vec3 xi = grid.node_position(i, j, k);
                for (const auto& col : params.colliders) {
                    if (col.signed_distance(xi) > 0.0) continue;
                    grid.boundary[idx] = 1;
                    if (col.condition == BoundaryCondition::sticky) {
                        v.setZero();
                        continue;
                    }
                    double vn = v.dot(col.normal);
                    if (vn < 0.0) vn = 0.0;
                    const Vec3 vt = v - v.dot(col.normal) * col.normal;
                    v = vn * col.normal + (1.0 - col.friction) * vt;
                }
                if (params.domain_walls) {
                    const int c[3] = {i, j, k};
                    for (int d = 0; d < 3; ++d) {
                        if ((c[d] < wall && v[d] < 0.0) || (c[d] > dims[d] - 1 - wall && v[d] > 0.0)) {
                            v[d] = 0.0;
                            grid.boundary[idx] = 1;
                        }
                    }
                }
                grid.momentum[idx] = v;
            }
}

void g2p(const MpmGrid& grid, MpmParticles& particles, double dt) {
    const std::size_t n = particles.size();
    const bool cached = grid.stencils.size() == n;
    const double inv = 4.0 / (grid.spec.dx * grid.spec.dx);
#pragma omp parallel for schedule(static)
    for (std::size_t p = 0; p < n; ++p) {
        const Stencil s = cached ? grid.stencils[p] : compute_stencil(particles.positions[p], grid.spec);
        const Vec3 xp = particles.positions[p];
        Vec3 v = Vec3::Zero();
        Mat3 b = Mat3::Zero();
        for (int a = 0; a < 3; ++a)
            for (int bb = 0; bb < 3; ++bb)
                for (int c = 0; c < 3; ++c) {
                    const int i = s.base[0] + a, j = s.base[1] + bb, k = s.base[2] + c;
                    const double w = s.w[0][a] * s.w[1][bb] * s.w[2][c];
                    const Vec3& vi = grid.momentum[grid.index(i, j, k)];
                    v += w * vi;
                    b += w * vi * (grid.node_position(i, j, k) - xp).transpose();
                }
        particles.velocities[p] = v;
        particles.positions[p] = xp + dt * v;
        particles.affine[p] = inv * b;
        Mat3 f = (Mat3::Identity() + dt * particles.affine[p]) * particles.deformation[p];
        const double jd = f.determinant();
        if (!(jd >= kMinDeterminant && jd <= kMaxDeterminant)) {
            const double target = jd > kMaxDeterminant ? kMaxDeterminant : kMinDeterminant;
            if (jd > 0.0 || jd < 0.0)
                f *= std::cbrt(target / jd);
            else
                f = std::cbrt(target) * polar_rotation(f);
        }
        particles.deformation[p] = f;
    }
}

void step(MpmState& state, const SimParams& params) {
    auto& particles = state.particles;
    auto& grid = state.grid;
    const auto& events = params.schedule.events;
    if (state.substep == 0)
        for (const auto& e : events) {
            if (e.kind != ForceKind::impulse_at_point || e.start_frame != state.frame) continue;
            const double r2 = e.radius * e.radius;
            for (std::size_t p = 0; p < particles.size(); ++p)
                if (targets(e, particles.object_id[p]) && squared_distance(particles.positions[p], e.point) <= r2)
                    particles.velocities[p] += e.value;
        }

    p2g(particles, grid, state.frame);

    for (const auto& e : events) {
        if (e.kind != ForceKind::force_field || state.frame < e.start_frame || state.frame > e.end_frame) continue;
        const std::uint32_t stamp = next_stamp(grid);
        for (std::size_t p = 0; p < particles.size(); ++p) {
            if (!targets(e, particles.object_id[p])) continue;
            const Stencil& s = grid.stencils[p];
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    for (int c = 0; c < 3; ++c) {
                        const std::size_t idx = grid.index(s.base[0] + a, s.base[1] + b, s.base[2] + c);
                        if (grid.mark[idx] == stamp) continue;
                        grid.mark[idx] = stamp;
                        grid.accel[idx] += e.value;
                    }
        }
    }

    grid_update(grid, particles, params);
    g2p(grid, particles, params.dt);

    if (++state.substep >= params.substeps_per_frame) {
        state.substep = 0;
        ++state.frame;
    }
}

std::vector<FrameSnapshot> simulate_frames(MpmState& state, int n_frames, const SimParams& params,
                                           const std::function<void(const FrameSnapshot&)>& on_frame) {
    params.validate();
    state.particles.validate(params.materials.size());
    std::vector<FrameSnapshot> out;
    for (int f = 0; f < n_frames; ++f) {
        const int frame = state.frame;
        for (int s = 0; s < params.substeps_per_frame; ++s) step(state, params);
        FrameSnapshot snap;
        snap.frame = frame;
        snap.positions = state.particles.positions;
        snap.deformation = state.particles.deformation;
        if (on_frame) on_frame(snap);
        out.push_back(std::move(snap));
    }
    return out;
}

std::size_t add_object_particles(MpmParticles& particles, const SplatCloud& world_cloud, int object_id,
                                 const Material& material, const ParticleSampling& sampling, double grid_dx) {
    material.validate();
    if (world_cloud.size() == 0) throw ConfigError("cannot sample particles from an empty cloud");
    if (!(sampling.fill_factor > 0.0 && sampling.fill_factor <= 1.0))
        throw ConfigError("fill factor must lie in (0, 1]");
    if (!(grid_dx > 0.0)) throw ConfigError("grid spacing must be positive");

    std::vector<Vec3> points = world_cloud.centroids;
    Vec3 lo = points[0], hi = points[0];
    for (const auto& x : points) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    if (sampling.upsample) {
        // Jittered lattice kept near the existing centroids: fills gaps of
        // sparse clouds with a minimum spacing of half the lattice step.
        const double r = sampling.upsample_spacing > 0.0 ? sampling.upsample_spacing : 0.5 * grid_dx;
        const double reach = sampling.upsample_max_distance > 0.0 ? sampling.upsample_max_distance : 2.0 * r;
        const SpatialHashGrid index(world_cloud.centroids);
        std::mt19937_64 rng(sampling.seed);
        std::uniform_real_distribution<double> jitter(-0.25, 0.25);
        const Vec3 ext = hi - lo;
        const int nx = static_cast<int>(ext.x() / r) + 1, ny = static_cast<int>(ext.y() / r) + 1,
                  nz = static_cast<int>(ext.z() / r) + 1;
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                for (int k = 0; k < nz; ++k) {
                    const Vec3 c = lo + r * Vec3(i + 0.5 + jitter(rng), j + 0.5 + jitter(rng), k + 0.5 + jitter(rng));
                    const double d2 = index.nearest(c).squared_distance;
                    if (d2 >= 0.25 * r * r && d2 <= reach * reach) points.push_back(c);
                }
    }
    const Vec3 ext = (hi - lo).cwiseMax(grid_dx);
    const double v0 = ext.prod() * sampling.fill_factor / static_cast<double>(points.size());
    const double mass = material.density * v0;
    const std::size_t first = particles.size();
    for (const auto& x : points) particles.push_back(x, Vec3::Zero(), mass, v0, object_id);
    return first;
}

SplatCloud advect_splats(const SplatCloud& rest, const std::vector<Vec3>& positions,
                         const std::vector<Mat3>& deformation, std::size_t first_particle) {
    if (first_particle + rest.size() > positions.size() || positions.size() != deformation.size())
        throw ConfigError("snapshot does not cover the splat range");
    SplatCloud out = rest;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        out.centroids[i] = positions[first_particle + i];
        const Quat r(polar_rotation(deformation[first_particle + i]));
        out.orientations[i] = (r * rest.orientations[i]).normalized();
    }
    return out;
}

}  // namespace splatsim
