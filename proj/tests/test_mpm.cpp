#include <gtest/gtest.h>
#include <omp.h>

#include <random>

#include "fixtures.hpp"
#include "splatsim/mpm.hpp"

using namespace splatsim;

namespace {

GridSpec small_grid(int n = 32, double dx = 1.0 / 32.0) {
    GridSpec g;
    g.dims = {n, n, n};
    g.dx = dx;
    return g;
}

SimParams quiet_params() {
    SimParams p;
    p.gravity = Vec3::Zero();
    p.domain_walls = false;
    p.materials = {Material{1e4, 0.3, 1000}};
    return p;
}

// Particles on a jittered lattice filling [lo, hi]^3, two per cell per axis.
MpmParticles block(const Vec3& lo, const Vec3& hi, double dx, int object, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> j(-0.1, 0.1);
    MpmParticles p;
    const double h = dx / 2;
    const double vol = h * h * h;
    for (double x = lo.x() + h / 2; x < hi.x(); x += h)
        for (double y = lo.y() + h / 2; y < hi.y(); y += h)
            for (double z = lo.z() + h / 2; z < hi.z(); z += h)
                p.push_back(Vec3(x, y, z) + h * Vec3(j(rng), j(rng), j(rng)), Vec3::Zero(), 1000 * vol, vol, object);
    return p;
}

void append(MpmParticles& to, const MpmParticles& from) {
    for (std::size_t i = 0; i < from.size(); ++i)
        to.push_back(from.positions[i], from.velocities[i], from.masses[i], from.volumes[i], from.object_id[i]);
}

Vec3 object_momentum(const MpmParticles& p, int object) {
    Vec3 s = Vec3::Zero();
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p.object_id[i] == object) s += p.masses[i] * p.velocities[i];
    return s;
}

}  // namespace

TEST(Stencil, PartitionOfUnityAndFirstMoment) {
    const GridSpec g = small_grid();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.2, 0.8);
    for (int t = 0; t < 100; ++t) {
        const Vec3 x(u(rng), u(rng), u(rng));
        const Stencil s = compute_stencil(x, g);
        for (int d = 0; d < 3; ++d) {
            double w = 0, dw = 0, moment = 0;
            for (int a = 0; a < 3; ++a) {
                w += s.w[d][a];
                dw += s.dw[d][a];
                moment += s.w[d][a] * ((s.base[d] + a) * g.dx - x[d]);
            }
            EXPECT_NEAR(w, 1.0, 1e-14);
            EXPECT_NEAR(dw, 0.0, 1e-10);
            EXPECT_NEAR(moment, 0.0, 1e-15);
        }
    }
}

TEST(P2g, ParticleOnNodeKeepsItsMass) {
    MpmGrid grid(small_grid());
    MpmParticles p;
    p.push_back(Vec3(16, 16, 16) / 32.0, Vec3(1, 0, 0), 0.7, 1e-5, 0);
    p2g(p, grid);
    EXPECT_NEAR(grid.total_mass(), 0.7, 1e-15);
    // Centre weight of a quadratic B-spline is 3/4 per axis.
    EXPECT_NEAR(grid.mass[grid.index(16, 16, 16)], 0.7 * 0.75 * 0.75 * 0.75, 1e-15);
    EXPECT_LT((grid.total_momentum() - Vec3(0.7, 0, 0)).norm(), 1e-15);
}

TEST(P2g, ScatterIsLinear) {
    MpmGrid one(small_grid()), two(small_grid());
    MpmParticles a, b;
    a.push_back(Vec3(0.41, 0.52, 0.33), Vec3(0.2, -0.1, 0.3), 0.5, 1e-5, 0);
    a.affine[0] = Mat3::Identity() * 0.3;
    b = a;
    b.push_back(a.positions[0], a.velocities[0], a.masses[0], a.volumes[0], 0);
    b.affine[1] = a.affine[0];
    p2g(a, one);
    p2g(b, two);
    for (std::size_t i = 0; i < one.mass.size(); ++i) {
        EXPECT_NEAR(two.mass[i], 2 * one.mass[i], 1e-16);
        EXPECT_LT((two.momentum[i] - 2 * one.momentum[i]).norm(), 1e-16);
    }
}

TEST(P2g, AffineTermIsMomentumNeutral) {
    MpmGrid grid(small_grid());
    MpmParticles p = block(Vec3(0.3, 0.3, 0.3), Vec3(0.5, 0.45, 0.4), grid.spec.dx, 0, 2);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0, 1);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.velocities[i] = Vec3(n(rng), n(rng), n(rng));
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) p.affine[i](r, c) = 5 * n(rng);
    }
    p2g(p, grid);
    EXPECT_LT((grid.total_momentum() - p.total_momentum()).norm(), 1e-10 * p.total_momentum().norm());
    EXPECT_NEAR(grid.total_mass(), p.total_mass(), 1e-12 * p.total_mass());
}

TEST(GridUpdate, RestAndGravity) {
    MpmGrid grid(small_grid());
    MpmParticles p = block(Vec3(0.3, 0.3, 0.3), Vec3(0.45, 0.4, 0.4), grid.spec.dx, 0, 4);
    for (auto& v : p.velocities) v = Vec3(0.1, 0.2, -0.3);
    SimParams params = quiet_params();
    params.dt = 1e-3;
    p2g(p, grid);
    grid_update(grid, p, params);
    for (std::size_t i = 0; i < grid.mass.size(); ++i)
        if (grid.mass[i] > 1e-9) EXPECT_LT((grid.momentum[i] - Vec3(0.1, 0.2, -0.3)).norm(), 1e-12);
    params.gravity = Vec3(0, -9.8, 0);
    p2g(p, grid);
    grid_update(grid, p, params);
    for (std::size_t i = 0; i < grid.mass.size(); ++i)
        if (grid.mass[i] > 1e-9) EXPECT_LT((grid.momentum[i] - Vec3(0.1, 0.2 - 0.0098, -0.3)).norm(), 1e-12);
}

TEST(GridUpdate, CompressedBlockForceIsEnergyGradient) {
    MpmGrid grid(small_grid());
    MpmParticles p = block(Vec3(0.4, 0.4, 0.4), Vec3(0.55, 0.55, 0.55), grid.spec.dx, 0, 5);
    for (auto& f : p.deformation) f = 0.9 * Mat3::Identity();
    const SimParams params = quiet_params();
    const Material& m = params.materials[0];
    p2g(p, grid);
    grid_update(grid, p, params);

    const Vec3 center = (Vec3(0.4, 0.4, 0.4) + Vec3(0.55, 0.55, 0.55)) / 2;
    double outward = 0;
    int checked = 0;
    // Energy with node `node` displaced by u: F_p <- (I + u grad_w_ip^T) F_p.
    auto energy = [&](int ni, int nj, int nk, const Vec3& u) {
        double e = 0;
        for (std::size_t q = 0; q < p.size(); ++q) {
            const Stencil s = compute_stencil(p.positions[q], grid.spec);
            const int a = ni - s.base[0], b = nj - s.base[1], c = nk - s.base[2];
            Mat3 f = p.deformation[q];
            if (a >= 0 && a < 3 && b >= 0 && b < 3 && c >= 0 && c < 3) {
                const Vec3 grad(s.dw[0][a] * s.w[1][b] * s.w[2][c], s.w[0][a] * s.dw[1][b] * s.w[2][c],
                                s.w[0][a] * s.w[1][b] * s.dw[2][c]);
                f = (Mat3::Identity() + u * grad.transpose()) * f;
            }
            e += p.volumes[q] * fixed_corotated_energy(f, m.mu(), m.lambda());
        }
        return e;
    };
    for (int i = grid.active_lo[0]; i <= grid.active_hi[0]; ++i)
        for (int j = grid.active_lo[1]; j <= grid.active_hi[1]; ++j)
            for (int k = grid.active_lo[2]; k <= grid.active_hi[2]; ++k) {
                const Vec3 f = grid.force[grid.index(i, j, k)];
                outward += f.dot(grid.node_position(i, j, k) - center);
                if ((i + j + k) % 11 != 0 || f.norm() < 1e-6) continue;
                Vec3 fd;
                for (int d = 0; d < 3; ++d) {
                    Vec3 u = Vec3::Zero();
                    u[d] = 1e-7;
                    fd[d] = -(energy(i, j, k, u) - energy(i, j, k, -u)) / 2e-7;
                }
                EXPECT_LT((fd - f).norm(), 1e-4 * f.norm() + 1e-9);
                ++checked;
            }
    EXPECT_GT(outward, 0.0);
    EXPECT_GT(checked, 5);
}

TEST(G2p, ConstantVelocityAdvectsPosition) {
    MpmGrid grid(small_grid());
    MpmParticles p;
    p.push_back(Vec3(0.5, 0.5, 0.5), Vec3::Zero(), 1, 1e-5, 0);
    p2g(p, grid);
    for (int i = grid.active_lo[0]; i <= grid.active_hi[0]; ++i)
        for (int j = grid.active_lo[1]; j <= grid.active_hi[1]; ++j)
            for (int k = grid.active_lo[2]; k <= grid.active_hi[2]; ++k) grid.momentum[grid.index(i, j, k)] = Vec3(0, -0.98, 0);
    g2p(grid, p, 1e-3);
    EXPECT_LT((p.positions[0] - Vec3(0.5, 0.5 - 9.8e-4, 0.5)).norm(), 1e-15);
    EXPECT_LT((p.velocities[0] - Vec3(0, -0.98, 0)).norm(), 1e-14);
    EXPECT_LT(p.affine[0].norm(), 1e-13);
}

TEST(Step, RestingBlockIsFixedPoint) {
    MpmState s{block(Vec3(0.4, 0.4, 0.4), Vec3(0.5, 0.5, 0.5), 1.0 / 32, 0, 6), MpmGrid(small_grid())};
    const auto x0 = s.particles.positions;
    const SimParams params = quiet_params();
    for (int n = 0; n < 20; ++n) step(s, params);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        EXPECT_LT((s.particles.positions[i] - x0[i]).norm(), 1e-12);
        EXPECT_LT(s.particles.velocities[i].norm(), 1e-12);
    }
}

TEST(Step, FreeParticleFallsBallistically) {
    GridSpec g = small_grid(64, 0.1);
    MpmState s{MpmParticles{}, MpmGrid(g)};
    s.particles.push_back(Vec3(3.2, 5.0, 3.2), Vec3::Zero(), 1, 1e-3, 0);
    SimParams params = quiet_params();
    params.dt = 1e-3;
    params.gravity = Vec3(0, -9.8, 0);
    params.materials = {Material{}};
    double drop = 0;
    for (int n = 1; n <= 100; ++n) {
        step(s, params);
        drop += params.dt * n * params.dt * 9.8;
    }
    EXPECT_NEAR(s.particles.velocities[0].y(), -0.98, 1e-9);
    EXPECT_NEAR(5.0 - s.particles.positions[0].y(), drop, 1e-9);
}

TEST(Step, ImpulseLaunchesBlockThatReturnsToFloor) {
    GridSpec g = small_grid(32, 1.0 / 32);
    MpmState s{block(Vec3(0.4, 0.2, 0.4), Vec3(0.55, 0.3, 0.55), g.dx, 0, 7), MpmGrid(g)};
    SimParams params;
    params.dt = 5e-4;
    params.substeps_per_frame = 20;
    params.materials = {Material{2e4, 0.3, 500}};
    params.colliders = {Collider{Vec3::UnitY(), -0.2, BoundaryCondition::separating, 0.0}};
    ForceEvent kick;
    kick.kind = ForceKind::impulse_at_point;
    kick.start_frame = kick.end_frame = 1;
    kick.point = Vec3(0.475, 0.25, 0.475);
    kick.radius = 0.5;
    kick.value = Vec3(0, 2, 0);
    params.schedule.events = {kick};
    double peak = 0, lowest_after = 1e9;
    bool returned = false;
    simulate_frames(s, 60, params, [&](const FrameSnapshot& f) {
        double lo = 1e9;
        for (const auto& x : f.positions) lo = std::min(lo, x.y());
        peak = std::max(peak, lo);
        if (peak > 0.3) {
            if (lo < 0.21) returned = true;
            lowest_after = std::min(lowest_after, lo);
        }
    });
    EXPECT_GT(peak, 0.3);
    EXPECT_TRUE(returned);
    EXPECT_GE(lowest_after, 0.2 - g.dx);
}

TEST(SimulateFrames, ZeroFramesAndDefaults) {
    MpmState s{block(Vec3(0.4, 0.4, 0.4), Vec3(0.45, 0.45, 0.45), 1.0 / 32, 0, 8), MpmGrid(small_grid())};
    EXPECT_TRUE(simulate_frames(s, 0, quiet_params()).empty());
    EXPECT_EQ(SimParams{}.substeps_per_frame, 300);
}

TEST(SimulateFrames, DisjointObjectsKeepTheirMomentum) {
    MpmParticles p = block(Vec3(0.2, 0.4, 0.4), Vec3(0.3, 0.5, 0.5), 1.0 / 32, 0, 9);
    append(p, block(Vec3(0.6, 0.4, 0.4), Vec3(0.7, 0.5, 0.5), 1.0 / 32, 1, 10));
    for (std::size_t i = 0; i < p.size(); ++i) p.velocities[i] = p.object_id[i] == 0 ? Vec3(-0.2, 0.1, 0) : Vec3(0.1, 0, 0.3);
    SimParams params = quiet_params();
    params.materials.push_back(Material{3e4, 0.2, 800});
    params.substeps_per_frame = 10;
    MpmState s{p, MpmGrid(small_grid())};
    const Vec3 m0 = object_momentum(s.particles, 0), m1 = object_momentum(s.particles, 1);
    simulate_frames(s, 5, params);
    EXPECT_LT((object_momentum(s.particles, 0) - m0).norm(), 1e-10 * m0.norm());
    EXPECT_LT((object_momentum(s.particles, 1) - m1).norm(), 1e-10 * m1.norm());
}

TEST(SimulateFrames, ThreadCountDoesNotChangeResults) {
    auto run = [](int threads) {
        omp_set_num_threads(threads);
        MpmParticles p = block(Vec3(0.3, 0.25, 0.3), Vec3(0.6, 0.4, 0.6), 1.0 / 32, 0, 11);
        for (std::size_t i = 0; i < p.size(); ++i) p.velocities[i] = Vec3(0.3 * std::sin(7.0 * i), 0, 0.2);
        SimParams params;
        params.substeps_per_frame = 10;
        params.materials = {Material{}};
        params.colliders = {Collider{Vec3::UnitY(), -0.2}};
        MpmState s{p, MpmGrid(small_grid())};
        simulate_frames(s, 3, params);
        return s.particles.positions;
    };
    const int saved = omp_get_max_threads();
    const auto a = run(1), b = run(3);
    omp_set_num_threads(saved);
    EXPECT_EQ(a, b);
}

TEST(CheckBounds, ReportsEscapingParticle) {
    MpmParticles p;
    p.push_back(Vec3(0.5, 0.5, 0.5), Vec3::Zero(), 1, 1e-5, 0);
    p.push_back(Vec3(0.01, 0.5, 0.5), Vec3::Zero(), 1, 1e-5, 0);
    try {
        check_bounds(p, small_grid(), 7);
        FAIL() << "expected SimulationError";
    } catch (const SimulationError& e) {
        EXPECT_NE(std::string(e.what()).find("particle 1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("frame 7"), std::string::npos);
    }
}

TEST(SimParams, CflWarningAndValidation) {
    SimParams p;
    p.materials = {Material{1e7, 0.3, 100}};
    p.dt = 1e-3;
    EXPECT_FALSE(p.warnings(small_grid()).empty());
    p.dt = 1e-7;
    EXPECT_TRUE(p.warnings(small_grid()).empty());
    p.dt = 0;
    EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Particles, SamplingAssignsMassFromDensity) {
    const SplatCloud box = make_box_cloud(Vec3(0.05, 0.05, 0.05), [](const Vec3&) { return Vec3::Ones(); }, 0.01);
    MpmParticles p;
    const Material m{1e5, 0.3, 400};
    ParticleSampling s;
    s.fill_factor = 0.5;
    const std::size_t first = add_object_particles(p, box, 2, m, s, 1.0 / 64);
    EXPECT_EQ(first, 0u);
    ASSERT_EQ(p.size(), box.size());
    double vol = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(p.object_id[i], 2);
        EXPECT_NEAR(p.masses[i], 400 * p.volumes[i], 1e-15);
        vol += p.volumes[i];
    }
    EXPECT_NEAR(vol, 0.5 * 0.1 * 0.1 * 0.1, 1e-12);
    s.upsample = true;
    MpmParticles up;
    add_object_particles(up, box, 0, m, s, 1.0 / 64);
    EXPECT_GT(up.size(), box.size());
}

TEST(Particles, AdvectedSplatsFollowRotation) {
    SplatCloud c;
    c.push_back(Vec3::Zero(), Vec3(0.1, 0.2, 0.3), Quat::Identity(), 1, Vec3::Ones());
    const Mat3 r = Eigen::AngleAxisd(0.6, Vec3::UnitZ()).toRotationMatrix();
    const SplatCloud moved = advect_splats(c, {Vec3(1, 2, 3)}, {r}, 0);
    EXPECT_EQ(moved.centroids[0], Vec3(1, 2, 3));
    EXPECT_LT(rotation_angle_between(moved.orientations[0], Quat(r)), 1e-12);
    EXPECT_EQ(moved.scales[0], c.scales[0]);
}
