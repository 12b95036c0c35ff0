#include "splatsim/spatial_hash.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace splatsim {

namespace {
constexpr std::size_t kBruteForcePairs = 4096;
constexpr int kMaxDim = 256;
}  // namespace

SpatialHashGrid::SpatialHashGrid(const std::vector<Vec3>& points, double cell_size) : points_(&points) {
    if (points.empty()) throw ConfigError("spatial grid over an empty point set");
    Vec3 lo = points.front(), hi = points.front();
    for (const auto& p : points) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Vec3 ext = hi - lo;
    if (cell_size <= 0.0) {
        // About two points per occupied cell for surface-like sets.
        const double area = ext.x() * ext.y() + ext.y() * ext.z() + ext.x() * ext.z();
        cell_size = std::sqrt(std::max(area, 1e-30) * 2.0 / static_cast<double>(points.size()));
        if (!(cell_size > 0.0) || !std::isfinite(cell_size)) cell_size = 1.0;
    }
    cell_ = std::max(cell_size, ext.maxCoeff() / kMaxDim);
    if (!(cell_ > 0.0)) cell_ = 1.0;
    origin_ = lo;
    for (int k = 0; k < 3; ++k) dims_[k] = std::max(1, static_cast<int>(std::floor(ext[k] / cell_)) + 1);

    const std::size_t n_cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    std::vector<std::uint32_t> counts(n_cells + 1, 0);
    std::vector<std::uint32_t> cell_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        cell_of[i] = static_cast<std::uint32_t>(cell_index(cell_coord(p.x(), 0), cell_coord(p.y(), 1), cell_coord(p.z(), 2)));
        ++counts[cell_of[i] + 1];
    }
    for (std::size_t c = 0; c < n_cells; ++c) counts[c + 1] += counts[c];
    cell_start_ = counts;
    order_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) order_[counts[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

int SpatialHashGrid::cell_coord(double v, int axis) const {
    const double c = std::floor((v - origin_[axis]) / cell_);
    return static_cast<int>(std::clamp(c, 0.0, static_cast<double>(dims_[axis] - 1)));
}

SpatialHashGrid::Hit SpatialHashGrid::nearest(const Vec3& q) const {
    const auto& pts = *points_;
    // Unclamped cell coordinate of the query (may lie outside the grid).
    int qc[3];
    for (int k = 0; k < 3; ++k) {
        const double c = std::floor((q[k] - origin_[k]) / cell_);
        qc[k] = static_cast<int>(std::clamp(c, -1e9, 1e9));
    }
    // Rings closer than the grid itself contain no cells.
    int r0 = 0;
    for (int k = 0; k < 3; ++k) {
        if (qc[k] < 0) r0 = std::max(r0, -qc[k]);
        if (qc[k] >= dims_[k]) r0 = std::max(r0, qc[k] - dims_[k] + 1);
    }
    int r_max = 0;
    for (int k = 0; k < 3; ++k) r_max = std::max({r_max, std::abs(qc[k]), std::abs(dims_[k] - 1 - qc[k])});

    Hit best{0, std::numeric_limits<double>::infinity()};
    auto scan_cell = [&](int x, int y, int z) {
        const std::size_t c = cell_index(x, y, z);
        for (std::uint32_t e = cell_start_[c]; e < cell_start_[c + 1]; ++e) {
            const std::uint32_t i = order_[e];
            const double d2 = squared_distance(q, pts[i]);
            if (d2 < best.squared_distance || (d2 == best.squared_distance && i < best.index)) best = {i, d2};
        }
    };
    for (int r = r0; r <= r_max; ++r) {
        const int zlo = std::max(0, qc[2] - r), zhi = std::min(dims_[2] - 1, qc[2] + r);
        const int ylo = std::max(0, qc[1] - r), yhi = std::min(dims_[1] - 1, qc[1] + r);
        const int xlo = std::max(0, qc[0] - r), xhi = std::min(dims_[0] - 1, qc[0] + r);
        for (int z = zlo; z <= zhi; ++z) {
            const bool zface = std::abs(z - qc[2]) == r;
            for (int y = ylo; y <= yhi; ++y) {
                const bool yface = std::abs(y - qc[1]) == r;
                if (zface || yface) {
                    for (int x = xlo; x <= xhi; ++x) scan_cell(x, y, z);
                } else {
                    if (qc[0] - r >= 0 && qc[0] - r < dims_[0]) scan_cell(qc[0] - r, y, z);
                    if (r > 0 && qc[0] + r >= 0 && qc[0] + r < dims_[0]) scan_cell(qc[0] + r, y, z);
                }
            }
        }
        // Cells in ring r+1 are at least r cells away from the query.
        const double bound = r * cell_ * (1.0 - 1e-9);
        if (best.squared_distance <= bound * bound) break;
    }
    return best;
}

ClosestPair closest_pair(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw ConfigError("minimum distance of an empty point set is undefined");
    ClosestPair best{0, 0, std::numeric_limits<double>::infinity()};
    double best2 = std::numeric_limits<double>::infinity();
    if (a.size() * b.size() <= kBruteForcePairs) {
        for (std::size_t i = 0; i < a.size(); ++i)
            for (std::size_t j = 0; j < b.size(); ++j) {
                const double d2 = squared_distance(a[i], b[j]);
                if (d2 < best2) {
                    best2 = d2;
                    best.index_a = i;
                    best.index_b = j;
                }
            }
    } else {
        const SpatialHashGrid grid(b);
        std::vector<SpatialHashGrid::Hit> hits(a.size());
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < a.size(); ++i) hits[i] = grid.nearest(a[i]);
        for (std::size_t i = 0; i < a.size(); ++i)
            if (hits[i].squared_distance < best2) {
                best2 = hits[i].squared_distance;
                best.index_a = i;
                best.index_b = hits[i].index;
            }
    }
    best.distance = std::sqrt(best2);
    return best;
}

double min_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) { return closest_pair(a, b).distance; }

std::vector<ClosestPair> k_closest_pairs(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::size_t k) {
    if (a.empty() || b.empty()) throw ConfigError("closest pairs of an empty point set are undefined");
    std::vector<ClosestPair> pairs(a.size());
    if (a.size() * b.size() <= kBruteForcePairs) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            double best2 = std::numeric_limits<double>::infinity();
            std::size_t bj = 0;
            for (std::size_t j = 0; j < b.size(); ++j) {
                const double d2 = squared_distance(a[i], b[j]);
                if (d2 < best2) {
                    best2 = d2;
                    bj = j;
                }
            }
            pairs[i] = {i, bj, std::sqrt(best2)};
        }
    } else {
        const SpatialHashGrid grid(b);
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto hit = grid.nearest(a[i]);
            pairs[i] = {i, hit.index, std::sqrt(hit.squared_distance)};
        }
    }
    const std::size_t keep = std::min(k, pairs.size());
    std::partial_sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(keep), pairs.end(),
                      [](const ClosestPair& x, const ClosestPair& y) {
                          return x.distance != y.distance ? x.distance < y.distance : x.index_a < y.index_a;
                      });
    pairs.resize(keep);
    return pairs;
}

}  // namespace splatsim
