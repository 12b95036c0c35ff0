#pragma once

#include <cstddef>
#include <vector>

#include "splatsim/core.hpp"

namespace splatsim {

/// Uniform grid over a static point set answering exact nearest-neighbour
/// queries by expanding cell rings.
class SpatialHashGrid {
public:
    SpatialHashGrid() = default;
    /// `cell_size` <= 0 picks a size giving about two points per cell.
    explicit SpatialHashGrid(const std::vector<Vec3>& points, double cell_size = 0.0);

    struct Hit {
        std::size_t index = 0;
        double squared_distance = 0.0;
    };

    /// Nearest point to `q`. The set must be nonempty.
    Hit nearest(const Vec3& q) const;

    double cell_size() const { return cell_; }
    std::size_t size() const { return points_ ? points_->size() : 0; }

private:
    const std::vector<Vec3>* points_ = nullptr;
    Vec3 origin_ = Vec3::Zero();
    double cell_ = 1.0;
    int dims_[3] = {1, 1, 1};
    std::vector<std::uint32_t> cell_start_;  // prefix offsets into order_
    std::vector<std::uint32_t> order_;

    int cell_coord(double v, int axis) const;
    std::size_t cell_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
    }
};

/// Squared Euclidean distance, written out so every caller rounds identically.
inline double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a.x() - b.x();
    const double dy = a.y() - b.y();
    const double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

struct ClosestPair {
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    double distance = 0.0;
};

/// Exact minimum pairwise distance between two nonempty sets. Small inputs
/// are handled by direct enumeration, larger ones through a grid over `b`.
ClosestPair closest_pair(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double min_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// For each point of `a` its nearest neighbour in `b`, keeping the `k`
/// smallest such pairs sorted by distance.
std::vector<ClosestPair> k_closest_pairs(const std::vector<Vec3>& a, const std::vector<Vec3>& b, std::size_t k);

}  // namespace splatsim
