#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "splatsim/core.hpp"
#include "splatsim/spatial_hash.hpp"

namespace splatsim {

/// Plane n.x + d = 0 with unit normal pointing into free space.
struct SupportPlane {
    Vec3 normal = Vec3::UnitY();
    double offset = 0.0;
    double signed_distance(const Vec3& x) const { return normal.dot(x) + offset; }
};

struct ObjectSceneEdge {
    std::string object;
    std::size_t plane = 0;
    double epsilon = 0.005;
};

struct ObjectObjectEdge {
    std::string a;
    std::string b;
    double margin = 0.01;
};

struct RelationGraph {
    std::vector<std::string> objects;
    std::vector<SupportPlane> planes;
    std::vector<ObjectSceneEdge> os_edges;
    std::vector<ObjectObjectEdge> oo_edges;

    /// Throws ConfigError for non-unit normals, non-positive tolerances or
    /// dangling references.
    void validate() const;
    bool has_object(const std::string& id) const;

    static RelationGraph from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Indices of the lowest `quantile` fraction of points by signed distance
/// to `plane` (at least one point).
std::vector<std::size_t> contact_set(const std::vector<Vec3>& points, const SupportPlane& plane, double quantile = 0.02);

/// Mean of squared two-sided hinge violations of the epsilon slab.
double loss_os(const std::vector<Vec3>& points, const std::vector<std::size_t>& contact, const SupportPlane& plane,
               double epsilon);

/// Sum over object pairs of max(0, m - d_min)^2.
double loss_oo(const RelationGraph& graph, const std::map<std::string, std::vector<Vec3>>& object_points);

struct LayoutObject {
    std::string id;
    SplatCloud cloud;  // object frame
    RigidPose pose;
};

struct AnchorWeights {
    double translation = 0.1;
    double rotation = 0.1;
};

struct LayoutConfig {
    double w_os = 1.0;
    double w_oo = 1.0;
    /// Squared deviation from the input poses; off when empty.
    std::optional<AnchorWeights> anchor;
    int max_iters = 500;
    double contact_quantile = 0.02;
    bool optimize_rotation = false;
    std::size_t softmin_k = 32;
    double softmin_temperature = 1e-3;
    /// Below this fraction of the margin a pair is treated as
    /// interpenetrating and pushed apart along the centroid axis.
    double penetration_fraction = 0.5;
    double initial_step = 0.5;
    int max_backtracks = 30;
    double objective_tol = 1e-20;
};

struct LayoutResult {
    std::vector<RigidPose> poses;
    bool converged = false;
    int iters = 0;
    std::vector<double> objective_trace;
    double final_os = 0.0;
    double final_oo = 0.0;
};

LayoutResult refine_layout(const std::vector<LayoutObject>& objects, const RelationGraph& graph,
                           const LayoutConfig& config = {});

}  // namespace splatsim
