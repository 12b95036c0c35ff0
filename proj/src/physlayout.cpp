#include "splatsim/physlayout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace splatsim {

void RelationGraph::validate() const {
    for (std::size_t i = 0; i < planes.size(); ++i)
        if (std::abs(planes[i].normal.norm() - 1.0) > 1e-6)
            throw ConfigError("plane " + std::to_string(i) + " normal is not unit length");
    for (const auto& e : os_edges) {
        if (!has_object(e.object)) throw ConfigError("object-scene edge references unknown object '" + e.object + "'");
        if (e.plane >= planes.size()) throw ConfigError("object-scene edge references missing plane " + std::to_string(e.plane));
        if (!(e.epsilon > 0.0)) throw ConfigError("contact tolerance epsilon must be positive");
    }
    for (const auto& e : oo_edges) {
        if (!has_object(e.a) || !has_object(e.b))
            throw ConfigError("object-object edge references unknown object '" + (has_object(e.a) ? e.b : e.a) + "'");
        if (e.a == e.b) throw ConfigError("object-object edge joins '" + e.a + "' to itself");
        if (!(e.margin > 0.0)) throw ConfigError("separation margin must be positive");
    }
}

bool RelationGraph::has_object(const std::string& id) const {
    return std::find(objects.begin(), objects.end(), id) != objects.end();
}

RelationGraph RelationGraph::from_json(const nlohmann::json& j) {
    RelationGraph g;
    auto add_object = [&](const std::string& id) {
        if (!g.has_object(id)) g.objects.push_back(id);
    };
    try {
        if (j.contains("objects"))
            for (const auto& o : j.at("objects")) add_object(o.get<std::string>());
        if (j.contains("planes"))
            for (const auto& p : j.at("planes")) {
                const auto& n = p.at("n");
                if (n.size() != 3) throw ConfigError("plane normal must have 3 components");
                g.planes.push_back({Vec3(n[0].get<double>(), n[1].get<double>(), n[2].get<double>()),
                                    p.at("d").get<double>()});
            }
        if (j.contains("os_edges"))
            for (const auto& e : j.at("os_edges")) {
                ObjectSceneEdge edge;
                edge.object = e.at("object").get<std::string>();
                edge.plane = e.value("plane", std::size_t{0});
                edge.epsilon = e.value("epsilon", 0.005);
                add_object(edge.object);
                g.os_edges.push_back(edge);
            }
        if (j.contains("oo_edges"))
            for (const auto& e : j.at("oo_edges")) {
                const auto& pair = e.at("pair");
                if (pair.size() != 2) throw ConfigError("object-object edge pair must name two objects");
                ObjectObjectEdge edge{pair[0].get<std::string>(), pair[1].get<std::string>(), e.value("margin", 0.01)};
                add_object(edge.a);
                add_object(edge.b);
                g.oo_edges.push_back(edge);
            }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("relation graph JSON: ") + e.what());
    }
    g.validate();
    return g;
}

nlohmann::json RelationGraph::to_json() const {
    nlohmann::json j;
    j["objects"] = objects;
    j["planes"] = nlohmann::json::array();
    for (const auto& p : planes)
        j["planes"].push_back({{"n", {p.normal.x(), p.normal.y(), p.normal.z()}}, {"d", p.offset}});
    j["os_edges"] = nlohmann::json::array();
    for (const auto& e : os_edges) j["os_edges"].push_back({{"object", e.object}, {"plane", e.plane}, {"epsilon", e.epsilon}});
    j["oo_edges"] = nlohmann::json::array();
    for (const auto& e : oo_edges) j["oo_edges"].push_back({{"pair", {e.a, e.b}}, {"margin", e.margin}});
    return j;
}

std::vector<std::size_t> contact_set(const std::vector<Vec3>& points, const SupportPlane& plane, double quantile) {
    if (points.empty()) throw ConfigError("contact set of an empty object");
    std::vector<std::size_t> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::size_t keep =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(quantile * points.size())), 1, points.size());
    std::vector<double> dist(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) dist[i] = plane.signed_distance(points[i]);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                      [&](std::size_t a, std::size_t b) { return dist[a] != dist[b] ? dist[a] < dist[b] : a < b; });
    idx.resize(keep);
    return idx;
}

double loss_os(const std::vector<Vec3>& points, const std::vector<std::size_t>& contact, const SupportPlane& plane,
               double epsilon) {
    if (contact.empty()) throw ConfigError("object-scene loss needs a nonempty contact set");
    double sum = 0.0;
    for (std::size_t i : contact) {
        const double s = plane.signed_distance(points[i]);
        const double above = std::max(0.0, s - epsilon);
        const double below = std::max(0.0, -s - epsilon);
        sum += above * above + below * below;
    }
    return sum / static_cast<double>(contact.size());
}

double loss_oo(const RelationGraph& graph, const std::map<std::string, std::vector<Vec3>>& object_points) {
    double sum = 0.0;
    for (const auto& e : graph.oo_edges) {
        const double d = min_distance(object_points.at(e.a), object_points.at(e.b));
        const double h = std::max(0.0, e.margin - d);
        sum += h * h;
    }
    return sum;
}

namespace {

struct PoseGradient {
    Vec3 translation = Vec3::Zero();
    Vec3 rotation = Vec3::Zero();
};

struct Terms {
    double os = 0.0;
    double oo = 0.0;
    double anchor = 0.0;
    double total = 0.0;
};

class LayoutProblem {
public:
    LayoutProblem(const std::vector<LayoutObject>& objects, const RelationGraph& graph, const LayoutConfig& config)
        : objects_(objects), graph_(graph), config_(config) {
        for (std::size_t i = 0; i < objects.size(); ++i) {
            index_[objects[i].id] = i;
            local_centroids_.push_back(objects[i].cloud.mean_centroid());
            initial_.push_back(objects[i].pose);
        }
        for (const auto& id : graph.objects)
            if (!index_.count(id)) throw ConfigError("relation graph names object '" + id + "' that has no pose");
    }

    std::vector<std::vector<Vec3>> points(const std::vector<RigidPose>& poses) const {
        std::vector<std::vector<Vec3>> out(objects_.size());
        for (std::size_t i = 0; i < objects_.size(); ++i) out[i] = transform_points(objects_[i].cloud.centroids, poses[i]);
        return out;
    }

    Terms evaluate(const std::vector<RigidPose>& poses) const {
        const auto pts = points(poses);
        Terms t;
        for (const auto& e : graph_.os_edges) {
            const auto& p = pts[index_.at(e.object)];
            const auto& plane = graph_.planes[e.plane];
            t.os += loss_os(p, contact_set(p, plane, config_.contact_quantile), plane, e.epsilon);
        }
        for (const auto& e : graph_.oo_edges) {
            const double d = min_distance(pts[index_.at(e.a)], pts[index_.at(e.b)]);
            const double h = std::max(0.0, e.margin - d);
            t.oo += h * h;
        }
        if (config_.anchor)
            for (std::size_t i = 0; i < poses.size(); ++i) {
                t.anchor += config_.anchor->translation * (poses[i].translation - initial_[i].translation).squaredNorm();
                if (config_.optimize_rotation)
                    t.anchor += config_.anchor->rotation *
                                rotation_vector_from_quat(poses[i].rotation * initial_[i].rotation.conjugate()).squaredNorm();
            }
        t.total = config_.w_os * t.os + config_.w_oo * t.oo + t.anchor;
        return t;
    }

    std::vector<PoseGradient> gradient(const std::vector<RigidPose>& poses, bool force_centroid_axis) const {
        const auto pts = points(poses);
        std::vector<PoseGradient> g(objects_.size());
        std::vector<Vec3> centroids(objects_.size());
        for (std::size_t i = 0; i < objects_.size(); ++i) centroids[i] = poses[i].apply(local_centroids_[i]);

        auto push_point_force = [&](std::size_t obj, const Vec3& x, const Vec3& gx) {
            g[obj].translation += gx;
            g[obj].rotation += (x - centroids[obj]).cross(gx);
        };

        for (const auto& e : graph_.os_edges) {
            const std::size_t o = index_.at(e.object);
            const auto& plane = graph_.planes[e.plane];
            const auto contact = contact_set(pts[o], plane, config_.contact_quantile);
            const double inv = 1.0 / static_cast<double>(contact.size());
            for (std::size_t i : contact) {
                const double s = plane.signed_distance(pts[o][i]);
                const double coef = 2.0 * (std::max(0.0, s - e.epsilon) - std::max(0.0, -s - e.epsilon)) * inv;
                if (coef != 0.0) push_point_force(o, pts[o][i], config_.w_os * coef * plane.normal);
            }
        }

        for (const auto& e : graph_.oo_edges) {
            const std::size_t a = index_.at(e.a), b = index_.at(e.b);
            auto pairs = k_closest_pairs(pts[a], pts[b], std::max<std::size_t>(1, config_.softmin_k));
            const double d = pairs.front().distance;
            if (d >= e.margin) continue;
            // dL/dd of the hinge.
            const double coef = -2.0 * (e.margin - d) * config_.w_oo;
            const Vec3 axis = centroids[a] - centroids[b];
            if (force_centroid_axis || d < config_.penetration_fraction * e.margin) {
                if (axis.norm() == 0.0) continue;
                const Vec3 u = axis.normalized();
                g[a].translation += coef * u;
                g[b].translation -= coef * u;
                continue;
            }
            // Soft-min over the k closest pairs.
            const double t = config_.softmin_temperature;
            std::vector<double> w(pairs.size());
            double wsum = 0.0;
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                w[k] = std::exp(-(pairs[k].distance - d) / t);
                wsum += w[k];
            }
            for (std::size_t k = 0; k < pairs.size(); ++k) {
                if (pairs[k].distance <= 0.0) continue;
                const Vec3& x = pts[a][pairs[k].index_a];
                const Vec3& y = pts[b][pairs[k].index_b];
                const Vec3 u = (x - y) / pairs[k].distance;
                const Vec3 f = coef * (w[k] / wsum) * u;
                push_point_force(a, x, f);
                push_point_force(b, y, -f);
            }
        }

        if (config_.anchor)
            for (std::size_t i = 0; i < poses.size(); ++i) {
                g[i].translation += 2.0 * config_.anchor->translation * (poses[i].translation - initial_[i].translation);
                g[i].rotation += 2.0 * config_.anchor->rotation *
                                 rotation_vector_from_quat(poses[i].rotation * initial_[i].rotation.conjugate());
            }
        if (!config_.optimize_rotation)
            for (auto& gi : g) gi.rotation.setZero();
        return g;
    }

    std::vector<RigidPose> step(const std::vector<RigidPose>& poses, const std::vector<PoseGradient>& g,
                                double eta) const {
        std::vector<RigidPose> out = poses;
        for (std::size_t i = 0; i < poses.size(); ++i) {
            if (config_.optimize_rotation && g[i].rotation.norm() > 0.0) {
                const Vec3 pivot = poses[i].apply(local_centroids_[i]);
                const Quat dq = quat_from_rotation_vector(-eta * g[i].rotation);
                out[i].rotation = (dq * poses[i].rotation).normalized();
                out[i].translation = dq * (poses[i].translation - pivot) + pivot;
            }
            out[i].translation -= eta * g[i].translation;
        }
        return out;
    }

private:
    const std::vector<LayoutObject>& objects_;
    const RelationGraph& graph_;
    const LayoutConfig& config_;
    std::map<std::string, std::size_t> index_;
    std::vector<Vec3> local_centroids_;
    std::vector<RigidPose> initial_;
};

bool all_zero(const std::vector<PoseGradient>& g) {
    for (const auto& gi : g)
        if (!gi.translation.isZero(0.0) || !gi.rotation.isZero(0.0)) return false;
    return true;
}

}  // namespace

LayoutResult refine_layout(const std::vector<LayoutObject>& objects, const RelationGraph& graph,
                           const LayoutConfig& config) {
    graph.validate();
    LayoutProblem problem(objects, graph, config);
    LayoutResult result;
    for (const auto& o : objects) result.poses.push_back(o.pose);
    Terms cur = problem.evaluate(result.poses);
    result.objective_trace.push_back(cur.total);

    for (int iter = 0; iter < config.max_iters && cur.total > config.objective_tol; ++iter) {
        bool accepted = false;
        for (int mode = 0; mode < 2 && !accepted; ++mode) {
            const auto g = problem.gradient(result.poses, mode == 1);
            if (all_zero(g)) continue;
            double eta = config.initial_step;
            for (int b = 0; b <= config.max_backtracks; ++b, eta *= 0.5) {
                auto cand = problem.step(result.poses, g, eta);
                const Terms t = problem.evaluate(cand);
                if (t.total < cur.total) {
                    result.poses = std::move(cand);
                    cur = t;
                    accepted = true;
                    break;
                }
            }
        }
        result.iters = iter + 1;
        if (!accepted) break;
        result.objective_trace.push_back(cur.total);
    }
    result.final_os = cur.os;
    result.final_oo = cur.oo;
    result.converged = cur.oo <= 1e-12 && cur.os < 1e-8;
    return result;
}

}  // namespace splatsim
