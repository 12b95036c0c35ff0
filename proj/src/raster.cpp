#include "splatsim/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace splatsim {

namespace {

struct ProjectedSplat {
    std::uint32_t index;
    Vec2 mean;
    // Inverse of the dilated screen covariance: [a b; b c].
    double conic_a, conic_b, conic_c;
    double opacity;
    Vec3 mean_cam;
    Vec3 normal_cam;
    int xmin, xmax, ymin, ymax;
};

Mat2 screen_covariance(const Mat3& cov_world, const Vec3& p_cam, const Mat3& view_rot, const Camera& cam) {
    const double z = p_cam.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * p_cam.x() / (z * z), 0.0, cam.fy / z, -cam.fy * p_cam.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> t = jac * view_rot;
    Mat2 out = t * cov_world * t.transpose();
    // Exact symmetry.
    out(0, 1) = out(1, 0) = 0.5 * (out(0, 1) + out(1, 0));
    return out;
}

// Strict weak order independent of input order: depth first, then content.
bool splat_before(const ProjectedSplat& a, const ProjectedSplat& b, const SplatCloud& cloud) {
    if (a.mean_cam.z() != b.mean_cam.z()) return a.mean_cam.z() < b.mean_cam.z();
    for (int k = 0; k < 2; ++k)
        if (a.mean_cam[k] != b.mean_cam[k]) return a.mean_cam[k] < b.mean_cam[k];
    if (a.opacity != b.opacity) return a.opacity < b.opacity;
    const Vec3& ca = cloud.colors[a.index];
    const Vec3& cb = cloud.colors[b.index];
    for (int k = 0; k < 3; ++k)
        if (ca[k] != cb[k]) return ca[k] < cb[k];
    const Vec3& sa = cloud.scales[a.index];
    const Vec3& sb = cloud.scales[b.index];
    for (int k = 0; k < 3; ++k)
        if (sa[k] != sb[k]) return sa[k] < sb[k];
    return a.index < b.index;
}

struct Prepared {
    std::vector<ProjectedSplat> splats;  // front-to-back
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<std::uint32_t>> tile_lists;  // indices into splats
};

Prepared prepare(const SplatCloud& cloud, const Camera& cam, const RenderSettings& s) {
    Prepared prep;
    const Mat3 view_rot = cam.world_to_camera.rotation_matrix();
    prep.splats.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud.opacities[i] <= 0.0) continue;
        const Vec3 p = cam.to_camera(cloud.centroids[i]);
        if (!(p.z() > s.near_plane)) continue;
        Mat2 cov = screen_covariance(cloud.covariance(i), p, view_rot, cam);
        cov(0, 0) += s.dilation;
        cov(1, 1) += s.dilation;
        const double det = cov.determinant();
        if (!(det > 0.0)) continue;
        const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
        const double radius = s.truncation_sigma * std::sqrt(lambda_max);
        const Vec2 mean(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
        ProjectedSplat ps;
        ps.index = static_cast<std::uint32_t>(i);
        ps.mean = mean;
        ps.conic_a = cov(1, 1) / det;
        ps.conic_b = -cov(0, 1) / det;
        ps.conic_c = cov(0, 0) / det;
        ps.opacity = cloud.opacities[i];
        ps.mean_cam = p;
        const Vec3& sc = cloud.scales[i];
        int axis = 0;
        if (sc[1] < sc[axis]) axis = 1;
        if (sc[2] < sc[axis]) axis = 2;
        ps.normal_cam = view_rot * (cloud.orientations[i] * Vec3::Unit(axis));
        ps.xmin = std::max(0, static_cast<int>(std::ceil(mean.x() - radius)));
        ps.xmax = std::min(cam.width - 1, static_cast<int>(std::floor(mean.x() + radius)));
        ps.ymin = std::max(0, static_cast<int>(std::ceil(mean.y() - radius)));
        ps.ymax = std::min(cam.height - 1, static_cast<int>(std::floor(mean.y() + radius)));
        if (ps.xmin > ps.xmax || ps.ymin > ps.ymax) continue;
        prep.splats.push_back(ps);
    }
    std::sort(prep.splats.begin(), prep.splats.end(),
              [&](const ProjectedSplat& a, const ProjectedSplat& b) { return splat_before(a, b, cloud); });

    const int ts = s.tile_size;
    prep.tiles_x = (cam.width + ts - 1) / ts;
    prep.tiles_y = (cam.height + ts - 1) / ts;
    prep.tile_lists.assign(static_cast<std::size_t>(prep.tiles_x) * prep.tiles_y, {});
    for (std::uint32_t k = 0; k < prep.splats.size(); ++k) {
        const auto& ps = prep.splats[k];
        for (int ty = ps.ymin / ts; ty <= ps.ymax / ts; ++ty)
            for (int tx = ps.xmin / ts; tx <= ps.xmax / ts; ++tx)
                prep.tile_lists[static_cast<std::size_t>(ty) * prep.tiles_x + tx].push_back(k);
    }
    return prep;
}

// Visits every contributing splat of every pixel front-to-back. `on_pixel`
// receives (x, y) and returns a per-pixel accumulator with
// `add(const ProjectedSplat&, double weight)` and `finish(double transmittance)`.
template <typename MakeAccumulator>
void rasterize(const Prepared& prep, const Camera& cam, const RenderSettings& s, MakeAccumulator&& make) {
    const int ts = s.tile_size;
    const double trunc2 = s.truncation_sigma * s.truncation_sigma;
    const int n_tiles = prep.tiles_x * prep.tiles_y;
#pragma omp parallel for schedule(dynamic, 4)
    for (int tile = 0; tile < n_tiles; ++tile) {
        const auto& list = prep.tile_lists[tile];
        const int tx = tile % prep.tiles_x;
        const int ty = tile / prep.tiles_x;
        const int x0 = tx * ts, y0 = ty * ts;
        const int x1 = std::min(cam.width, x0 + ts), y1 = std::min(cam.height, y0 + ts);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                auto acc = make(x, y);
                double transmittance = 1.0;
                for (std::uint32_t k : list) {
                    const ProjectedSplat& ps = prep.splats[k];
                    if (x < ps.xmin || x > ps.xmax || y < ps.ymin || y > ps.ymax) continue;
                    const double dx = x - ps.mean.x();
                    const double dy = y - ps.mean.y();
                    const double maha = ps.conic_a * dx * dx + 2.0 * ps.conic_b * dx * dy + ps.conic_c * dy * dy;
                    if (maha > trunc2) continue;
                    const double alpha = ps.opacity * std::exp(-0.5 * maha);
                    if (!(alpha > 0.0)) continue;
                    acc.add(ps, alpha * transmittance);
                    transmittance *= 1.0 - alpha;
                    if (transmittance < s.min_transmittance) break;
                }
                acc.finish(transmittance);
            }
        }
    }
}

struct FullTarget {
    const SplatCloud& cloud;
    const Camera& cam;
    const RenderSettings& s;
    RenderOutput& out;
};

struct FullAccumulator {
    FullTarget* t;
    int x, y;
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
    double depth_sum = 0.0;
    double depth_weight = 0.0;
    Vec3 ray = Vec3::Zero();

    void add(const ProjectedSplat& ps, double w) {
        color += t->cloud.colors[ps.index] * w;
        alpha += w;
        if (t->s.depth_estimator == DepthEstimator::centroid) {
            depth_sum += w * ps.mean_cam.z();
            depth_weight += w;
            return;
        }
        const double denom = ray.dot(ps.normal_cam);
        if (std::abs(denom) < t->s.grazing_epsilon) return;
        depth_sum += w * ps.mean_cam.dot(ps.normal_cam) / denom;
        depth_weight += w;
    }

    void finish(double transmittance) {
        auto& out = t->out;
        out.color.at(x, y) = color + transmittance * t->s.background;
        out.alpha.at(x, y) = std::min(1.0, alpha);
        if (alpha > t->s.alpha_threshold && depth_weight > 0.0) {
            const double d = depth_sum / depth_weight;
            if (std::isfinite(d) && d > 0.0) {
                out.depth.values.at(x, y) = d;
                out.depth.validity.at(x, y) = 1;
            }
        }
    }
};

}  // namespace

std::optional<Mat2> project_covariance(const SplatCloud& cloud, std::size_t index, const Camera& camera) {
    const Vec3 p = camera.to_camera(cloud.centroids.at(index));
    if (!(p.z() > 0.0)) return std::nullopt;
    return screen_covariance(cloud.covariance(index), p, camera.world_to_camera.rotation_matrix(), camera);
}

RenderOutput render(const SplatCloud& cloud, const Camera& camera, const RenderSettings& settings) {
    camera.validate();
    RenderOutput out;
    out.color = RgbImage(camera.width, camera.height, settings.background);
    out.alpha = GrayImage(camera.width, camera.height, 0.0);
    out.depth = DepthMap(camera.width, camera.height);
    const Prepared prep = prepare(cloud, camera, settings);
    FullTarget target{cloud, camera, settings, out};
    rasterize(prep, camera, settings, [&](int x, int y) {
        FullAccumulator acc{&target, x, y};
        acc.ray = Vec3((x - camera.cx) / camera.fx, (y - camera.cy) / camera.fy, 1.0);
        return acc;
    });
    return out;
}

GrayImage render_silhouette(const SplatCloud& cloud, const Camera& camera, const RenderSettings& settings) {
    camera.validate();
    GrayImage alpha(camera.width, camera.height, 0.0);
    const Prepared prep = prepare(cloud, camera, settings);
    struct Acc {
        GrayImage* img;
        int x, y;
        double a = 0.0;
        void add(const ProjectedSplat&, double w) { a += w; }
        void finish(double) { img->at(x, y) = std::min(1.0, a); }
    };
    rasterize(prep, camera, settings, [&](int x, int y) { return Acc{&alpha, x, y}; });
    return alpha;
}

DepthMap render_depth_unbiased(const SplatCloud& cloud, const Camera& camera, RenderSettings settings) {
    settings.depth_estimator = DepthEstimator::unbiased;
    return render(cloud, camera, settings).depth;
}

DepthMap render_depth_centroid(const SplatCloud& cloud, const Camera& camera, RenderSettings settings) {
    settings.depth_estimator = DepthEstimator::centroid;
    return render(cloud, camera, settings).depth;
}

ContributionMap render_contributions(const SplatCloud& cloud, const Camera& camera, const RenderSettings& settings) {
    camera.validate();
    const std::size_t n_pix = static_cast<std::size_t>(camera.width) * camera.height;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> per_pixel(n_pix);
    std::vector<double> trans(n_pix, 1.0);
    const Prepared prep = prepare(cloud, camera, settings);
    struct Acc {
        std::vector<std::pair<std::uint32_t, double>>* list;
        double* t;
        void add(const ProjectedSplat& ps, double w) { list->emplace_back(ps.index, w); }
        void finish(double transmittance) { *t = transmittance; }
    };
    rasterize(prep, camera, settings, [&](int x, int y) {
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        return Acc{&per_pixel[p], &trans[p]};
    });
    ContributionMap map;
    map.width = camera.width;
    map.height = camera.height;
    map.offsets.resize(n_pix + 1, 0);
    for (std::size_t p = 0; p < n_pix; ++p)
        map.offsets[p + 1] = map.offsets[p] + static_cast<std::uint32_t>(per_pixel[p].size());
    map.splat.reserve(map.offsets.back());
    map.weight.reserve(map.offsets.back());
    for (const auto& list : per_pixel)
        for (const auto& [idx, w] : list) {
            map.splat.push_back(idx);
            map.weight.push_back(w);
        }
    map.transmittance = std::move(trans);
    return map;
}

RgbImage compose_colors(const ContributionMap& map, const std::vector<Vec3>& colors, const Vec3& background) {
    RgbImage img(map.width, map.height, Vec3::Zero());
    for (std::size_t p = 0; p < img.size(); ++p) {
        Vec3 c = Vec3::Zero();
        for (std::uint32_t e = map.offsets[p]; e < map.offsets[p + 1]; ++e) c += colors[map.splat[e]] * map.weight[e];
        img.data[p] = c + map.transmittance[p] * background;
    }
    return img;
}

}  // namespace splatsim
