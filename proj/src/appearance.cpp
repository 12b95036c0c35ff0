#include "splatsim/appearance.hpp"

#include <algorithm>
#include <cmath>

namespace splatsim {

void DistillConfig::validate() const {
    if (patch_size < 2) throw ConfigError("distillation patch size must be at least 2");
    if (weight_pixel < 0.0 || weight_patch_stats < 0.0) throw ConfigError("distillation weights must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("distillation learning rate must be positive");
    if (iters < 0) throw ConfigError("distillation iterations must be non-negative");
    if (views.empty()) throw ConfigError("distillation needs at least one view");
    for (const auto& v : views) {
        v.camera.validate();
        if (!v.image.same_shape(v.camera.width, v.camera.height) || !v.mask.same_shape(v.image))
            throw ConfigError("distillation image/mask dimensions do not match the camera");
    }
}

Mask overlap_region(const Mask& gt_mask, const GrayImage& rendered_alpha, double threshold) {
    if (!gt_mask.same_shape(rendered_alpha)) throw ConfigError("overlap: mask and alpha dimensions differ");
    Mask out(gt_mask.width, gt_mask.height, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = gt_mask.data[i] && rendered_alpha.data[i] > threshold;
    return out;
}

namespace {

struct Patch {
    std::vector<std::uint32_t> pixels;
};

struct ViewData {
    ContributionMap contrib;
    std::vector<std::uint32_t> overlap;  // pixel indices
    std::vector<std::int32_t> slot;  // pixel index -> position in overlap, or -1
    std::vector<Patch> patches;
    const RgbImage* target;
};

class DistillProblem {
public:
    DistillProblem(std::vector<ViewData> views, const DistillConfig& config, std::size_t n_splats)
        : views_(std::move(views)), config_(config), n_(n_splats) {}

    // Rendered color at every overlap pixel of view v.
    std::vector<Vec3> rendered(const ViewData& v, const std::vector<Vec3>& colors) const {
        std::vector<Vec3> out;
        out.reserve(v.overlap.size());
        for (std::uint32_t p : v.overlap) {
            Vec3 c = Vec3::Zero();
            for (std::uint32_t e = v.contrib.offsets[p]; e < v.contrib.offsets[p + 1]; ++e)
                c += colors[v.contrib.splat[e]] * v.contrib.weight[e];
            out.push_back(c + v.contrib.transmittance[p] * config_.render.background);
        }
        return out;
    }

    double loss(const std::vector<Vec3>& colors, std::vector<Vec3>* grad) const {
        if (grad) grad->assign(n_, Vec3::Zero());
        double total = 0.0;
        for (const auto& v : views_) {
            if (v.overlap.empty()) continue;
            const auto r = rendered(v, colors);
            const auto& slot = v.slot;

            std::vector<Vec3> dl_dr(v.overlap.size(), Vec3::Zero());
            const double inv_n = 1.0 / static_cast<double>(v.overlap.size());
            for (std::size_t k = 0; k < v.overlap.size(); ++k) {
                const Vec3 diff = r[k] - v.target->data[v.overlap[k]];
                total += config_.weight_pixel * inv_n * diff.squaredNorm();
                dl_dr[k] += 2.0 * config_.weight_pixel * inv_n * diff;
            }
            if (!v.patches.empty() && config_.weight_patch_stats > 0.0) {
                const double inv_p = 1.0 / static_cast<double>(v.patches.size());
                for (const auto& patch : v.patches) {
                    const double inv_m = 1.0 / static_cast<double>(patch.pixels.size());
                    Vec3 mr = Vec3::Zero(), mg = Vec3::Zero(), sr = Vec3::Zero(), sg = Vec3::Zero();
                    for (std::uint32_t p : patch.pixels) {
                        const Vec3& rv = r[slot[p]];
                        const Vec3& gv = v.target->data[p];
                        mr += rv;
                        mg += gv;
                        sr += rv.cwiseProduct(rv);
                        sg += gv.cwiseProduct(gv);
                    }
                    mr *= inv_m;
                    mg *= inv_m;
                    const Vec3 var_r = sr * inv_m - mr.cwiseProduct(mr);
                    const Vec3 var_g = sg * inv_m - mg.cwiseProduct(mg);
                    const Vec3 dm = mr - mg, dv = var_r - var_g;
                    total += config_.weight_patch_stats * inv_p * (dm.squaredNorm() + dv.squaredNorm());
                    for (std::uint32_t p : patch.pixels) {
                        const Vec3& rv = r[slot[p]];
                        dl_dr[slot[p]] += config_.weight_patch_stats * inv_p *
                                          (2.0 * dm * inv_m + 2.0 * dv.cwiseProduct(2.0 * inv_m * (rv - mr)));
                    }
                }
            }
            if (grad)
                for (std::size_t k = 0; k < v.overlap.size(); ++k) {
                    const std::uint32_t p = v.overlap[k];
                    for (std::uint32_t e = v.contrib.offsets[p]; e < v.contrib.offsets[p + 1]; ++e)
                        (*grad)[v.contrib.splat[e]] += dl_dr[k] * v.contrib.weight[e];
                }
        }
        return total;
    }

    // Diagonal of the Gauss-Newton matrix of the pixel and patch-mean terms.
    std::vector<double> preconditioner() const {
        std::vector<double> h(n_, 0.0);
        for (const auto& v : views_) {
            if (v.overlap.empty()) continue;
            const double inv_n = 1.0 / static_cast<double>(v.overlap.size());
            for (std::uint32_t p : v.overlap)
                for (std::uint32_t e = v.contrib.offsets[p]; e < v.contrib.offsets[p + 1]; ++e)
                    h[v.contrib.splat[e]] += 2.0 * config_.weight_pixel * inv_n * v.contrib.weight[e] * v.contrib.weight[e];
            if (v.patches.empty() || config_.weight_patch_stats <= 0.0) continue;
            const double inv_p = 1.0 / static_cast<double>(v.patches.size());
            std::vector<double> acc(n_, 0.0);
            std::vector<std::uint32_t> touched;
            for (const auto& patch : v.patches) {
                const double inv_m = 1.0 / static_cast<double>(patch.pixels.size());
                for (std::uint32_t p : patch.pixels)
                    for (std::uint32_t e = v.contrib.offsets[p]; e < v.contrib.offsets[p + 1]; ++e) {
                        const auto s = v.contrib.splat[e];
                        if (acc[s] == 0.0) touched.push_back(s);
                        acc[s] += v.contrib.weight[e] * inv_m;
                    }
                for (auto s : touched) {
                    h[s] += 2.0 * config_.weight_patch_stats * inv_p * acc[s] * acc[s];
                    acc[s] = 0.0;
                }
                touched.clear();
            }
        }
        return h;
    }

    bool any_overlap() const {
        for (const auto& v : views_)
            if (!v.overlap.empty()) return true;
        return false;
    }

private:
    std::vector<ViewData> views_;
    const DistillConfig& config_;
    std::size_t n_;
};

}  // namespace

DistillResult distill_colors(const SplatCloud& object, const RigidPose& pose, const DistillConfig& config) {
    config.validate();
    DistillResult result;
    result.cloud = object;
    const SplatCloud posed = transform_cloud(object, pose);

    std::vector<ViewData> views;
    for (const auto& view : config.views) {
        ViewData vd;
        vd.contrib = render_contributions(posed, view.camera, config.render);
        GrayImage alpha(view.camera.width, view.camera.height, 0.0);
        for (std::size_t p = 0; p < alpha.size(); ++p)
            for (std::uint32_t e = vd.contrib.offsets[p]; e < vd.contrib.offsets[p + 1]; ++e)
                alpha.data[p] += vd.contrib.weight[e];
        const Mask overlap = overlap_region(view.mask, alpha);
        for (std::size_t p = 0; p < overlap.size(); ++p)
            if (overlap.data[p]) vd.overlap.push_back(static_cast<std::uint32_t>(p));
        vd.slot.assign(overlap.size(), -1);
        for (std::size_t k = 0; k < vd.overlap.size(); ++k) vd.slot[vd.overlap[k]] = static_cast<std::int32_t>(k);
        const int ps = config.patch_size;
        for (int ty = 0; ty + ps <= overlap.height; ty += ps)
            for (int tx = 0; tx + ps <= overlap.width; tx += ps) {
                if (!overlap.at(tx + ps / 2, ty + ps / 2)) continue;
                Patch patch;
                for (int y = ty; y < ty + ps; ++y)
                    for (int x = tx; x < tx + ps; ++x)
                        if (overlap.at(x, y)) patch.pixels.push_back(static_cast<std::uint32_t>(y * overlap.width + x));
                vd.patches.push_back(std::move(patch));
            }
        vd.target = &view.image;
        views.push_back(std::move(vd));
    }
    const DistillProblem problem(std::move(views), config, object.size());
    if (!problem.any_overlap()) {
        result.empty_overlap = true;
        return result;
    }

    const std::vector<double> h = problem.preconditioner();
    for (double v : h) result.supported_splats += v > 0.0;

    std::vector<Vec3> colors = object.colors;
    std::vector<Vec3> grad;
    double cur = problem.loss(colors, &grad);
    result.loss_trace.push_back(cur);
    double lr = config.learning_rate;
    for (int it = 0; it < config.iters && cur > 0.0; ++it) {
        std::vector<Vec3> cand = colors;
        bool changed = false;
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (h[i] <= 0.0 || grad[i].isZero(0.0)) continue;
            cand[i] = (colors[i] - lr * grad[i] / h[i]).cwiseMax(0.0).cwiseMin(1.0);
            changed = changed || cand[i] != colors[i];
        }
        if (!changed) break;
        std::vector<Vec3> cand_grad;
        const double next = problem.loss(cand, &cand_grad);
        if (next < cur) {
            colors = std::move(cand);
            grad = std::move(cand_grad);
            cur = next;
            result.loss_trace.push_back(cur);
        } else {
            lr *= 0.5;
            if (lr < 1e-12) break;
        }
    }
    result.cloud.colors = std::move(colors);
    return result;
}

}  // namespace splatsim
