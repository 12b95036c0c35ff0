#include "splatsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace splatsim {

namespace {

void require_same_shape(const GrayImage& a, const GrayImage& b) {
    if (!a.same_shape(b))
        throw ConfigError("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
}

std::vector<double> gaussian_window(const SsimParams& p) {
    const int r = p.window_size / 2;
    std::vector<double> g(p.window_size);
    double sum = 0.0;
    for (int k = 0; k < p.window_size; ++k) {
        const double d = k - r;
        g[k] = std::exp(-d * d / (2.0 * p.gaussian_sigma * p.gaussian_sigma));
        sum += g[k];
    }
    for (auto& v : g) v /= sum;
    return g;
}

struct WindowMaps {
    // Window origins covered: [ox0, ox1] x [oy0, oy1] (inclusive, may be empty).
    int ox0 = 0, ox1 = -1, oy0 = 0, oy1 = -1;
    int out_w = 0, out_h = 0;
    std::vector<double> ssim, cs;  // (ox1-ox0+1) x (oy1-oy0+1)
};

// Computes SSIM and contrast-structure for windows that touch a nonzero
// pixel of either image. All other windows see two all-zero patches and
// evaluate to exactly 1.
WindowMaps window_maps(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
    const int ws = p.window_size;
    WindowMaps m;
    m.out_w = a.width - ws + 1;
    m.out_h = a.height - ws + 1;
    int bx0 = a.width, bx1 = -1, by0 = a.height, by1 = -1;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x)
            if (a.at(x, y) != 0.0 || b.at(x, y) != 0.0) {
                bx0 = std::min(bx0, x);
                bx1 = std::max(bx1, x);
                by0 = std::min(by0, y);
                by1 = std::max(by1, y);
            }
    if (bx1 < 0) return m;
    m.ox0 = std::max(0, bx0 - ws + 1);
    m.ox1 = std::min(m.out_w - 1, bx1);
    m.oy0 = std::max(0, by0 - ws + 1);
    m.oy1 = std::min(m.out_h - 1, by1);
    if (m.ox0 > m.ox1 || m.oy0 > m.oy1) return m;

    const auto g = gaussian_window(p);
    const int rw = m.ox1 - m.ox0 + 1;
    const int rh = m.oy1 - m.oy0 + 1;
    const int rows = rh + ws - 1;
    // Horizontal pass of the five moment images.
    std::vector<double> h(static_cast<std::size_t>(5) * rows * rw, 0.0);
    auto H = [&](int c, int row, int col) -> double& { return h[(static_cast<std::size_t>(c) * rows + row) * rw + col]; };
    for (int row = 0; row < rows; ++row) {
        const int y = m.oy0 + row;
        for (int col = 0; col < rw; ++col) {
            const int x0 = m.ox0 + col;
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
            for (int k = 0; k < ws; ++k) {
                const double va = a.at(x0 + k, y);
                const double vb = b.at(x0 + k, y);
                const double w = g[k];
                s0 += w * va;
                s1 += w * vb;
                s2 += w * va * va;
                s3 += w * vb * vb;
                s4 += w * va * vb;
            }
            H(0, row, col) = s0;
            H(1, row, col) = s1;
            H(2, row, col) = s2;
            H(3, row, col) = s3;
            H(4, row, col) = s4;
        }
    }
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    m.ssim.assign(static_cast<std::size_t>(rw) * rh, 1.0);
    m.cs.assign(static_cast<std::size_t>(rw) * rh, 1.0);
    for (int oy = 0; oy < rh; ++oy) {
        for (int col = 0; col < rw; ++col) {
            double s[5] = {0, 0, 0, 0, 0};
            for (int k = 0; k < ws; ++k)
                for (int c = 0; c < 5; ++c) s[c] += g[k] * H(c, oy + k, col);
            const double mu_a = s[0], mu_b = s[1];
            const double var_a = s[2] - mu_a * mu_a;
            const double var_b = s[3] - mu_b * mu_b;
            const double cov = s[4] - mu_a * mu_b;
            const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            const double lum = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
            m.cs[static_cast<std::size_t>(oy) * rw + col] = cs;
            m.ssim[static_cast<std::size_t>(oy) * rw + col] = lum * cs;
        }
    }
    return m;
}

struct WindowMeans {
    double ssim;
    double cs;
};

WindowMeans window_means(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
    const WindowMaps m = window_maps(a, b, p);
    const double total = static_cast<double>(m.out_w) * m.out_h;
    const double computed = static_cast<double>(m.ssim.size());
    double s_sum = 0.0, c_sum = 0.0;
    for (std::size_t i = 0; i < m.ssim.size(); ++i) {
        s_sum += m.ssim[i];
        c_sum += m.cs[i];
    }
    const double rest = total - computed;
    return {(s_sum + rest) / total, (c_sum + rest) / total};
}

void check_ssim_inputs(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
    p.validate();
    require_same_shape(a, b);
    if (a.width < p.window_size || a.height < p.window_size)
        throw ConfigError("image smaller than the SSIM window");
}

}  // namespace

void SsimParams::validate() const {
    if (window_size < 3 || window_size % 2 == 0) throw ConfigError("SSIM window size must be odd and >= 3");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw ConfigError("SSIM constants must be positive");
    if (!(gaussian_sigma > 0.0) || !(dynamic_range > 0.0)) throw ConfigError("SSIM sigma and range must be positive");
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params) {
    check_ssim_inputs(a, b, params);
    return window_means(a, b, params).ssim;
}

GrayImage ssim_map(const GrayImage& a, const GrayImage& b, const SsimParams& params) {
    check_ssim_inputs(a, b, params);
    const WindowMaps m = window_maps(a, b, params);
    GrayImage out(m.out_w, m.out_h, 1.0);
    const int rw = m.ox1 - m.ox0 + 1;
    for (int oy = m.oy0; oy <= m.oy1; ++oy)
        for (int ox = m.ox0; ox <= m.ox1; ++ox)
            out.at(ox, oy) = m.ssim[static_cast<std::size_t>(oy - m.oy0) * rw + (ox - m.ox0)];
    return out;
}

MsSsimResult ms_ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params) {
    check_ssim_inputs(a, b, params);
    const int min_dim = std::min(a.width, a.height);
    if (min_dim < params.window_size * 16) return {window_means(a, b, params).ssim, true};
    GrayImage x = a, y = b;
    double value = 1.0;
    for (int level = 0; level < 5; ++level) {
        const WindowMeans wm = window_means(x, y, params);
        // Negative contrast-structure terms are clamped so fractional
        // exponents stay real.
        const double term = level < 4 ? wm.cs : wm.ssim;
        value *= std::pow(std::max(term, 0.0), kMsSsimWeights[level]);
        if (level < 4) {
            x = downsample2(x);
            y = downsample2(y);
        }
    }
    return {value, false};
}

GrayImage downsample2(const GrayImage& img) {
    GrayImage out(img.width / 2, img.height / 2, 0.0);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
            out.at(x, y) = 0.25 * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                                   img.at(2 * x + 1, 2 * y + 1));
    return out;
}

GrayImage to_gray(const RgbImage& img) {
    GrayImage out(img.width, img.height, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i)
        out.data[i] = 0.299 * img.data[i].x() + 0.587 * img.data[i].y() + 0.114 * img.data[i].z();
    return out;
}

GrayImage mask_to_gray(const Mask& mask) {
    GrayImage out(mask.width, mask.height, 0.0);
    for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] = mask.data[i] ? 1.0 : 0.0;
    return out;
}

EdgeErrorStats edge_error_stats(const GrayImage& rendered, const GrayImage& truth, const Mask& mask) {
    require_same_shape(rendered, truth);
    if (!mask.same_shape(rendered)) throw ConfigError("mask dimensions differ from the images");
    const int w = rendered.width, h = rendered.height;
    auto px = [&](const GrayImage& img, int x, int y) {
        return img.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
    };
    auto sobel = [&](const GrayImage& img, int x, int y) {
        const double gx = (px(img, x + 1, y - 1) + 2.0 * px(img, x + 1, y) + px(img, x + 1, y + 1)) -
                          (px(img, x - 1, y - 1) + 2.0 * px(img, x - 1, y) + px(img, x - 1, y + 1));
        const double gy = (px(img, x - 1, y + 1) + 2.0 * px(img, x, y + 1) + px(img, x + 1, y + 1)) -
                          (px(img, x - 1, y - 1) + 2.0 * px(img, x, y - 1) + px(img, x + 1, y - 1));
        return Vec2(gx, gy);
    };
    EdgeErrorStats stats;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(x, y)) continue;
            const Vec2 gr = sobel(rendered, x, y);
            const Vec2 gt = sobel(truth, x, y);
            stats.sum += std::abs(gr.x() - gt.x()) + std::abs(gr.y() - gt.y());
            ++stats.count;
        }
    return stats;
}

double edge_error(const GrayImage& rendered, const GrayImage& truth, const Mask& mask) {
    const auto stats = edge_error_stats(rendered, truth, mask);
    if (stats.count == 0) throw ConfigError("edge error is undefined for an empty mask");
    return stats.mean();
}

double masked_psnr(const RgbImage& rendered, const RgbImage& truth, const Mask& mask, double dynamic_range) {
    if (!rendered.same_shape(truth) || !mask.same_shape(truth)) throw ConfigError("masked PSNR: dimensions differ");
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask.data[i]) continue;
        se += (rendered.data[i] - truth.data[i]).squaredNorm();
        n += 3;
    }
    if (n == 0) throw ConfigError("masked PSNR is undefined for an empty mask");
    const double mse = se / static_cast<double>(n);
    if (mse == 0.0) return kPsnrInfinity;
    return 10.0 * std::log10(dynamic_range * dynamic_range / mse);
}

MaskedScores masked_psnr_ssim(const RgbImage& rendered, const RgbImage& truth, const Mask& mask,
                              const SsimParams& params) {
    params.validate();
    MaskedScores out;
    out.psnr = masked_psnr(rendered, truth, mask, params.dynamic_range);

    const int ws = params.window_size, r = ws / 2;
    const int w = mask.width, h = mask.height;
    if (w < ws || h < ws) throw ConfigError("image smaller than the SSIM window");
    int x0 = w, x1 = -1, y0 = h, y1 = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(x, y)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    // Pad the bounding box so masked pixels can be window centres, then
    // grow it to at least one window.
    auto grow = [&](int& lo, int& hi, int limit) {
        lo = std::max(0, lo - r);
        hi = std::min(limit - 1, hi + r);
        while (hi - lo + 1 < ws) {
            if (lo > 0) --lo;
            if (hi - lo + 1 < ws && hi < limit - 1) ++hi;
        }
    };
    grow(x0, x1, w);
    grow(y0, y1, h);
    const int cw = x1 - x0 + 1, ch = y1 - y0 + 1;
    GrayImage ga(cw, ch), gb(cw, ch);
    const GrayImage fa = to_gray(rendered), fb = to_gray(truth);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) {
            ga.at(x, y) = fa.at(x0 + x, y0 + y);
            gb.at(x, y) = fb.at(x0 + x, y0 + y);
        }
    const GrayImage map = ssim_map(ga, gb, params);
    double sum = 0.0, all = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            all += map.at(x, y);
            if (mask.at(x0 + x + r, y0 + y + r)) {
                sum += map.at(x, y);
                ++n;
            }
        }
    out.ssim = n > 0 ? sum / static_cast<double>(n) : all / static_cast<double>(map.size());
    return out;
}

}  // namespace splatsim
