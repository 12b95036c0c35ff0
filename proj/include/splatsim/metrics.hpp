#pragma once

#include <cstddef>
#include <limits>

#include "splatsim/core.hpp"

namespace splatsim {

struct SsimParams {
    int window_size = 11;
    double gaussian_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const;
};

/// Mean SSIM over every full window position (no padding).
double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params = {});

/// SSIM value per window; entry (x, y) is the window centred at
/// (x + window_size/2, y + window_size/2).
GrayImage ssim_map(const GrayImage& a, const GrayImage& b, const SsimParams& params = {});

/// Five-scale weights of the standard MS-SSIM.
inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MsSsimResult {
    double value = 0.0;
    /// True when the image was too small for five scales and plain SSIM was used.
    bool fell_back = false;
};

MsSsimResult ms_ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params = {});

/// 2x2 mean pooling; odd trailing rows/columns are dropped.
GrayImage downsample2(const GrayImage& img);

/// Luma 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const RgbImage& img);
GrayImage mask_to_gray(const Mask& mask);

/// Sum and count of per-pixel Sobel differences, for pooling across frames.
struct EdgeErrorStats {
    double sum = 0.0;
    std::size_t count = 0;
    double mean() const { return sum / static_cast<double>(count); }
};

EdgeErrorStats edge_error_stats(const GrayImage& rendered, const GrayImage& truth, const Mask& mask);

/// Mean over masked pixels of |Gx(r)-Gx(t)| + |Gy(r)-Gy(t)| with 3x3 Sobel
/// kernels and replicated borders. Throws on an empty mask.
double edge_error(const GrayImage& rendered, const GrayImage& truth, const Mask& mask);

inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

struct MaskedScores {
    /// kPsnrInfinity when the masked MSE is zero.
    double psnr = 0.0;
    double ssim = 0.0;
};

MaskedScores masked_psnr_ssim(const RgbImage& rendered, const RgbImage& truth, const Mask& mask,
                              const SsimParams& params = {});

double masked_psnr(const RgbImage& rendered, const RgbImage& truth, const Mask& mask, double dynamic_range = 1.0);

}  // namespace splatsim
