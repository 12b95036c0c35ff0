#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "splatsim/core.hpp"

namespace splatsim {

/// Color as a function of object-frame position.
using ColorField = std::function<Vec3(const Vec3&)>;

/// Flat splats tiling the six faces of an axis-aligned box centred at the
/// origin. The shortest scale axis is the face normal.
SplatCloud make_box_cloud(const Vec3& half_extents, const ColorField& color, double spacing, double opacity = 0.95);

/// Flat splats tiling the square |x - cx| <= half, |z - cz| <= half on y = height.
SplatCloud make_ground_cloud(const Vec3& center, double half, const ColorField& color, double spacing,
                             double opacity = 0.95);

/// Pinhole camera at `eye` looking at `target`, image y pointing down.
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width, int height);

struct SyntheticBundleOptions {
    int width = 256;
    int height = 256;
    double focal = 300.0;
    std::uint64_t seed = 7;
    int frames = 24;
    int substeps_per_frame = 300;
};

/// Two textured boxes resting on a ground plane, seen from two views. Object
/// clouds are stored recoloured and in a slightly rotated frame, so the
/// pipeline has poses to recover and colors to distill. Writes bundle.json
/// and its referenced files into `dir`.
void write_two_boxes_bundle(const std::filesystem::path& dir, const SyntheticBundleOptions& options = {});

}  // namespace splatsim
