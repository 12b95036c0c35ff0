#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "splatsim/core.hpp"

namespace splatsim::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Binary little-endian PLY in the common splat layout: x,y,z, f_dc_0..2,
/// opacity (logit), scale_0..2 (log), rot_0..3 (w,x,y,z). Unknown
/// properties are skipped on read.
SplatCloud read_splat_ply(const fs::path& path);
void write_splat_ply(const fs::path& path, const SplatCloud& cloud);

/// Plain x,y,z vertex PLY (binary little-endian float32).
void write_point_ply(const fs::path& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_point_ply(const fs::path& path);

/// Degree-0 spherical-harmonic coefficient <-> RGB.
double sh_dc_to_color(double f_dc);
double color_to_sh_dc(double color);

Mask read_pgm_mask(const fs::path& path);
GrayImage read_pgm(const fs::path& path);
void write_pgm(const fs::path& path, const GrayImage& image);
void write_pgm(const fs::path& path, const Mask& mask);
RgbImage read_ppm(const fs::path& path);
void write_ppm(const fs::path& path, const RgbImage& image);

/// Raw depth: uint32 width, uint32 height (little-endian), then
/// width*height float32 row-major. Non-positive or non-finite = invalid.
DepthMap read_depth(const fs::path& path);
void write_depth(const fs::path& path, const DepthMap& depth);

json to_json(const RigidPose& pose);
RigidPose pose_from_json(const json& j);
json to_json(const Camera& camera);
Camera camera_from_json(const json& j);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

/// Resolves `p` against `base` unless it is already absolute.
fs::path resolve(const fs::path& base, const std::string& p);

/// 64-bit FNV-1a digest of a file's bytes, as 16 hex characters.
std::string file_digest(const fs::path& path);
std::string bytes_digest(const std::string& bytes);

}  // namespace splatsim::io
