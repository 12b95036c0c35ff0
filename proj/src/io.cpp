#include "splatsim/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace splatsim::io {

static_assert(std::endian::native == std::endian::little, "PLY/depth I/O assumes a little-endian host");

namespace {

constexpr double kShC0 = 0.28209479177387814;

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

struct PlyProperty {
    std::string name;
    std::string type;
    int size = 0;
    int offset = 0;
};

int ply_type_size(const std::string& t) {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw ConfigError("unsupported PLY property type '" + t + "'");
}

double read_scalar(const char* p, const std::string& t) {
    auto load = [p]<typename T>(T) {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return static_cast<double>(v);
    };
    if (t == "float" || t == "float32") return load(float{});
    if (t == "double" || t == "float64") return load(double{});
    if (t == "uchar" || t == "uint8") return load(std::uint8_t{});
    if (t == "char" || t == "int8") return load(std::int8_t{});
    if (t == "short" || t == "int16") return load(std::int16_t{});
    if (t == "ushort" || t == "uint16") return load(std::uint16_t{});
    if (t == "int" || t == "int32") return load(std::int32_t{});
    return load(std::uint32_t{});
}

struct PlyVertexTable {
    std::size_t count = 0;
    int stride = 0;
    std::map<std::string, PlyProperty> props;
    std::vector<char> bytes;

    bool has(const std::string& name) const { return props.count(name) != 0; }
    double get(std::size_t row, const std::string& name) const {
        const auto& prop = props.at(name);
        return read_scalar(bytes.data() + row * stride + prop.offset, prop.type);
    }
};

PlyVertexTable read_ply_vertices(const fs::path& path) {
    auto in = open_in(path);
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw ConfigError(path.string() + ": not a PLY file");
    PlyVertexTable table;
    bool in_vertex = false;
    bool seen_vertex = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian")
                throw ConfigError(path.string() + ": only binary_little_endian PLY is supported");
        } else if (key == "element") {
            std::string name;
            std::size_t n = 0;
            ls >> name >> n;
            if (seen_vertex && name != "vertex") {
                in_vertex = false;
                continue;
            }
            in_vertex = name == "vertex";
            if (!in_vertex) throw ConfigError(path.string() + ": vertex element must come first");
            seen_vertex = true;
            table.count = n;
        } else if (key == "property") {
            if (!in_vertex) continue;
            std::string type, name;
            ls >> type;
            if (type == "list") throw ConfigError(path.string() + ": list properties on vertices are unsupported");
            ls >> name;
            PlyProperty prop{name, type, ply_type_size(type), table.stride};
            table.stride += prop.size;
            table.props[name] = prop;
        } else if (key == "end_header") {
            break;
        }
    }
    if (!seen_vertex) throw ConfigError(path.string() + ": no vertex element");
    table.bytes.resize(table.count * static_cast<std::size_t>(table.stride));
    in.read(table.bytes.data(), static_cast<std::streamsize>(table.bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != table.bytes.size())
        throw ConfigError(path.string() + ": truncated vertex data");
    return table;
}

void put_float(std::string& buf, double v) {
    const float f = static_cast<float>(v);
    char b[4];
    std::memcpy(b, &f, 4);
    buf.append(b, 4);
}

double logit(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    return std::log(p / (1.0 - p));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Netpbm header tokens, skipping '#' comments.
int read_pnm_int(std::istream& in) {
    int c = in.peek();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
        } else {
            in.get();
        }
        c = in.peek();
    }
    int v = 0;
    in >> v;
    if (!in) throw ConfigError("malformed netpbm header");
    return v;
}

struct PnmRaw {
    int width = 0;
    int height = 0;
    int channels = 0;
    int maxval = 255;
    std::vector<std::uint8_t> bytes;
};

PnmRaw read_pnm(const fs::path& path) {
    auto in = open_in(path);
    std::string magic(2, ' ');
    in.read(magic.data(), 2);
    PnmRaw raw;
    if (magic == "P5")
        raw.channels = 1;
    else if (magic == "P6")
        raw.channels = 3;
    else
        throw ConfigError(path.string() + ": expected binary PGM (P5) or PPM (P6)");
    raw.width = read_pnm_int(in);
    raw.height = read_pnm_int(in);
    raw.maxval = read_pnm_int(in);
    if (raw.maxval <= 0 || raw.maxval > 255) throw ConfigError(path.string() + ": only 8-bit netpbm is supported");
    in.get();
    raw.bytes.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
    in.read(reinterpret_cast<char*>(raw.bytes.data()), static_cast<std::streamsize>(raw.bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.bytes.size()) throw ConfigError(path.string() + ": truncated");
    return raw;
}

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

double sh_dc_to_color(double f_dc) { return 0.5 + kShC0 * f_dc; }
double color_to_sh_dc(double color) { return (color - 0.5) / kShC0; }

SplatCloud read_splat_ply(const fs::path& path) {
    const auto table = read_ply_vertices(path);
    for (const char* name : {"x", "y", "z"})
        if (!table.has(name)) throw ConfigError(path.string() + ": missing property " + name);
    SplatCloud cloud;
    cloud.reserve(table.count);
    const bool has_scale = table.has("scale_0") && table.has("scale_1") && table.has("scale_2");
    const bool has_rot = table.has("rot_0") && table.has("rot_1") && table.has("rot_2") && table.has("rot_3");
    const bool has_color = table.has("f_dc_0") && table.has("f_dc_1") && table.has("f_dc_2");
    const bool has_opacity = table.has("opacity");
    for (std::size_t i = 0; i < table.count; ++i) {
        Vec3 c(table.get(i, "x"), table.get(i, "y"), table.get(i, "z"));
        Vec3 s = has_scale ? Vec3(std::exp(table.get(i, "scale_0")), std::exp(table.get(i, "scale_1")),
                                  std::exp(table.get(i, "scale_2")))
                           : Vec3::Constant(0.01);
        Quat q = has_rot ? Quat(table.get(i, "rot_0"), table.get(i, "rot_1"), table.get(i, "rot_2"),
                                table.get(i, "rot_3"))
                         : Quat::Identity();
        if (q.norm() == 0.0) q = Quat::Identity();
        q.normalize();
        const double o = has_opacity ? sigmoid(table.get(i, "opacity")) : 1.0;
        Vec3 col = has_color ? Vec3(sh_dc_to_color(table.get(i, "f_dc_0")), sh_dc_to_color(table.get(i, "f_dc_1")),
                                    sh_dc_to_color(table.get(i, "f_dc_2")))
                             : Vec3::Constant(0.5);
        cloud.push_back(c, s, q, std::clamp(o, 0.0, 1.0), col.cwiseMax(0.0).cwiseMin(1.0));
    }
    cloud.validate();
    return cloud;
}

void write_splat_ply(const fs::path& path, const SplatCloud& cloud) {
    std::string buf;
    buf += "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) + "\n";
    for (const char* name : {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
                             "rot_0", "rot_1", "rot_2", "rot_3"})
        buf += std::string("property float ") + name + "\n";
    buf += "end_header\n";
    buf.reserve(buf.size() + cloud.size() * 14 * 4);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) put_float(buf, cloud.centroids[i][k]);
        for (int k = 0; k < 3; ++k) put_float(buf, color_to_sh_dc(cloud.colors[i][k]));
        put_float(buf, logit(cloud.opacities[i]));
        for (int k = 0; k < 3; ++k) put_float(buf, std::log(cloud.scales[i][k]));
        const Quat& q = cloud.orientations[i];
        put_float(buf, q.w());
        put_float(buf, q.x());
        put_float(buf, q.y());
        put_float(buf, q.z());
    }
    auto out = open_out(path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_point_ply(const fs::path& path, const std::vector<Vec3>& points) {
    std::string buf = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(points.size()) +
                      "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : points)
        for (int k = 0; k < 3; ++k) put_float(buf, p[k]);
    auto out = open_out(path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<Vec3> read_point_ply(const fs::path& path) {
    const auto table = read_ply_vertices(path);
    std::vector<Vec3> pts;
    pts.reserve(table.count);
    for (std::size_t i = 0; i < table.count; ++i)
        pts.emplace_back(table.get(i, "x"), table.get(i, "y"), table.get(i, "z"));
    return pts;
}

Mask read_pgm_mask(const fs::path& path) {
    const auto raw = read_pnm(path);
    if (raw.channels != 1) throw ConfigError(path.string() + ": mask must be a PGM");
    Mask m(raw.width, raw.height, 0);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = raw.bytes[i] != 0;
    return m;
}

GrayImage read_pgm(const fs::path& path) {
    const auto raw = read_pnm(path);
    if (raw.channels != 1) throw ConfigError(path.string() + ": expected a PGM");
    GrayImage g(raw.width, raw.height, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = raw.bytes[i] / static_cast<double>(raw.maxval);
    return g;
}

void write_pgm(const fs::path& path, const GrayImage& image) {
    auto out = open_out(path);
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    std::vector<std::uint8_t> bytes(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = quantize(image.data[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const fs::path& path, const Mask& mask) {
    auto out = open_out(path);
    out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<std::uint8_t> bytes(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RgbImage read_ppm(const fs::path& path) {
    const auto raw = read_pnm(path);
    RgbImage img(raw.width, raw.height, Vec3::Zero());
    const double scale = 1.0 / raw.maxval;
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (raw.channels == 3)
            img.data[i] = Vec3(raw.bytes[3 * i], raw.bytes[3 * i + 1], raw.bytes[3 * i + 2]) * scale;
        else
            img.data[i] = Vec3::Constant(raw.bytes[i] * scale);
    }
    return img;
}

void write_ppm(const fs::path& path, const RgbImage& image) {
    auto out = open_out(path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<std::uint8_t> bytes(image.size() * 3);
    for (std::size_t i = 0; i < image.size(); ++i)
        for (int k = 0; k < 3; ++k) bytes[3 * i + k] = quantize(image.data[i][k]);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DepthMap read_depth(const fs::path& path) {
    auto in = open_in(path);
    std::uint32_t wh[2];
    in.read(reinterpret_cast<char*>(wh), sizeof(wh));
    if (!in) throw ConfigError(path.string() + ": truncated depth header");
    DepthMap d(static_cast<int>(wh[0]), static_cast<int>(wh[1]));
    std::vector<float> vals(d.values.size());
    in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != vals.size() * sizeof(float))
        throw ConfigError(path.string() + ": truncated depth data");
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double v = vals[i];
        const bool ok = std::isfinite(v) && v > 0.0;
        d.values.data[i] = ok ? v : 0.0;
        d.validity.data[i] = ok;
    }
    return d;
}

void write_depth(const fs::path& path, const DepthMap& depth) {
    auto out = open_out(path);
    const std::uint32_t wh[2] = {static_cast<std::uint32_t>(depth.width()), static_cast<std::uint32_t>(depth.height())};
    out.write(reinterpret_cast<const char*>(wh), sizeof(wh));
    std::vector<float> vals(depth.values.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        vals[i] = depth.validity.data[i] ? static_cast<float>(depth.values.data[i]) : 0.0f;
    out.write(reinterpret_cast<const char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(float)));
}

json to_json(const RigidPose& pose) {
    const Quat& q = pose.rotation;
    return json{{"rotation", {q.w(), q.x(), q.y(), q.z()}},
                {"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

RigidPose pose_from_json(const json& j) {
    RigidPose pose;
    if (j.contains("rotation")) {
        const auto& r = j.at("rotation");
        if (r.size() != 4) throw ConfigError("pose rotation must be [w,x,y,z]");
        pose.rotation = Quat(r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>());
        if (std::abs(pose.rotation.norm() - 1.0) > 1e-6) throw ConfigError("pose rotation quaternion is not unit-norm");
        pose.rotation.normalize();
    }
    if (j.contains("translation")) {
        const auto& t = j.at("translation");
        if (t.size() != 3) throw ConfigError("pose translation must have 3 components");
        pose.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    }
    return pose;
}

json to_json(const Camera& camera) {
    return json{{"fx", camera.fx},       {"fy", camera.fy},       {"cx", camera.cx},
                {"cy", camera.cy},       {"width", camera.width}, {"height", camera.height},
                {"world_to_camera", to_json(camera.world_to_camera)}};
}

Camera camera_from_json(const json& j) {
    Camera cam;
    try {
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("camera JSON: ") + e.what());
    }
    if (j.contains("world_to_camera")) cam.world_to_camera = pose_from_json(j.at("world_to_camera"));
    cam.validate();
    return cam;
}

json read_json(const fs::path& path) {
    auto in = open_in(path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::string bytes_digest(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string file_digest(const fs::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return bytes_digest(ss.str());
}

}  // namespace splatsim::io
