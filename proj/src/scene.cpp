#include "centeratt/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "centeratt/errors.hpp"
#include "centeratt/matching.hpp"
#include "centeratt/rng.hpp"

namespace centeratt {
namespace {

constexpr uint32_t kCloudVersion = 1;
constexpr double kPasteMargin = 0.05;

struct ClassSpec {
    ObjectClass cls;
    double l_min, l_max;
    double w_min, w_max;
    double h_min, h_max;
};

constexpr ClassSpec kClassSpecs[] = {
    {ObjectClass::kVehicle, 3.8, 5.0, 1.7, 2.1, 1.4, 1.8},
    {ObjectClass::kPedestrian, 0.6, 1.0, 0.6, 1.0, 1.6, 1.9},
    {ObjectClass::kCyclist, 1.5, 2.0, 0.5, 0.8, 1.4, 1.8},
};

Box3D inflate_bev(const Box3D& b, double margin) {
    Box3D out = b;
    out.l += 2.0 * margin;
    out.w += 2.0 * margin;
    return out;
}

// Overlap test used for placement: boxes grown by the noise margin must not
// touch, so noisy surface points of one object can never fall inside another
// object's expanded box.
bool collides(const Box3D& candidate, const std::vector<Box3D>& placed, double margin,
              double min_center_dist) {
    const Box3D a = inflate_bev(candidate, margin + 1e-6);
    for (const Box3D& p : placed) {
        const double dx = candidate.cx - p.cx;
        const double dy = candidate.cy - p.cy;
        if (min_center_dist > 0.0 && std::sqrt(dx * dx + dy * dy) < min_center_dist) {
            return true;
        }
        if (rotated_iou_bev(a, inflate_bev(p, margin + 1e-6)) > 0.0) return true;
    }
    return false;
}

Point sample_surface_point(Rng& rng, const Box3D& b, double noise) {
    const double area_x = b.w * b.h;
    const double area_y = b.l * b.h;
    const double area_z = b.l * b.w;
    const double total = 2.0 * (area_x + area_y + area_z);
    double u = rng.uniform(0.0, total);

    double lx, ly, lz;
    const double hl = b.l / 2.0, hw = b.w / 2.0, hh = b.h / 2.0;
    if (u < 2.0 * area_x) {
        lx = (u < area_x) ? hl : -hl;
        ly = rng.uniform(-hw, hw);
        lz = rng.uniform(-hh, hh);
    } else if (u < 2.0 * (area_x + area_y)) {
        u -= 2.0 * area_x;
        lx = rng.uniform(-hl, hl);
        ly = (u < area_y) ? hw : -hw;
        lz = rng.uniform(-hh, hh);
    } else {
        u -= 2.0 * (area_x + area_y);
        lx = rng.uniform(-hl, hl);
        ly = rng.uniform(-hw, hw);
        lz = (u < area_z) ? hh : -hh;
    }
    lx += rng.uniform(-noise, noise);
    ly += rng.uniform(-noise, noise);
    lz += rng.uniform(-noise, noise);

    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    Point p;
    p.x = static_cast<float>(b.cx + lx * c - ly * s);
    p.y = static_cast<float>(b.cy + lx * s + ly * c);
    p.z = static_cast<float>(b.cz + lz);
    p.intensity = static_cast<float>(rng.uniform01());
    return p;
}

void check_ranges(const SceneConfig& cfg) {
    if (!(cfg.x_max > cfg.x_min) || !(cfg.y_max > cfg.y_min) || !(cfg.z_max > cfg.z_min)) {
        throw ConfigError("scene ranges must have max > min on every axis");
    }
    if (cfg.surface_noise < 0.0) throw ConfigError("surface_noise must be >= 0");
    if (cfg.points_per_object < 0 || cfg.background_points < 0 || cfg.vehicles < 0 ||
        cfg.pedestrians < 0 || cfg.cyclists < 0) {
        throw ConfigError("scene counts must be >= 0");
    }
    if (cfg.max_place_attempts < 1) throw ConfigError("max_place_attempts must be >= 1");
}

}  // namespace

Scene generate_scene(const SceneConfig& cfg) {
    check_ranges(cfg);
    Rng rng(cfg.seed);
    Scene scene;
    scene.seed = cfg.seed;

    const int counts[3] = {cfg.vehicles, cfg.pedestrians, cfg.cyclists};
    int requested = 0;
    for (int c : counts) requested += c;

    for (int ci = 0; ci < 3; ++ci) {
        const ClassSpec& spec = kClassSpecs[ci];
        for (int i = 0; i < counts[ci]; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < cfg.max_place_attempts; ++attempt) {
                Box3D b;
                b.cls = spec.cls;
                b.l = rng.uniform(spec.l_min, spec.l_max);
                b.w = rng.uniform(spec.w_min, spec.w_max);
                b.h = rng.uniform(spec.h_min, spec.h_max);
                b.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
                const double pad = 0.5 * b.bev_diag() + cfg.surface_noise;
                const double z_pad = 0.5 * b.h + cfg.surface_noise;
                if (cfg.x_min + pad >= cfg.x_max - pad || cfg.y_min + pad >= cfg.y_max - pad ||
                    cfg.z_min + z_pad >= cfg.z_max - z_pad) {
                    throw ConfigError("scene range too small to contain a " +
                                      std::string(class_name(spec.cls)) + " box");
                }
                b.cx = rng.uniform(cfg.x_min + pad, cfg.x_max - pad);
                b.cy = rng.uniform(cfg.y_min + pad, cfg.y_max - pad);
                b.cz = rng.uniform(cfg.z_min + z_pad, cfg.z_max - z_pad);
                if (collides(b, scene.boxes, cfg.surface_noise, cfg.min_center_dist)) continue;
                scene.boxes.push_back(b);
                placed = true;
                break;
            }
            if (!placed) {
                throw ConfigError("placed " + std::to_string(scene.boxes.size()) + " of " +
                                  std::to_string(requested) +
                                  " boxes without overlap; reduce counts or enlarge ranges");
            }
        }
    }

    for (const Box3D& b : scene.boxes) {
        for (int j = 0; j < cfg.points_per_object; ++j) {
            scene.points.push_back(sample_surface_point(rng, b, cfg.surface_noise));
        }
    }

    for (int i = 0; i < cfg.background_points; ++i) {
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            Point p;
            p.x = static_cast<float>(rng.uniform(cfg.x_min, cfg.x_max));
            p.y = static_cast<float>(rng.uniform(cfg.y_min, cfg.y_max));
            p.z = static_cast<float>(rng.uniform(cfg.z_min, cfg.z_max));
            p.intensity = static_cast<float>(rng.uniform01());
            ok = true;
            for (const Box3D& b : scene.boxes) {
                const std::vector<Point> one{p};
                if (!points_in_box(one, b, cfg.surface_noise).empty()) {
                    ok = false;
                    break;
                }
            }
            if (ok) scene.points.push_back(p);
        }
        if (!ok) {
            throw ConfigError("could not sample background point outside all boxes");
        }
    }
    return scene;
}

std::vector<size_t> points_in_box(const std::vector<Point>& points, const Box3D& box,
                                  double margin) {
    if (margin < 0.0) throw ConfigError("points_in_box margin must be >= 0");
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double hl = box.l / 2.0 + margin;
    const double hw = box.w / 2.0 + margin;
    const double hh = box.h / 2.0 + margin;
    std::vector<size_t> out;
    for (size_t i = 0; i < points.size(); ++i) {
        const double dx = points[i].x - box.cx;
        const double dy = points[i].y - box.cy;
        const double dz = points[i].z - box.cz;
        const double lx = dx * c + dy * s;
        const double ly = -dx * s + dy * c;
        if (std::fabs(lx) <= hl && std::fabs(ly) <= hw && std::fabs(dz) <= hh) {
            out.push_back(i);
        }
    }
    return out;
}

Scene augment_flip(const Scene& scene, FlipAxis axis) {
    Scene out = scene;
    if (axis == FlipAxis::kX) {
        for (Point& p : out.points) p.y = -p.y;
        for (Box3D& b : out.boxes) {
            b.cy = -b.cy;
            b.yaw = wrap_angle(-b.yaw);
        }
    } else {
        for (Point& p : out.points) p.x = -p.x;
        for (Box3D& b : out.boxes) {
            b.cx = -b.cx;
            b.yaw = wrap_angle(M_PI - b.yaw);
        }
    }
    return out;
}

Scene augment_scale(const Scene& scene, double factor) {
    if (!(factor > 0.0)) throw ConfigError("scale factor must be > 0");
    Scene out = scene;
    const float f = static_cast<float>(factor);
    for (Point& p : out.points) {
        p.x *= f;
        p.y *= f;
        p.z *= f;
    }
    for (Box3D& b : out.boxes) {
        b.cx *= factor;
        b.cy *= factor;
        b.cz *= factor;
        b.l *= factor;
        b.w *= factor;
        b.h *= factor;
    }
    return out;
}

Scene augment_rotate(const Scene& scene, double angle) {
    Scene out = scene;
    const double c = std::cos(angle), s = std::sin(angle);
    for (Point& p : out.points) {
        const double x = p.x, y = p.y;
        p.x = static_cast<float>(x * c - y * s);
        p.y = static_cast<float>(x * s + y * c);
    }
    for (Box3D& b : out.boxes) {
        const double x = b.cx, y = b.cy;
        b.cx = x * c - y * s;
        b.cy = x * s + y * c;
        b.yaw = wrap_angle(b.yaw + angle);
    }
    return out;
}

PasteResult gt_sample_paste(const Scene& target, const Scene& source, size_t box_index,
                            int max_attempts, uint64_t seed) {
    if (box_index >= source.boxes.size()) {
        throw ConfigError("paste box index " + std::to_string(box_index) +
                          " outside source with " + std::to_string(source.boxes.size()) +
                          " boxes");
    }
    PasteResult result;
    result.scene = target;
    result.pasted = false;

    const Box3D& src = source.boxes[box_index];
    const std::vector<size_t> idx = points_in_box(source.points, src, kPasteMargin);

    const bool target_empty = target.boxes.empty() && target.points.empty();
    double bx_min = 0.0, bx_max = 0.0, by_min = 0.0, by_max = 0.0;
    if (!target_empty) {
        bx_min = by_min = 1e300;
        bx_max = by_max = -1e300;
        for (const Point& p : target.points) {
            bx_min = std::min(bx_min, static_cast<double>(p.x));
            bx_max = std::max(bx_max, static_cast<double>(p.x));
            by_min = std::min(by_min, static_cast<double>(p.y));
            by_max = std::max(by_max, static_cast<double>(p.y));
        }
        for (const Box3D& b : target.boxes) {
            const double r = 0.5 * b.bev_diag();
            bx_min = std::min(bx_min, b.cx - r);
            bx_max = std::max(bx_max, b.cx + r);
            by_min = std::min(by_min, b.cy - r);
            by_max = std::max(by_max, b.cy + r);
        }
    }

    Rng rng(seed);
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Box3D cand = src;
        double dyaw = 0.0;
        if (target_empty) {
            // nothing to avoid, keep the source pose
        } else {
            cand.cx = rng.uniform(bx_min, bx_max);
            cand.cy = rng.uniform(by_min, by_max);
            dyaw = rng.uniform(-M_PI / 4.0, M_PI / 4.0);
            cand.yaw = wrap_angle(src.yaw + dyaw);
        }
        if (collides(cand, target.boxes, kPasteMargin, 0.0)) continue;

        const double c = std::cos(dyaw), s = std::sin(dyaw);
        for (size_t pi : idx) {
            Point p = source.points[pi];
            const double dx = p.x - src.cx;
            const double dy = p.y - src.cy;
            p.x = static_cast<float>(cand.cx + dx * c - dy * s);
            p.y = static_cast<float>(cand.cy + dx * s + dy * c);
            p.z = static_cast<float>(cand.cz + (p.z - src.cz));
            result.scene.points.push_back(p);
        }
        result.scene.boxes.push_back(cand);
        result.pasted = true;
        break;
    }
    return result;
}

void save_point_cloud(const std::string& path, const std::vector<Point>& points) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write("CATP", 4);
    const uint32_t version = kCloudVersion;
    f.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t count = points.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const Point& p : points) {
        const float v[4] = {p.x, p.y, p.z, p.intensity};
        f.write(reinterpret_cast<const char*>(v), sizeof(v));
    }
    if (!f) throw IoError("short write to " + path);
}

std::vector<Point> load_point_cloud(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CATP", 4) != 0) {
        throw IoError(path + ": not a point cloud file (bad magic)");
    }
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f || version != kCloudVersion) {
        throw IoError(path + ": unsupported point cloud version " + std::to_string(version));
    }
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!f) throw IoError(path + ": truncated header");
    std::vector<Point> points(count);
    for (uint64_t i = 0; i < count; ++i) {
        float v[4];
        f.read(reinterpret_cast<char*>(v), sizeof(v));
        if (!f) throw IoError(path + ": truncated at point " + std::to_string(i));
        points[i] = Point{v[0], v[1], v[2], v[3]};
    }
    return points;
}

void save_labels(const std::string& path, const std::vector<Box3D>& boxes) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    char line[512];
    for (const Box3D& b : boxes) {
        std::snprintf(line, sizeof(line),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", b.cx, b.cy, b.cz,
                      b.l, b.w, b.h, b.yaw, static_cast<int>(b.cls), b.score);
        f << line;
    }
    if (!f) throw IoError("short write to " + path);
}

std::vector<Box3D> load_labels(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<Box3D> boxes;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        Box3D b;
        int cls_id = 0;
        const int n = std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf,%d,%lf", &b.cx,
                                  &b.cy, &b.cz, &b.l, &b.w, &b.h, &b.yaw, &cls_id, &b.score);
        if (n != 9) {
            throw IoError(path + ":" + std::to_string(line_no) + ": malformed label line");
        }
        b.cls = class_from_id(cls_id);
        boxes.push_back(b);
    }
    return boxes;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    for (const ManifestEntry& e : entries) {
        f << e.cloud_path << ',' << e.label_path << ',' << e.seed << '\n';
    }
    if (!f) throw IoError("short write to " + path);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<ManifestEntry> entries;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        std::string seed_str;
        if (!std::getline(ss, e.cloud_path, ',') || !std::getline(ss, e.label_path, ',') ||
            !std::getline(ss, seed_str)) {
            throw IoError(path + ":" + std::to_string(line_no) + ": malformed manifest line");
        }
        e.seed = std::stoull(seed_str);
        entries.push_back(e);
    }
    return entries;
}

std::string scene_id(const ManifestEntry& entry) {
    return std::filesystem::path(entry.cloud_path).stem().string();
}

}  // namespace centeratt
