#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "centeratt/types.hpp"

namespace centeratt {

// Synthetic stand-in for a LiDAR frame: points plus annotated boxes.
// Generation is bit-deterministic in (config, seed).
struct Scene {
    std::vector<Point> points;
    std::vector<Box3D> boxes;
    uint64_t seed = 0;
};

struct SceneConfig {
    int vehicles = 3;
    int pedestrians = 2;
    int cyclists = 2;
    int points_per_object = 256;
    int background_points = 2048;
    // placement / point range, meters
    double x_min = -25.6, x_max = 25.6;
    double y_min = -25.6, y_max = 25.6;
    double z_min = -2.0, z_max = 4.0;
    // per-axis uniform surface noise bound; object points stay inside the
    // box expanded by this margin
    double surface_noise = 0.02;
    // optional extra spacing between accepted box centers
    double min_center_dist = 0.0;
    int max_place_attempts = 200;
    uint64_t seed = 0;
};

// Places boxes with pairwise BEV IoU exactly 0, samples each object's points
// on its box surface plus bounded noise, then fills in background points.
// Throws ConfigError naming the achieved count when placement fails.
Scene generate_scene(const SceneConfig& cfg);

// Indices of points inside the yaw-rotated box expanded by margin (all three
// axes).
std::vector<size_t> points_in_box(const std::vector<Point>& points, const Box3D& box,
                                  double margin);

enum class FlipAxis { kX, kY };

// X-flip negates y and maps yaw -> -yaw; Y-flip negates x and maps
// yaw -> pi - yaw. Involution.
Scene augment_flip(const Scene& scene, FlipAxis axis);

// Scales all coordinates and box sizes; yaw unchanged. factor must be > 0.
Scene augment_scale(const Scene& scene, double factor);

// Rotates points and box centers about the origin; yaw shifts by the same
// angle.
Scene augment_rotate(const Scene& scene, double angle);

struct PasteResult {
    Scene scene;
    bool pasted = false;
};

// Copies source box box_index and its interior points into target at a
// random collision-free pose (BEV IoU 0 against every target box). Failure
// after max_attempts returns the target unchanged with pasted=false.
PasteResult gt_sample_paste(const Scene& target, const Scene& source, size_t box_index,
                            int max_attempts, uint64_t seed);

// ---- file I/O ----

// Binary point cloud: magic "CATP", version u32, count u64, 4 x f32 per
// point, little endian.
void save_point_cloud(const std::string& path, const std::vector<Point>& points);
std::vector<Point> load_point_cloud(const std::string& path);

// One text line per box: cx,cy,cz,l,w,h,yaw,class,score with class in
// {0,1,2}.
void save_labels(const std::string& path, const std::vector<Box3D>& boxes);
std::vector<Box3D> load_labels(const std::string& path);

struct ManifestEntry {
    std::string cloud_path;
    std::string label_path;
    uint64_t seed = 0;
};

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Scene id used for detection file naming: cloud basename without extension.
std::string scene_id(const ManifestEntry& entry);

}  // namespace centeratt
