#pragma once

#include <vector>

#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"
#include "centeratt/voxelizer.hpp"

namespace centeratt {

struct HeadConfig {
    int num_classes = kNumClasses;
    int max_proposals = 128;
    double score_threshold = 0.1;
    double min_gaussian_radius = 2.0;
    double gaussian_overlap = 0.1;

    void validate() const;
};

// Dense stride-1 target planes. Regression values are written only at
// annotated center cells (mask = 1 there).
struct HeatmapTargets {
    Tensor heatmap;  // [K,H,W], peaks exactly 1 at center cells
    Tensor offset;   // [2,H,W], sub-voxel (dx, dy) in cells
    Tensor z;        // [1,H,W], meters
    Tensor size;     // [3,H,W], (log l, log w, log h)
    Tensor rot;      // [2,H,W], (sin yaw, cos yaw)
    Tensor mask;     // [1,H,W]
};

// Smallest radius keeping IoU >= overlap for an axis-aligned footprint
// shifted by the radius (three-case quadratic), floored at min_radius.
double gaussian_radius(double l_cells, double w_cells, double overlap, double min_radius);

// Splats one Gaussian per box on its class channel (sigma = radius/3),
// combining overlaps by max, and writes the regression planes at the center
// cell. Boxes must lie inside the voxel range.
HeatmapTargets encode_targets(const std::vector<Box3D>& boxes, const HeadConfig& cfg,
                              const VoxelConfig& vox);

// Channel packing used between backbone and head: K heatmap channels, then
// offset (2), z (1), size (3), rot (2).
constexpr int head_plane_channels(int num_classes) { return num_classes + 8; }
Tensor pack_planes(const HeatmapTargets& t);
// mask is not part of the packed layout; it comes back all-zero
HeatmapTargets unpack_planes(const Tensor& planes, int num_classes);

struct Peak {
    int cls = 0;
    int iy = 0;
    int ix = 0;
    double score = 0.0;
};

// A cell is a peak when no 3x3 neighbour on its class channel beats it
// (ties lose to the smaller row-major index). Returns the top max_proposals
// with score >= threshold, sorted by descending score, then class, then
// row-major cell.
std::vector<Peak> decode_peaks(const Tensor& heatmap, const HeadConfig& cfg);

// center = ((cell + offset) * voxel + range_min), sizes = exp(size planes),
// yaw = atan2(sin, cos).
std::vector<Box3D> decode_boxes(const std::vector<Peak>& peaks, const HeatmapTargets& planes,
                                const VoxelConfig& vox);

}  // namespace centeratt
