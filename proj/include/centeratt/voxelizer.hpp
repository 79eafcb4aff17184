#pragma once

#include <cstdint>
#include <vector>

#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"

namespace centeratt {

struct VoxelConfig {
    double x_min = -75.2, x_max = 75.2;
    double y_min = -75.2, y_max = 75.2;
    double z_min = -2.0, z_max = 4.0;
    double voxel_x = 0.1, voxel_y = 0.1, voxel_z = 0.15;

    // ranges must divide evenly by the voxel size
    void validate() const;
    int dim_x() const;
    int dim_y() const;
    int dim_z() const;
};

struct Voxel {
    // (iy * dim_x + ix) * dim_z + iz, so one BEV cell's z-bins are contiguous
    uint64_t linear = 0;
    double mean[4] = {0, 0, 0, 0};  // (x, y, z, intensity)
    uint32_t count = 0;
};

struct VoxelGrid {
    VoxelConfig config;
    std::vector<Voxel> voxels;  // ascending linear index

    uint64_t linear_index(int ix, int iy, int iz) const;
    void decompose(uint64_t linear, int& ix, int& iy, int& iz) const;
    const Voxel* find(int ix, int iy, int iz) const;
};

// Points outside [min, max) on any axis are dropped; per-voxel feature is
// the arithmetic mean of member points. Output is bit-identical for every
// worker count: points are keyed, sorted by (voxel, point index), and each
// voxel reduced in global point order.
VoxelGrid voxelize(const std::vector<Point>& points, const VoxelConfig& cfg, int workers);

// Collapses z into a dense [5, dim_y, dim_x] image: channels 0-3 average the
// voxel means over occupied z-bins, channel 4 is that bin count / dim_z.
Tensor bev_encode(const VoxelGrid& grid);

}  // namespace centeratt
