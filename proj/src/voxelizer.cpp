#include "centeratt/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "centeratt/errors.hpp"

namespace centeratt {
namespace {

int checked_dim(double lo, double hi, double size, const char* axis) {
    if (!(size > 0.0)) {
        throw ConfigError(std::string("voxel size on ") + axis + " must be > 0");
    }
    if (!(hi > lo)) {
        throw ConfigError(std::string("voxel range on ") + axis + " must have max > min");
    }
    const double quotient = (hi - lo) / size;
    const long long dim = std::llround(quotient);
    if (dim < 1 || std::fabs(quotient - static_cast<double>(dim)) > 1e-6) {
        throw ConfigError(std::string("voxel range on ") + axis + " (" + std::to_string(hi - lo) +
                          ") is not a whole multiple of size " + std::to_string(size));
    }
    return static_cast<int>(dim);
}

}  // namespace

void VoxelConfig::validate() const {
    checked_dim(x_min, x_max, voxel_x, "x");
    checked_dim(y_min, y_max, voxel_y, "y");
    checked_dim(z_min, z_max, voxel_z, "z");
}

int VoxelConfig::dim_x() const { return checked_dim(x_min, x_max, voxel_x, "x"); }
int VoxelConfig::dim_y() const { return checked_dim(y_min, y_max, voxel_y, "y"); }
int VoxelConfig::dim_z() const { return checked_dim(z_min, z_max, voxel_z, "z"); }

uint64_t VoxelGrid::linear_index(int ix, int iy, int iz) const {
    const uint64_t dx = static_cast<uint64_t>(config.dim_x());
    const uint64_t dz = static_cast<uint64_t>(config.dim_z());
    return (static_cast<uint64_t>(iy) * dx + static_cast<uint64_t>(ix)) * dz +
           static_cast<uint64_t>(iz);
}

void VoxelGrid::decompose(uint64_t linear, int& ix, int& iy, int& iz) const {
    const uint64_t dx = static_cast<uint64_t>(config.dim_x());
    const uint64_t dz = static_cast<uint64_t>(config.dim_z());
    iz = static_cast<int>(linear % dz);
    const uint64_t bev = linear / dz;
    ix = static_cast<int>(bev % dx);
    iy = static_cast<int>(bev / dx);
}

const Voxel* VoxelGrid::find(int ix, int iy, int iz) const {
    const uint64_t key = linear_index(ix, iy, iz);
    const auto it = std::lower_bound(voxels.begin(), voxels.end(), key,
                                     [](const Voxel& v, uint64_t k) { return v.linear < k; });
    if (it == voxels.end() || it->linear != key) return nullptr;
    return &*it;
}

VoxelGrid voxelize(const std::vector<Point>& points, const VoxelConfig& cfg, int workers) {
    cfg.validate();
    if (workers < 1) throw ConfigError("voxelize workers must be >= 1");
    const int dx = cfg.dim_x(), dy = cfg.dim_y(), dz = cfg.dim_z();

    VoxelGrid grid;
    grid.config = cfg;

    const int64_t n = static_cast<int64_t>(points.size());
    constexpr uint64_t kDropped = ~uint64_t{0};
    std::vector<std::pair<uint64_t, uint32_t>> keyed(points.size());

#pragma omp parallel for schedule(static) num_threads(workers)
    for (int64_t i = 0; i < n; ++i) {
        const Point& p = points[i];
        uint64_t key = kDropped;
        if (p.x >= cfg.x_min && p.x < cfg.x_max && p.y >= cfg.y_min && p.y < cfg.y_max &&
            p.z >= cfg.z_min && p.z < cfg.z_max) {
            int ix = static_cast<int>(std::floor((p.x - cfg.x_min) / cfg.voxel_x));
            int iy = static_cast<int>(std::floor((p.y - cfg.y_min) / cfg.voxel_y));
            int iz = static_cast<int>(std::floor((p.z - cfg.z_min) / cfg.voxel_z));
            ix = std::clamp(ix, 0, dx - 1);
            iy = std::clamp(iy, 0, dy - 1);
            iz = std::clamp(iz, 0, dz - 1);
            key = (static_cast<uint64_t>(iy) * dx + static_cast<uint64_t>(ix)) * dz +
                  static_cast<uint64_t>(iz);
        }
        keyed[i] = {key, static_cast<uint32_t>(i)};
    }

    keyed.erase(std::remove_if(keyed.begin(), keyed.end(),
                               [](const auto& kv) { return kv.first == kDropped; }),
                keyed.end());
    std::sort(keyed.begin(), keyed.end());

    std::vector<size_t> starts;
    for (size_t i = 0; i < keyed.size(); ++i) {
        if (i == 0 || keyed[i].first != keyed[i - 1].first) starts.push_back(i);
    }
    starts.push_back(keyed.size());

    const int64_t segments = static_cast<int64_t>(starts.size()) - 1;
    grid.voxels.resize(segments < 0 ? 0 : segments);

#pragma omp parallel for schedule(static) num_threads(workers)
    for (int64_t s = 0; s < segments; ++s) {
        const size_t lo = starts[s], hi = starts[s + 1];
        double sum[4] = {0, 0, 0, 0};
        for (size_t k = lo; k < hi; ++k) {
            const Point& p = points[keyed[k].second];
            sum[0] += p.x;
            sum[1] += p.y;
            sum[2] += p.z;
            sum[3] += p.intensity;
        }
        Voxel& v = grid.voxels[s];
        v.linear = keyed[lo].first;
        v.count = static_cast<uint32_t>(hi - lo);
        for (int c = 0; c < 4; ++c) v.mean[c] = sum[c] / static_cast<double>(v.count);
    }
    return grid;
}

Tensor bev_encode(const VoxelGrid& grid) {
    const int dx = grid.config.dim_x();
    const int dy = grid.config.dim_y();
    const int dz = grid.config.dim_z();
    Tensor out = Tensor::zeros({5, static_cast<size_t>(dy), static_cast<size_t>(dx)});

    std::vector<size_t> starts;
    const auto& vox = grid.voxels;
    for (size_t i = 0; i < vox.size(); ++i) {
        if (i == 0 || vox[i].linear / dz != vox[i - 1].linear / dz) starts.push_back(i);
    }
    starts.push_back(vox.size());

    const int64_t cells = static_cast<int64_t>(starts.size()) - 1;
#pragma omp parallel for schedule(static)
    for (int64_t s = 0; s < cells; ++s) {
        const size_t lo = starts[s], hi = starts[s + 1];
        const uint64_t bev = vox[lo].linear / dz;
        const int ix = static_cast<int>(bev % static_cast<uint64_t>(dx));
        const int iy = static_cast<int>(bev / static_cast<uint64_t>(dx));
        double sum[4] = {0, 0, 0, 0};
        for (size_t k = lo; k < hi; ++k) {
            for (int c = 0; c < 4; ++c) sum[c] += vox[k].mean[c];
        }
        const double bins = static_cast<double>(hi - lo);
        for (int c = 0; c < 4; ++c) {
            out(static_cast<size_t>(c), iy, ix) = static_cast<float>(sum[c] / bins);
        }
        out(4, iy, ix) = static_cast<float>(bins / static_cast<double>(dz));
    }
    return out;
}

}  // namespace centeratt
