#include "centeratt/center_head.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "centeratt/errors.hpp"

namespace centeratt {

void HeadConfig::validate() const {
    if (num_classes != kNumClasses) {
        throw ConfigError("head num_classes must be " + std::to_string(kNumClasses));
    }
    if (max_proposals < 1) throw ConfigError("max_proposals must be >= 1");
    if (!(score_threshold > 0.0 && score_threshold <= 1.0)) {
        throw ConfigError("score_threshold must be in (0, 1]");
    }
    if (!(min_gaussian_radius > 0.0)) throw ConfigError("min_gaussian_radius must be > 0");
    if (!(gaussian_overlap > 0.0 && gaussian_overlap < 1.0)) {
        throw ConfigError("gaussian_overlap must be in (0, 1)");
    }
}

double gaussian_radius(double l_cells, double w_cells, double overlap, double min_radius) {
    if (!(l_cells > 0.0 && w_cells > 0.0)) {
        throw ConfigError("gaussian_radius footprint must be positive");
    }
    if (!(overlap > 0.0 && overlap < 1.0)) {
        throw ConfigError("gaussian_radius overlap must be in (0, 1)");
    }
    const double h = l_cells, w = w_cells;

    const double a1 = 1.0;
    const double b1 = h + w;
    const double c1 = w * h * (1.0 - overlap) / (1.0 + overlap);
    const double r1 = (b1 - std::sqrt(b1 * b1 - 4.0 * a1 * c1)) / (2.0 * a1);

    const double a2 = 4.0;
    const double b2 = 2.0 * (h + w);
    const double c2 = (1.0 - overlap) * w * h;
    const double r2 = (b2 - std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2);

    const double a3 = 4.0 * overlap;
    const double b3 = -2.0 * overlap * (h + w);
    const double c3 = (overlap - 1.0) * w * h;
    const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3);

    return std::max(min_radius, std::min({r1, r2, r3}));
}

HeatmapTargets encode_targets(const std::vector<Box3D>& boxes, const HeadConfig& cfg,
                              const VoxelConfig& vox) {
    cfg.validate();
    vox.validate();
    const size_t H = static_cast<size_t>(vox.dim_y());
    const size_t W = static_cast<size_t>(vox.dim_x());
    const int K = cfg.num_classes;

    HeatmapTargets t;
    t.heatmap = Tensor::zeros({static_cast<size_t>(K), H, W});
    t.offset = Tensor::zeros({2, H, W});
    t.z = Tensor::zeros({1, H, W});
    t.size = Tensor::zeros({3, H, W});
    t.rot = Tensor::zeros({2, H, W});
    t.mask = Tensor::zeros({1, H, W});

    for (const Box3D& b : boxes) {
        if (!(b.cx >= vox.x_min && b.cx < vox.x_max && b.cy >= vox.y_min && b.cy < vox.y_max &&
              b.cz >= vox.z_min && b.cz < vox.z_max)) {
            throw ConfigError("box center (" + std::to_string(b.cx) + ", " +
                              std::to_string(b.cy) + ", " + std::to_string(b.cz) +
                              ") outside the voxel range");
        }
        if (!(b.l > 0.0 && b.w > 0.0 && b.h > 0.0)) {
            throw ConfigError("box sizes must be positive");
        }
        const double fx = (b.cx - vox.x_min) / vox.voxel_x;
        const double fy = (b.cy - vox.y_min) / vox.voxel_y;
        const int ix = std::clamp(static_cast<int>(std::floor(fx)), 0, static_cast<int>(W) - 1);
        const int iy = std::clamp(static_cast<int>(std::floor(fy)), 0, static_cast<int>(H) - 1);
        const int k = static_cast<int>(b.cls);

        const double radius = gaussian_radius(b.l / vox.voxel_x, b.w / vox.voxel_y,
                                              cfg.gaussian_overlap, cfg.min_gaussian_radius);
        const double sigma = radius / 3.0;
        const int r = static_cast<int>(std::ceil(radius));
        for (int dy = -r; dy <= r; ++dy) {
            const int y = iy + dy;
            if (y < 0 || y >= static_cast<int>(H)) continue;
            for (int dx = -r; dx <= r; ++dx) {
                const int x = ix + dx;
                if (x < 0 || x >= static_cast<int>(W)) continue;
                const double val =
                    std::exp(-(static_cast<double>(dx) * dx + static_cast<double>(dy) * dy) /
                             (2.0 * sigma * sigma));
                float& cell = t.heatmap(k, y, x);
                cell = std::max(cell, static_cast<float>(val));
            }
        }
        t.heatmap(k, iy, ix) = 1.0f;
        t.offset(0, iy, ix) = static_cast<float>(fx - std::floor(fx));
        t.offset(1, iy, ix) = static_cast<float>(fy - std::floor(fy));
        t.z(0, iy, ix) = static_cast<float>(b.cz);
        t.size(0, iy, ix) = static_cast<float>(std::log(b.l));
        t.size(1, iy, ix) = static_cast<float>(std::log(b.w));
        t.size(2, iy, ix) = static_cast<float>(std::log(b.h));
        t.rot(0, iy, ix) = static_cast<float>(std::sin(b.yaw));
        t.rot(1, iy, ix) = static_cast<float>(std::cos(b.yaw));
        t.mask(0, iy, ix) = 1.0f;
    }
    return t;
}

Tensor pack_planes(const HeatmapTargets& t) {
    const size_t K = t.heatmap.dim(0);
    const size_t H = t.heatmap.dim(1);
    const size_t W = t.heatmap.dim(2);
    Tensor out = Tensor::zeros({K + 8, H, W});
    const size_t plane = H * W;
    auto copy_into = [&](const Tensor& src, size_t dst_ch) {
        std::copy(src.data.begin(), src.data.end(), out.data.begin() + dst_ch * plane);
    };
    copy_into(t.heatmap, 0);
    copy_into(t.offset, K);
    copy_into(t.z, K + 2);
    copy_into(t.size, K + 3);
    copy_into(t.rot, K + 6);
    return out;
}

HeatmapTargets unpack_planes(const Tensor& planes, int num_classes) {
    if (planes.rank() != 3) {
        throw ShapeError("packed planes must be rank 3, got " + planes.shape_str());
    }
    const size_t K = static_cast<size_t>(num_classes);
    if (planes.dim(0) != K + 8) {
        throw ShapeError("packed planes need " + std::to_string(K + 8) + " channels, got " +
                         std::to_string(planes.dim(0)));
    }
    const size_t H = planes.dim(1), W = planes.dim(2);
    const size_t plane = H * W;
    auto slice = [&](size_t ch, size_t n) {
        Tensor t = Tensor::zeros({n, H, W});
        std::copy(planes.data.begin() + ch * plane, planes.data.begin() + (ch + n) * plane,
                  t.data.begin());
        return t;
    };
    HeatmapTargets t;
    t.heatmap = slice(0, K);
    t.offset = slice(K, 2);
    t.z = slice(K + 2, 1);
    t.size = slice(K + 3, 3);
    t.rot = slice(K + 6, 2);
    t.mask = Tensor::zeros({1, H, W});
    return t;
}

std::vector<Peak> decode_peaks(const Tensor& heatmap, const HeadConfig& cfg) {
    cfg.validate();
    if (heatmap.rank() != 3 || heatmap.dim(0) != static_cast<size_t>(cfg.num_classes)) {
        throw ShapeError("heatmap must be [" + std::to_string(cfg.num_classes) +
                         ", H, W], got " + heatmap.shape_str());
    }
    const int K = cfg.num_classes;
    const int H = static_cast<int>(heatmap.dim(1));
    const int W = static_cast<int>(heatmap.dim(2));

    std::vector<std::vector<Peak>> per_class(K);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k) {
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                const float v = heatmap(k, y, x);
                if (static_cast<double>(v) < cfg.score_threshold) continue;
                const int rm = y * W + x;
                bool peak = true;
                for (int dy = -1; dy <= 1 && peak; ++dy) {
                    const int ny = y + dy;
                    if (ny < 0 || ny >= H) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        const int nx = x + dx;
                        if (nx < 0 || nx >= W) continue;
                        const float nv = heatmap(k, ny, nx);
                        if (nv > v || (nv == v && ny * W + nx < rm)) {
                            peak = false;
                            break;
                        }
                    }
                }
                if (peak) per_class[k].push_back({k, y, x, static_cast<double>(v)});
            }
        }
    }

    std::vector<Peak> peaks;
    for (auto& pc : per_class) {
        peaks.insert(peaks.end(), pc.begin(), pc.end());
    }
    std::sort(peaks.begin(), peaks.end(), [W](const Peak& a, const Peak& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.cls != b.cls) return a.cls < b.cls;
        return a.iy * W + a.ix < b.iy * W + b.ix;
    });
    if (peaks.size() > static_cast<size_t>(cfg.max_proposals)) {
        peaks.resize(static_cast<size_t>(cfg.max_proposals));
    }
    return peaks;
}

std::vector<Box3D> decode_boxes(const std::vector<Peak>& peaks, const HeatmapTargets& planes,
                                const VoxelConfig& vox) {
    vox.validate();
    const int H = static_cast<int>(planes.offset.dim(1));
    const int W = static_cast<int>(planes.offset.dim(2));
    std::vector<Box3D> out;
    out.reserve(peaks.size());
    for (const Peak& p : peaks) {
        if (p.iy < 0 || p.iy >= H || p.ix < 0 || p.ix >= W) {
            throw ShapeError("peak cell (" + std::to_string(p.iy) + ", " + std::to_string(p.ix) +
                             ") outside planes " + planes.offset.shape_str());
        }
        Box3D b;
        b.cx = (static_cast<double>(p.ix) + planes.offset(0, p.iy, p.ix)) * vox.voxel_x +
               vox.x_min;
        b.cy = (static_cast<double>(p.iy) + planes.offset(1, p.iy, p.ix)) * vox.voxel_y +
               vox.y_min;
        b.cz = planes.z(0, p.iy, p.ix);
        // log sizes clamped so untrained regression outputs stay finite
        const auto size_at = [&](int c) {
            const double v = std::clamp<double>(planes.size(c, p.iy, p.ix), -10.0, 10.0);
            return std::exp(v);
        };
        b.l = size_at(0);
        b.w = size_at(1);
        b.h = size_at(2);
        b.yaw = wrap_angle(std::atan2(static_cast<double>(planes.rot(0, p.iy, p.ix)),
                                      static_cast<double>(planes.rot(1, p.iy, p.ix))));
        b.cls = class_from_id(p.cls);
        b.score = p.score;
        out.push_back(b);
    }
    return out;
}

}  // namespace centeratt
