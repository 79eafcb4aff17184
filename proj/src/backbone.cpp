#include "centeratt/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "centeratt/errors.hpp"
#include "centeratt/kernels.hpp"

namespace centeratt {
namespace {

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

void relu_inplace(Tensor& t) {
    for (float& v : t.data) v = std::max(0.0f, v);
}

Tensor add_same_shape(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "fpn combine");
    Tensor out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    out.precision = Precision::kFloat32;
    return out;
}

Tensor crop_to(const Tensor& t, size_t h, size_t w) {
    if (t.dim(1) == h && t.dim(2) == w) return t;
    if (t.dim(1) < h || t.dim(2) < w) {
        throw ShapeError("cannot crop " + t.shape_str() + " up to " + std::to_string(h) + "x" +
                         std::to_string(w));
    }
    Tensor out = Tensor::zeros({t.dim(0), h, w});
    for (size_t c = 0; c < t.dim(0); ++c) {
        for (size_t y = 0; y < h; ++y) {
            for (size_t x = 0; x < w; ++x) out(c, y, x) = t(c, y, x);
        }
    }
    out.precision = t.precision;
    return out;
}

double bn_eps(const WeightStore& w, const std::string& prefix) {
    const Tensor& eps = fetch_weight(w, prefix + ".bn.eps");
    if (eps.numel() != 1) throw ShapeError(prefix + ".bn.eps must hold a single value");
    return eps.data[0];
}

// conv + optional batch norm (skipped once folded away) + relu
Tensor conv_block(const Tensor& x, const WeightStore& w, const std::string& prefix, int stride,
                  int padding) {
    Tensor y = conv2d(x, fetch_weight(w, prefix + ".conv.weight"),
                      fetch_weight(w, prefix + ".conv.bias"), stride, padding);
    if (has_weight(w, prefix + ".bn.gamma")) {
        y = batch_norm(y, fetch_weight(w, prefix + ".bn.gamma"),
                       fetch_weight(w, prefix + ".bn.beta"), fetch_weight(w, prefix + ".bn.mean"),
                       fetch_weight(w, prefix + ".bn.var"), bn_eps(w, prefix));
    }
    relu_inplace(y);
    return y;
}

// stage outputs C_0..C_{S-1}, C_i at stride 2^i
std::vector<Tensor> stage_outputs(const Tensor& bev, const BackboneConfig& cfg,
                                  const WeightStore& w) {
    if (bev.rank() != 3) {
        throw ShapeError("backbone input must be [C,H,W], got " + bev.shape_str());
    }
    std::vector<Tensor> stages;
    Tensor x = conv2d(bev, fetch_weight(w, "backbone.stem.weight"),
                      fetch_weight(w, "backbone.stem.bias"), 1, 0);
    for (int i = 0; i < cfg.num_stages(); ++i) {
        if (i > 0) {
            x = conv_block(x, w, "backbone.down" + std::to_string(i), 2, 1);
        }
        for (int j = 0; j < cfg.blocks[i]; ++j) {
            x = conv_block(
                x, w, "backbone.stage" + std::to_string(i) + ".block" + std::to_string(j), 1, 1);
        }
        stages.push_back(x);
    }
    return stages;
}

// top-down pyramid over all stage strides, index i = stride 2^i
std::vector<Tensor> build_pyramid(const Tensor& bev, const BackboneConfig& cfg,
                                  const WeightStore& w) {
    const std::vector<Tensor> stages = stage_outputs(bev, cfg, w);
    const int s = cfg.num_stages();
    std::vector<Tensor> pyramid(s);
    pyramid[s - 1] = stages[s - 1];
    for (int i = s - 2; i >= 0; --i) {
        const std::string name = "fpn.lateral" + std::to_string(1 << i);
        Tensor lateral = conv2d(stages[i], fetch_weight(w, name + ".weight"),
                                fetch_weight(w, name + ".bias"), 1, 0);
        Tensor up = upsample2(pyramid[i + 1], cfg.bilinear_upsample);
        pyramid[i] = add_same_shape(lateral, crop_to(up, lateral.dim(1), lateral.dim(2)));
    }
    return pyramid;
}

}  // namespace

void BackboneConfig::validate() const {
    if (channels.empty() || channels.size() != blocks.size()) {
        throw ConfigError("backbone channels and blocks must be non-empty and equal length");
    }
    for (int c : channels) {
        if (c < 1) throw ConfigError("backbone channels must be >= 1");
    }
    for (int b : blocks) {
        if (b < 0) throw ConfigError("backbone blocks must be >= 0");
    }
    if (fpn_scales.empty() || fpn_scales.front() != 1) {
        throw ConfigError("fpn_scales must start at 1");
    }
    for (size_t i = 0; i < fpn_scales.size(); ++i) {
        if (!is_power_of_two(fpn_scales[i])) {
            throw ConfigError("fpn_scales must be powers of two");
        }
        if (i > 0 && fpn_scales[i] <= fpn_scales[i - 1]) {
            throw ConfigError("fpn_scales must be strictly ascending");
        }
    }
    if (fpn_scales.back() > max_stride()) {
        throw ConfigError("fpn scale " + std::to_string(fpn_scales.back()) +
                          " exceeds the deepest stage stride " + std::to_string(max_stride()));
    }
}

Tensor upsample2(const Tensor& in, bool bilinear) {
    if (in.rank() != 3) {
        throw ShapeError("upsample2 expects [C,H,W], got " + in.shape_str());
    }
    const size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
    Tensor out = Tensor::zeros({C, 2 * H, 2 * W});
    if (bilinear) {
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t y = 0; y < static_cast<std::int64_t>(2 * H); ++y) {
            for (std::int64_t x = 0; x < static_cast<std::int64_t>(2 * W); ++x) {
                const double sy = (static_cast<double>(y) + 0.5) / 2.0 - 0.5;
                const double sx = (static_cast<double>(x) + 0.5) / 2.0 - 0.5;
                const std::vector<float> vals = bilinear_sample(in, sx, sy);
                for (size_t c = 0; c < C; ++c) out(c, y, x) = vals[c];
            }
        }
    } else {
#pragma omp parallel for collapse(2) schedule(static)
        for (std::int64_t c = 0; c < static_cast<std::int64_t>(C); ++c) {
            for (std::int64_t y = 0; y < static_cast<std::int64_t>(2 * H); ++y) {
                for (size_t x = 0; x < 2 * W; ++x) {
                    out(c, y, x) = in(c, y / 2, x / 2);
                }
            }
        }
    }
    out.precision = in.precision;
    return out;
}

Tensor average_pool(const Tensor& in, int factor) {
    if (in.rank() != 3) {
        throw ShapeError("average_pool expects [C,H,W], got " + in.shape_str());
    }
    if (factor < 1) throw ConfigError("average_pool factor must be >= 1");
    if (factor == 1) return in;
    const size_t C = in.dim(0), H = in.dim(1), W = in.dim(2);
    const size_t oh = (H + factor - 1) / factor;
    const size_t ow = (W + factor - 1) / factor;
    Tensor out = Tensor::zeros({C, oh, ow});
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t c = 0; c < static_cast<std::int64_t>(C); ++c) {
        for (std::int64_t y = 0; y < static_cast<std::int64_t>(oh); ++y) {
            for (size_t x = 0; x < ow; ++x) {
                double sum = 0.0;
                int count = 0;
                const size_t y_end = std::min(H, static_cast<size_t>(y + 1) * factor);
                const size_t x_end = std::min(W, (x + 1) * factor);
                for (size_t yy = static_cast<size_t>(y) * factor; yy < y_end; ++yy) {
                    for (size_t xx = x * factor; xx < x_end; ++xx) {
                        sum += in(c, yy, xx);
                        ++count;
                    }
                }
                out(c, y, x) = static_cast<float>(sum / count);
            }
        }
    }
    return out;
}

FeatureMap backbone_forward(const Tensor& bev, const BackboneConfig& cfg,
                            const WeightStore& weights) {
    cfg.validate();
    return {build_pyramid(bev, cfg, weights)[0], 1};
}

std::vector<FeatureMap> fpn_forward(const Tensor& bev, const BackboneConfig& cfg,
                                    const WeightStore& weights) {
    cfg.validate();
    const std::vector<Tensor> pyramid = build_pyramid(bev, cfg, weights);
    std::vector<FeatureMap> out;
    for (int s : cfg.fpn_scales) {
        int level = 0;
        while ((1 << level) != s) ++level;
        out.push_back({pyramid[level], s});
    }
    return out;
}

std::vector<FeatureMap> oracle_forward(const std::vector<Box3D>& gt_boxes,
                                       const BackboneConfig& cfg, const HeadConfig& head_cfg,
                                       const VoxelConfig& vox) {
    cfg.validate();
    const Tensor planes = pack_planes(encode_targets(gt_boxes, head_cfg, vox));
    std::vector<FeatureMap> out;
    for (int s : cfg.fpn_scales) {
        out.push_back({s == 1 ? planes : average_pool(planes, s), s});
    }
    return out;
}

}  // namespace centeratt
