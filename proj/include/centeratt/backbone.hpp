#pragma once

#include <vector>

#include "centeratt/center_head.hpp"
#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"
#include "centeratt/voxelizer.hpp"
#include "centeratt/weights.hpp"

namespace centeratt {

struct FeatureMap {
    Tensor tensor;  // [C,H,W]
    int stride = 1;
};

enum class BackboneMode { kLearned, kOracle };

// Stage i runs at stride 2^i with channels[i] and blocks[i] conv-bn-relu
// blocks; a 1x1 stem projects the BEV input, stride-2 convs bridge stages.
// All-zero blocks with one stage degenerate to the stem projection alone.
struct BackboneConfig {
    std::vector<int> channels = {16, 32, 64};
    std::vector<int> blocks = {1, 1, 1};
    std::vector<int> fpn_scales = {1, 2, 4};
    BackboneMode mode = BackboneMode::kLearned;
    bool bilinear_upsample = false;

    void validate() const;
    int num_stages() const { return static_cast<int>(channels.size()); }
    int max_stride() const { return 1 << (num_stages() - 1); }
    // feature channels every pyramid map carries (deepest stage width)
    int out_channels() const { return channels.back(); }
};

// Nearest (or bilinear) 2x spatial upsample of a [C,H,W] tensor.
Tensor upsample2(const Tensor& in, bool bilinear);

// Mean pooling by an integer factor; edge cells average their actual cover.
Tensor average_pool(const Tensor& in, int factor);

// Stride-1 pyramid map: deepest stage enters the top-down path directly,
// shallower stages join through 1x1 laterals and upsample-add.
FeatureMap backbone_forward(const Tensor& bev, const BackboneConfig& cfg,
                            const WeightStore& weights);

// Pyramid maps for every configured scale, ordered by ascending stride.
std::vector<FeatureMap> fpn_forward(const Tensor& bev, const BackboneConfig& cfg,
                                    const WeightStore& weights);

// Training-free stand-in: the stride-1 map holds the packed target planes of
// the ground truth, deeper scales are average-pooled copies. Decoding the
// stride-1 map recovers the boxes.
std::vector<FeatureMap> oracle_forward(const std::vector<Box3D>& gt_boxes,
                                       const BackboneConfig& cfg, const HeadConfig& head_cfg,
                                       const VoxelConfig& vox);

}  // namespace centeratt
