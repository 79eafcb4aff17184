#pragma once

#include <array>
#include <vector>

#include "centeratt/backbone.hpp"
#include "centeratt/kernels.hpp"
#include "centeratt/matching.hpp"
#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"
#include "centeratt/voxelizer.hpp"
#include "centeratt/weights.hpp"

namespace centeratt {

struct RoiConfig {
    std::vector<int> scales = {1};
    std::vector<int> mlp_dims = {128, 128};  // layer widths; last is the token width
    int model_dim = 128;

    void validate() const;
};

struct BevPoint {
    double x = 0.0;
    double y = 0.0;
};

// BEV projections of the box center and the 4 side-face centers, in order
// {center, +l/2, -l/2, +w/2, -w/2}, rotated by yaw about the center.
std::array<BevPoint, 5> face_centers(const Box3D& box);

// Per proposal: bilinear-sample every configured scale at the 5 face points
// ((p - range_min) / (voxel * stride) cell coordinates), concatenate
// 5 * |scales| * C values, and project through the roi.mlp.* layers.
// Row i of the result is proposal i's feature.
Tensor extract_roi_features(const std::vector<Box3D>& proposals,
                            const std::vector<FeatureMap>& maps, const RoiConfig& cfg,
                            const VoxelConfig& vox, const WeightStore& weights);

// Attention second stage: tokens = roi feature + sine embedding of the
// proposal's range-normalized BEV center; one encoder layer, then K sigmoid
// class scores and 8 regression deltas per proposal.
std::vector<SecondStagePrediction> centeratt_forward(const Tensor& roi_features,
                                                     const std::vector<Box3D>& proposals,
                                                     const VoxelConfig& vox,
                                                     const AttentionConfig& att_cfg,
                                                     const WeightStore& weights,
                                                     Tensor* attn_probs = nullptr);

// Original second stage: a plain head on the roi features, one class-
// agnostic sigmoid (broadcast over K) plus the 8 deltas.
std::vector<SecondStagePrediction> second_stage_mlp_forward(const Tensor& roi_features,
                                                            const WeightStore& weights);

// apply the 8-delta parameterization to each proposal; class and stage-1
// score carry over
std::vector<Box3D> refine_boxes(const std::vector<Box3D>& proposals,
                                const std::vector<std::array<double, 8>>& deltas);

// geometric mean of the two stage scores
double fuse_scores(double stage1, double stage2);

// stage-2 score entering the fusion: the largest of the K sigmoids
double stage2_score(const SecondStagePrediction& p);

}  // namespace centeratt
