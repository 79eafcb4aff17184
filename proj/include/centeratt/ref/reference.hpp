#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "centeratt/center_head.hpp"
#include "centeratt/eval.hpp"
#include "centeratt/kernels.hpp"
#include "centeratt/matching.hpp"
#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"
#include "centeratt/voxelizer.hpp"

// Slow, single-threaded restatements of the core numerics, kept apart from
// the shipping kernels so tests can cross-check the two and the benchmark
// harness can measure the speedup. Nothing here is reachable from the CLI.
namespace centeratt::ref {

// binary16 conversion done through value arithmetic (ilogb/ldexp, explicit
// floor and round-to-nearest-even) rather than bit surgery. NaNs are quieted
// keeping the top ten payload bits, matching the hardware-style converter.
uint16_t float_to_half_bits_ref(float f);

// Same arithmetic as conv2d in one scalar loop nest on a single thread,
// including the half-operand rounding rules.
Tensor conv2d_serial(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                     int padding);

// Buckets points into cells through an ordered map and averages each bucket
// in point order. Single threaded.
VoxelGrid voxelize_serial(const std::vector<Point>& points, const VoxelConfig& cfg);

Tensor bev_encode_serial(const VoxelGrid& grid);

// Full post-norm encoder layer evaluated in double precision with plain
// left-to-right sums. Returns the [N, model_dim] output row-major.
std::vector<double> attention_ref(const Tensor& tokens, const AttentionConfig& cfg,
                                  const AttentionWeights& weights);

// Checks every cell of every class plane against its 3x3 neighbourhood
// directly instead of the shipping suppression pass.
std::vector<Peak> decode_peaks_ref(const Tensor& heatmap, const HeadConfig& cfg);

// Minimum radius keeping the worst of the three overlap configurations
// (corner shift, both shrunk, both grown) at the requested IoU, each case
// solved by bisection on its closed-form IoU curve.
double gaussian_radius_ref(double l_cells, double w_cells, double overlap);

struct McIou {
    double iou = 0.0;
    double sigma = 0.0;  // one-sigma error propagated from the hit count
};

// BEV IoU estimated from `samples` points drawn uniformly inside box a.
McIou rotated_iou_mc(const Box3D& a, const Box3D& b, int64_t samples, uint64_t seed);

bool point_in_bev_box(double x, double y, const Box3D& box);

// Visits all permutations of the zero-padded square matrix in lexicographic
// order and keeps the first minimum. Padded sizes up to 8.
Assignment assign_exhaustive(const CostMatrix& cost);

// Scalar restatement of the classification and regression loss terms.
LossBreakdown loss_ref(const std::vector<SecondStagePrediction>& predictions,
                       const std::vector<Box3D>& gts, const Assignment& assignment,
                       const std::vector<std::array<double, 8>>& reg_targets);

// Average precision restated per ground-truth rank: the g-th recall step
// earns the best (heading-weighted) precision over all cutoffs containing at
// least g true positives, zero when never reached. Returns {ap, aph}.
std::pair<double, double> ap_aph_ref(std::vector<ScoredDet> dets, size_t num_gt);

}  // namespace centeratt::ref
