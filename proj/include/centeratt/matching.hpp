#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "centeratt/types.hpp"

namespace centeratt {

struct MatchConfig {
    double lambda_cls = 1.0;
    double lambda_iou = 1.0;
    // cost and eval IoU are BEV by default; 3D adds the z-extent overlap
    bool use_3d_iou = false;

    void validate() const;
};

// Intersection of the two yaw-rotated BEV rectangles via convex polygon
// clipping; IoU = inter / (areaA + areaB - inter). Symmetric, 0 for
// degenerate unions.
double rotated_iou_bev(const Box3D& a, const Box3D& b);

// BEV intersection scaled by z-overlap against the box volumes.
double rotated_iou_3d(const Box3D& a, const Box3D& b);

// Proposal carrying its per-class sigmoid scores.
struct ScoredProposal {
    Box3D box;
    std::array<double, kNumClasses> class_scores{};
};

struct CostMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> cost;

    double& at(size_t i, size_t j) { return cost[i * cols + j]; }
    double at(size_t i, size_t j) const { return cost[i * cols + j]; }
};

// entry(i,j) = lambda_cls * (1 - p_i[class_j]) + lambda_iou * (1 - iou(box_i, gt_j))
CostMatrix build_cost_matrix(const std::vector<ScoredProposal>& proposals,
                             const std::vector<Box3D>& gts, const MatchConfig& cfg);

struct Assignment {
    std::vector<std::pair<size_t, size_t>> pairs;  // (row, col), sorted by row
    std::vector<size_t> unmatched_rows;
    std::vector<size_t> unmatched_cols;
    double total_cost = 0.0;
};

// Minimal-cost bipartite matching of size min(rows, cols). O(n^3)
// shortest-augmenting-path core on a zero-padded square matrix; among equal
// optima the lexicographically smallest pair set is returned (for padded
// sizes up to 256).
Assignment hungarian_assign(const CostMatrix& cost);

// Single clamped binary cross entropy term, probabilities clipped to
// [1e-7, 1 - 1e-7].
double bce(double p, double target);

struct SecondStagePrediction {
    std::array<double, kNumClasses> class_probs{};
    std::array<double, 8> deltas{};
};

struct LossBreakdown {
    double cls_loss = 0.0;
    double reg_loss = 0.0;
    size_t matched = 0;
    size_t unmatched = 0;
};

// cls_loss: mean BCE over all proposals x K sigmoids, target 1 only at
// (matched proposal, its gt class). reg_loss: mean absolute error over the
// 8 delta components of matched pairs; reg_targets aligned with
// assignment.pairs.
LossBreakdown second_stage_loss(const std::vector<SecondStagePrediction>& predictions,
                                const std::vector<Box3D>& gts, const Assignment& assignment,
                                const std::vector<std::array<double, 8>>& reg_targets);

}  // namespace centeratt
