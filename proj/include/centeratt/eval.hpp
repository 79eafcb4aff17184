#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "centeratt/types.hpp"

namespace centeratt {

struct EvalConfig {
    // vehicle, pedestrian, cyclist
    std::array<double, kNumClasses> iou_thresholds = {0.7, 0.5, 0.5};

    void validate() const;
};

struct DetMatch {
    size_t det = 0;
    bool matched = false;
    size_t gt = 0;      // valid when matched
    double iou = 0.0;   // valid when matched
    double dyaw = 0.0;  // |heading error| in [0, pi], valid when matched
};

// Greedy one-to-one matching in detection order (callers pass dets sorted by
// descending score): each detection takes the highest-IoU unmatched gt of
// its own class with IoU >= threshold.
std::vector<DetMatch> match_detections(const std::vector<Box3D>& dets,
                                       const std::vector<Box3D>& gts, double iou_threshold);

struct ScoredDet {
    double score = 0.0;
    bool tp = false;
    double dyaw = 0.0;
};

struct ClassEval {
    bool evaluated = false;  // false when the class has no ground truth
    double ap = 0.0;
    double aph = 0.0;
    size_t num_gt = 0;
};

struct EvalResult {
    std::array<ClassEval, kNumClasses> per_class;
    double map = 0.0;
    double maph = 0.0;
    int classes_evaluated = 0;
};

// Collects matches across scenes, per class.
struct EvalAccumulator {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    std::array<size_t, kNumClasses> num_gt = {0, 0, 0};

    void add_scene(const std::vector<Box3D>& scene_dets, const std::vector<Box3D>& scene_gts,
                   const EvalConfig& cfg);
};

// Precision-recall with all-point interpolation. APH weights each true
// positive by (1 - dyaw/pi) in the precision numerator. Classes without
// ground truth are excluded from the means.
EvalResult compute_ap_aph(const std::array<std::vector<ScoredDet>, kNumClasses>& dets_per_class,
                          const std::array<size_t, kNumClasses>& num_gt_per_class);

// CSV rows `class,ap,aph` as percentages (1 decimal), then mAP / mAPH
// footer lines.
void write_eval_csv(const std::string& path, const EvalResult& result);
std::string format_eval_table(const EvalResult& result);

}  // namespace centeratt
