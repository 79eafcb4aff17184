#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "centeratt/scene.hpp"
#include "centeratt/tensor.hpp"
#include "centeratt/types.hpp"
#include "centeratt/weights.hpp"

namespace centeratt {

// s_c = gamma_c / sqrt(var_c + eps); W'_c = s_c * W_c;
// b'_c = s_c * (b_c - mean_c) + beta_c
std::pair<Tensor, Tensor> fold_batchnorm(const Tensor& weight, const Tensor& bias,
                                         const Tensor& gamma, const Tensor& beta,
                                         const Tensor& mean, const Tensor& var, double eps);

// Folds every <prefix>.bn.* group into its <prefix>.conv.* pair and drops
// the bn entries. The input store is left untouched.
WeightStore fold_pipeline_batchnorm(const WeightStore& store);

// FP16E rounds every tensor through binary16 except normalization
// parameters (.bn.*, .ln*), which stay fp32. Values that round to infinity
// abort with the offending tensor names. FP32 clears the half tags.
WeightStore convert_pipeline_precision(const WeightStore& store, Precision target);

struct EquivalenceEntry {
    std::string name;  // score / center / size / yaw
    double max_abs = 0.0;
    double max_rel = 0.0;
};

struct EquivalenceReport {
    std::vector<EquivalenceEntry> entries;
    double max_abs = 0.0;
    double max_rel = 0.0;
    std::string worst;     // entry name holding max_rel
    double tolerance = 0.0;
    bool pass = false;     // max_rel <= tolerance
    size_t compared = 0;   // matched detection pairs
    size_t count_mismatch = 0;  // detections left unmatched across all scenes
};

using DetectorFn = std::function<std::vector<Box3D>(const Scene&)>;

// Runs both detectors on every scene, aligns detections greedily by BEV IoU,
// and records the worst score/center/size/yaw divergence. Count mismatches
// are tallied, not fatal.
EquivalenceReport equivalence_check(const DetectorFn& a, const DetectorFn& b,
                                    const std::vector<Scene>& scenes, double tolerance);

std::string format_equivalence_table(const EquivalenceReport& report);
void write_equivalence_csv(const std::string& path, const EquivalenceReport& report);

}  // namespace centeratt
