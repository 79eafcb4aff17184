#pragma once

#include <cstdint>
#include <string>

#include "centeratt/backbone.hpp"
#include "centeratt/center_head.hpp"
#include "centeratt/eval.hpp"
#include "centeratt/kernels.hpp"
#include "centeratt/matching.hpp"
#include "centeratt/roi_head.hpp"
#include "centeratt/scene.hpp"
#include "centeratt/voxelizer.hpp"

namespace centeratt {

enum class SecondStage { kNone, kBaseline, kCenterAtt };

// Where voxelization is attributed in staged timing: kPreprocess folds it
// into the preprocess stage, kModel into the model stage.
enum class VoxelStage { kPreprocess, kModel };

struct PipelineConfig {
    BackboneMode mode = BackboneMode::kLearned;
    Precision precision = Precision::kFloat32;
    SecondStage second_stage = SecondStage::kCenterAtt;
    bool use_fpn = false;
    bool fold_bn = false;
    VoxelStage voxel_stage = VoxelStage::kModel;
    uint64_t seed = 1;

    VoxelConfig voxel;
    HeadConfig head;
    BackboneConfig backbone;
    RoiConfig roi;
    AttentionConfig attention;
    MatchConfig match;
    EvalConfig eval;
    SceneConfig scene;

    void validate() const;
};

// Struct defaults carry the full-range grid (1504 x 1504 BEV cells); this
// preset shrinks the detection range to the +-25.6 m area the synthetic
// scenes cover, giving a 512 x 512 grid that runs in seconds. Used when no
// config file is given.
PipelineConfig desk_config();

// Flat `key = value` text: blank lines and full-line # comments are skipped,
// unknown keys are errors. List values are comma separated. The full key set
// lives in configs/default.cfg.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

}  // namespace centeratt
