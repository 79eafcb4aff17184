#pragma once

#include <string>
#include <vector>

#include "centeratt/bench.hpp"
#include "centeratt/config.hpp"
#include "centeratt/weights.hpp"

namespace centeratt {

// Deterministic random init covering every tensor the configured pipeline
// reads. Oracle mode needs only the second stage and leaves it all-zero,
// which makes refinement the identity and every stage-2 class score 0.5.
WeightStore init_weights(const PipelineConfig& cfg, uint64_t seed);

struct SceneDetections {
    std::vector<Box3D> boxes;
    LossBreakdown loss;
    bool has_loss = false;
};

class Pipeline {
  public:
    // Folding and precision conversion run once here, not per scene.
    Pipeline(PipelineConfig cfg, WeightStore weights, int workers = 1);

    const PipelineConfig& config() const { return cfg_; }
    const WeightStore& store() const { return weights_; }

    std::vector<Box3D> run(const Scene& scene) const;

    // run plus the matching-based second-stage loss against scene.boxes
    SceneDetections run_with_loss(const Scene& scene) const;

    // Same computation with stage attribution; inputs come from disk so the
    // "load data" stage is real. Detections match run() on the same scene.
    std::vector<Box3D> run_staged(const std::string& cloud_path,
                                  const std::string& label_path, StageTimer& timer) const;

  private:
    std::vector<Point> range_filter(const std::vector<Point>& points) const;
    Tensor make_bev(const std::vector<Point>& filtered) const;
    std::vector<FeatureMap> learned_maps(Tensor bev) const;
    std::vector<Box3D> detect_from_maps(const std::vector<FeatureMap>& maps,
                                        const std::vector<Box3D>& gt,
                                        SceneDetections* loss_out) const;
    std::vector<Box3D> run_impl(const std::vector<Point>& points,
                                const std::vector<Box3D>& gt,
                                SceneDetections* loss_out) const;

    PipelineConfig cfg_;
    WeightStore weights_;
    int workers_;
};

// Ablation grid: baseline = face-center MLP second stage without pyramid
// neck; the two flags add the attention stage and the neck independently.
struct VariantSpec {
    std::string name;
    bool centeratt = false;
    bool fpn = false;
};

// Comma list drawn from {baseline, centeratt, fpn, both}, or "all" for the
// full grid in that order.
std::vector<VariantSpec> parse_variants(const std::string& spec);
PipelineConfig apply_variant(const PipelineConfig& base, const VariantSpec& v);

// Manifest entries hold paths relative to the manifest file itself.
std::string resolve_path(const std::string& manifest_path, const std::string& entry_path);

}  // namespace centeratt
