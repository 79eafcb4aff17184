#include "centeratt/roi_head.hpp"

#include <cmath>
#include <string>

#include "centeratt/box_delta.hpp"
#include "centeratt/errors.hpp"

namespace centeratt {

void RoiConfig::validate() const {
    if (scales.empty()) throw ConfigError("roi needs at least one sampling scale");
    for (int s : scales) {
        if (s < 1) throw ConfigError("roi scale must be >= 1, got " + std::to_string(s));
    }
    if (mlp_dims.empty()) throw ConfigError("roi mlp needs at least one layer");
    for (int d : mlp_dims) {
        if (d < 1) throw ConfigError("roi mlp width must be >= 1, got " + std::to_string(d));
    }
    if (model_dim < 1) throw ConfigError("roi model_dim must be >= 1");
    if (mlp_dims.back() != model_dim) {
        throw ConfigError("roi token width " + std::to_string(mlp_dims.back()) +
                          " must equal model_dim " + std::to_string(model_dim));
    }
}

std::array<BevPoint, 5> face_centers(const Box3D& box) {
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    const double hl = 0.5 * box.l, hw = 0.5 * box.w;
    const auto at = [&](double u, double v) {
        return BevPoint{box.cx + u * c - v * s, box.cy + u * s + v * c};
    };
    return {at(0, 0), at(hl, 0), at(-hl, 0), at(0, hw), at(0, -hw)};
}

namespace {

std::vector<DenseLayer> roi_mlp_layers(const WeightStore& weights) {
    std::vector<DenseLayer> layers;
    for (size_t j = 0;; ++j) {
        const std::string name = "roi.mlp.layer" + std::to_string(j);
        if (!has_weight(weights, name + ".weight")) break;
        layers.push_back(
            {fetch_weight(weights, name + ".weight"), fetch_weight(weights, name + ".bias"),
             Activation::kRelu});
    }
    if (layers.empty()) throw ShapeError("weight store has no roi.mlp layers");
    layers.back().activation = Activation::kNone;  // last layer emits the token
    return layers;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

Tensor extract_roi_features(const std::vector<Box3D>& proposals,
                            const std::vector<FeatureMap>& maps, const RoiConfig& cfg,
                            const VoxelConfig& vox, const WeightStore& weights) {
    cfg.validate();

    std::vector<const FeatureMap*> chosen;
    for (int s : cfg.scales) {
        const FeatureMap* found = nullptr;
        for (const FeatureMap& m : maps) {
            if (m.stride == s) {
                found = &m;
                break;
            }
        }
        if (!found) throw ShapeError("no feature map at stride " + std::to_string(s));
        chosen.push_back(found);
    }
    const size_t channels = chosen[0]->tensor.dim(0);
    for (const FeatureMap* m : chosen) {
        if (m->tensor.dim(0) != channels) {
            throw ShapeError("feature maps disagree on channel count: " +
                             std::to_string(m->tensor.dim(0)) + " vs " +
                             std::to_string(channels));
        }
    }

    const size_t n = proposals.size();
    const size_t width = 5 * chosen.size() * channels;
    Tensor features({n, width}, chosen[0]->tensor.precision);
    for (size_t i = 0; i < n; ++i) {
        const std::array<BevPoint, 5> pts = face_centers(proposals[i]);
        size_t col = 0;
        for (const FeatureMap* m : chosen) {
            const double sx = vox.voxel_x * m->stride;
            const double sy = vox.voxel_y * m->stride;
            for (const BevPoint& p : pts) {
                const std::vector<float> vals =
                    bilinear_sample(m->tensor, static_cast<float>((p.x - vox.x_min) / sx),
                                    static_cast<float>((p.y - vox.y_min) / sy));
                for (float v : vals) features(i, col++) = v;
            }
        }
    }
    return mlp_forward(features, roi_mlp_layers(weights));
}

namespace {

AttentionWeights gather_attention_weights(const WeightStore& w) {
    AttentionWeights aw;
    aw.wq = fetch_weight(w, "att.q.weight");
    aw.bq = fetch_weight(w, "att.q.bias");
    aw.wk = fetch_weight(w, "att.k.weight");
    aw.bk = fetch_weight(w, "att.k.bias");
    aw.wv = fetch_weight(w, "att.v.weight");
    aw.bv = fetch_weight(w, "att.v.bias");
    aw.wo = fetch_weight(w, "att.out.weight");
    aw.bo = fetch_weight(w, "att.out.bias");
    aw.ln1_gamma = fetch_weight(w, "att.ln1.gamma");
    aw.ln1_beta = fetch_weight(w, "att.ln1.beta");
    aw.ffn_w1 = fetch_weight(w, "att.ffn1.weight");
    aw.ffn_b1 = fetch_weight(w, "att.ffn1.bias");
    aw.ffn_w2 = fetch_weight(w, "att.ffn2.weight");
    aw.ffn_b2 = fetch_weight(w, "att.ffn2.bias");
    aw.ln2_gamma = fetch_weight(w, "att.ln2.gamma");
    aw.ln2_beta = fetch_weight(w, "att.ln2.beta");
    return aw;
}

}  // namespace

std::vector<SecondStagePrediction> centeratt_forward(const Tensor& roi_features,
                                                     const std::vector<Box3D>& proposals,
                                                     const VoxelConfig& vox,
                                                     const AttentionConfig& att_cfg,
                                                     const WeightStore& weights,
                                                     Tensor* attn_probs) {
    const size_t n = proposals.size();
    if (roi_features.rank() != 2 || roi_features.dim(0) != n) {
        throw ShapeError("roi features " + roi_features.shape_str() + " vs " + std::to_string(n) +
                         " proposals");
    }
    const size_t d = static_cast<size_t>(att_cfg.model_dim);
    if (roi_features.dim(1) != d || static_cast<size_t>(att_cfg.pe_dim) != d) {
        throw ShapeError("token width " + std::to_string(roi_features.dim(1)) +
                         " vs model_dim/pe_dim " + std::to_string(att_cfg.model_dim) + "/" +
                         std::to_string(att_cfg.pe_dim));
    }
    if (n == 0) return {};

    Tensor tokens = roi_features;
    const double xr = vox.x_max - vox.x_min;
    const double yr = vox.y_max - vox.y_min;
    for (size_t i = 0; i < n; ++i) {
        const Tensor pe = sine_position_embedding((proposals[i].cx - vox.x_min) / xr,
                                                  (proposals[i].cy - vox.y_min) / yr, att_cfg);
        for (size_t j = 0; j < d; ++j) tokens(i, j) += pe(j);
    }

    const AttentionWeights aw = gather_attention_weights(weights);
    // stacked layers share the single weight set; attn_probs reports the
    // last layer
    Tensor x = tokens;
    for (int layer = 0; layer < att_cfg.layers; ++layer) {
        x = multi_head_self_attention(x, att_cfg, aw, attn_probs);
    }

    const Tensor cls = mlp_forward(x, {{fetch_weight(weights, "cls_head.weight"),
                                        fetch_weight(weights, "cls_head.bias"),
                                        Activation::kNone}});
    const Tensor reg = mlp_forward(x, {{fetch_weight(weights, "reg_head.weight"),
                                        fetch_weight(weights, "reg_head.bias"),
                                        Activation::kNone}});
    if (cls.dim(1) != static_cast<size_t>(kNumClasses) || reg.dim(1) != 8) {
        throw ShapeError("second stage head widths " + cls.shape_str() + " / " + reg.shape_str());
    }

    std::vector<SecondStagePrediction> preds(n);
    for (size_t i = 0; i < n; ++i) {
        for (int k = 0; k < kNumClasses; ++k) {
            preds[i].class_probs[k] = sigmoid(cls(i, static_cast<size_t>(k)));
        }
        for (size_t c = 0; c < 8; ++c) preds[i].deltas[c] = reg(i, c);
    }
    return preds;
}

std::vector<SecondStagePrediction> second_stage_mlp_forward(const Tensor& roi_features,
                                                            const WeightStore& weights) {
    const size_t n = roi_features.dim(0);
    const Tensor cls = mlp_forward(roi_features, {{fetch_weight(weights, "base2.cls.weight"),
                                                   fetch_weight(weights, "base2.cls.bias"),
                                                   Activation::kNone}});
    const Tensor reg = mlp_forward(roi_features, {{fetch_weight(weights, "base2.reg.weight"),
                                                   fetch_weight(weights, "base2.reg.bias"),
                                                   Activation::kNone}});
    if (cls.dim(1) != 1 || reg.dim(1) != 8) {
        throw ShapeError("baseline head widths " + cls.shape_str() + " / " + reg.shape_str());
    }

    std::vector<SecondStagePrediction> preds(n);
    for (size_t i = 0; i < n; ++i) {
        const double p = sigmoid(cls(i, 0));
        preds[i].class_probs.fill(p);  // class-agnostic confidence
        for (size_t c = 0; c < 8; ++c) preds[i].deltas[c] = reg(i, c);
    }
    return preds;
}

std::vector<Box3D> refine_boxes(const std::vector<Box3D>& proposals,
                                const std::vector<std::array<double, 8>>& deltas) {
    if (proposals.size() != deltas.size()) {
        throw ShapeError("refine_boxes: " + std::to_string(proposals.size()) + " proposals vs " +
                         std::to_string(deltas.size()) + " delta sets");
    }
    std::vector<Box3D> out;
    out.reserve(proposals.size());
    for (size_t i = 0; i < proposals.size(); ++i) {
        out.push_back(apply_box_deltas(proposals[i], deltas[i]));
    }
    return out;
}

double fuse_scores(double stage1, double stage2) { return std::sqrt(stage1 * stage2); }

double stage2_score(const SecondStagePrediction& p) {
    double best = p.class_probs[0];
    for (int k = 1; k < kNumClasses; ++k) best = std::max(best, p.class_probs[k]);
    return best;
}

}  // namespace centeratt
