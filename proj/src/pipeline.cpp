#include "centeratt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "centeratt/box_delta.hpp"
#include "centeratt/errors.hpp"
#include "centeratt/optimize.hpp"
#include "centeratt/rng.hpp"

namespace centeratt {

namespace {

Tensor uniform_tensor(Rng& rng, std::vector<size_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

void add_dense(WeightStore& w, Rng& rng, const std::string& name, size_t out, size_t in) {
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    w[name + ".weight"] = uniform_tensor(rng, {out, in}, -s, s);
    w[name + ".bias"] = uniform_tensor(rng, {out}, -0.01, 0.01);
}

void add_conv_bn(WeightStore& w, Rng& rng, const std::string& name, size_t c_in, size_t c_out,
                 size_t k) {
    const double s = 1.0 / std::sqrt(static_cast<double>(c_in * k * k));
    w[name + ".conv.weight"] = uniform_tensor(rng, {c_out, c_in, k, k}, -s, s);
    w[name + ".conv.bias"] = uniform_tensor(rng, {c_out}, -0.01, 0.01);
    w[name + ".bn.gamma"] = uniform_tensor(rng, {c_out}, 0.8, 1.2);
    w[name + ".bn.beta"] = uniform_tensor(rng, {c_out}, -0.1, 0.1);
    w[name + ".bn.mean"] = uniform_tensor(rng, {c_out}, -0.2, 0.2);
    w[name + ".bn.var"] = uniform_tensor(rng, {c_out}, 0.5, 1.5);
    w[name + ".bn.eps"] = Tensor::full({1}, 1e-3f);
}

void add_second_stage(WeightStore& w, Rng& rng, const PipelineConfig& cfg, bool zero) {
    const int K = cfg.head.num_classes;
    const int feat_channels = cfg.mode == BackboneMode::kLearned
                                  ? cfg.backbone.out_channels()
                                  : head_plane_channels(K);
    const size_t roi_in =
        5 * cfg.roi.scales.size() * static_cast<size_t>(feat_channels);
    const size_t D = static_cast<size_t>(cfg.attention.model_dim);
    const size_t F = static_cast<size_t>(cfg.attention.ffn_dim);

    auto dense = [&](const std::string& name, size_t out, size_t in) {
        if (zero) {
            w[name + ".weight"] = Tensor::zeros({out, in});
            w[name + ".bias"] = Tensor::zeros({out});
        } else {
            add_dense(w, rng, name, out, in);
        }
    };
    auto norm = [&](const std::string& name, size_t dim) {
        if (zero) {
            w[name + ".gamma"] = Tensor::zeros({dim});
            w[name + ".beta"] = Tensor::zeros({dim});
        } else {
            w[name + ".gamma"] = uniform_tensor(rng, {dim}, 0.9, 1.1);
            w[name + ".beta"] = uniform_tensor(rng, {dim}, -0.05, 0.05);
        }
    };

    size_t in = roi_in;
    for (size_t j = 0; j < cfg.roi.mlp_dims.size(); ++j) {
        const size_t out = static_cast<size_t>(cfg.roi.mlp_dims[j]);
        dense("roi.mlp.layer" + std::to_string(j), out, in);
        in = out;
    }
    for (const char* p : {"att.q", "att.k", "att.v", "att.out"}) dense(p, D, D);
    norm("att.ln1", D);
    norm("att.ln2", D);
    dense("att.ffn1", F, D);
    dense("att.ffn2", D, F);
    dense("cls_head", static_cast<size_t>(K), D);
    dense("reg_head", 8, D);
    dense("base2.cls", 1, D);
    dense("base2.reg", 8, D);
}

}  // namespace

WeightStore init_weights(const PipelineConfig& cfg, uint64_t seed) {
    cfg.validate();
    WeightStore w;
    Rng rng(mix_seed(seed, 0xC0FFEEull));
    if (cfg.mode == BackboneMode::kLearned) {
        const auto& bb = cfg.backbone;
        const size_t c0 = static_cast<size_t>(bb.channels[0]);
        const size_t c_last = static_cast<size_t>(bb.out_channels());
        const double s0 = 1.0 / std::sqrt(5.0);
        w["backbone.stem.weight"] = uniform_tensor(rng, {c0, 5, 1, 1}, -s0, s0);
        w["backbone.stem.bias"] = uniform_tensor(rng, {c0}, -0.01, 0.01);
        for (int i = 0; i < bb.num_stages(); ++i) {
            const size_t ci = static_cast<size_t>(bb.channels[static_cast<size_t>(i)]);
            if (i > 0) {
                const size_t cp = static_cast<size_t>(bb.channels[static_cast<size_t>(i) - 1]);
                add_conv_bn(w, rng, "backbone.down" + std::to_string(i), cp, ci, 3);
            }
            for (int j = 0; j < bb.blocks[static_cast<size_t>(i)]; ++j) {
                add_conv_bn(w, rng,
                            "backbone.stage" + std::to_string(i) + ".block" + std::to_string(j),
                            ci, ci, 3);
            }
        }
        for (int i = 0; i + 1 < bb.num_stages(); ++i) {
            const size_t ci = static_cast<size_t>(bb.channels[static_cast<size_t>(i)]);
            const std::string name = "fpn.lateral" + std::to_string(1 << i);
            const double s = 1.0 / std::sqrt(static_cast<double>(ci));
            w[name + ".weight"] = uniform_tensor(rng, {c_last, ci, 1, 1}, -s, s);
            w[name + ".bias"] = uniform_tensor(rng, {c_last}, -0.01, 0.01);
        }
        const size_t planes = static_cast<size_t>(head_plane_channels(cfg.head.num_classes));
        const double sh = 1.0 / std::sqrt(static_cast<double>(c_last));
        w["head.conv.weight"] = uniform_tensor(rng, {planes, c_last, 1, 1}, -sh, sh);
        Tensor hb = uniform_tensor(rng, {planes}, -0.01, 0.01);
        // keep untrained heatmap logits low so sigmoid scores start sparse
        for (int k = 0; k < cfg.head.num_classes; ++k) hb(static_cast<size_t>(k)) = -2.0f;
        w["head.conv.bias"] = hb;
    }
    add_second_stage(w, rng, cfg, cfg.mode == BackboneMode::kOracle);
    return w;
}

Pipeline::Pipeline(PipelineConfig cfg, WeightStore weights, int workers)
    : cfg_(std::move(cfg)), weights_(std::move(weights)), workers_(workers) {
    cfg_.validate();
    if (workers_ < 1) throw ConfigError("workers must be >= 1");
    if (cfg_.fold_bn) weights_ = fold_pipeline_batchnorm(weights_);
    if (cfg_.precision == Precision::kHalf) {
        weights_ = convert_pipeline_precision(weights_, Precision::kHalf);
    }
}

std::vector<Point> Pipeline::range_filter(const std::vector<Point>& points) const {
    const VoxelConfig& v = cfg_.voxel;
    std::vector<Point> out;
    out.reserve(points.size());
    for (const Point& p : points) {
        if (p.x >= v.x_min && p.x < v.x_max && p.y >= v.y_min && p.y < v.y_max &&
            p.z >= v.z_min && p.z < v.z_max) {
            out.push_back(p);
        }
    }
    return out;
}

Tensor Pipeline::make_bev(const std::vector<Point>& filtered) const {
    return bev_encode(voxelize(filtered, cfg_.voxel, workers_));
}

std::vector<FeatureMap> Pipeline::learned_maps(Tensor bev) const {
    if (cfg_.precision == Precision::kHalf) bev = quantize_fp16(bev);
    if (cfg_.use_fpn) return fpn_forward(bev, cfg_.backbone, weights_);
    return {backbone_forward(bev, cfg_.backbone, weights_)};
}

std::vector<Box3D> Pipeline::detect_from_maps(const std::vector<FeatureMap>& maps,
                                              const std::vector<Box3D>& gt,
                                              SceneDetections* loss_out) const {
    const int K = cfg_.head.num_classes;
    Tensor planes;
    if (cfg_.mode == BackboneMode::kOracle) {
        planes = maps[0].tensor;
    } else {
        planes = conv2d(maps[0].tensor, fetch_weight(weights_, "head.conv.weight"),
                        fetch_weight(weights_, "head.conv.bias"), 1, 0);
        const size_t hw = planes.dim(1) * planes.dim(2);
        for (size_t i = 0; i < static_cast<size_t>(K) * hw; ++i) {
            planes.data[i] =
                static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(planes.data[i]))));
        }
        planes.precision = Precision::kFloat32;
    }
    const HeatmapTargets targets = unpack_planes(planes, K);
    const std::vector<Peak> peaks = decode_peaks(targets.heatmap, cfg_.head);
    std::vector<Box3D> proposals = decode_boxes(peaks, targets, cfg_.voxel);

    if (cfg_.second_stage == SecondStage::kNone || proposals.empty()) {
        if (loss_out != nullptr && cfg_.second_stage != SecondStage::kNone) {
            loss_out->loss = LossBreakdown{};
            loss_out->loss.unmatched = gt.size();
            loss_out->has_loss = true;
        }
        return proposals;
    }

    const Tensor roi = extract_roi_features(proposals, maps, cfg_.roi, cfg_.voxel, weights_);
    const std::vector<SecondStagePrediction> preds =
        cfg_.second_stage == SecondStage::kCenterAtt
            ? centeratt_forward(roi, proposals, cfg_.voxel, cfg_.attention, weights_)
            : second_stage_mlp_forward(roi, weights_);

    std::vector<std::array<double, 8>> deltas(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) deltas[i] = preds[i].deltas;
    std::vector<Box3D> refined = refine_boxes(proposals, deltas);
    for (size_t i = 0; i < refined.size(); ++i) {
        refined[i].score = fuse_scores(proposals[i].score, stage2_score(preds[i]));
    }

    if (loss_out != nullptr) {
        std::vector<ScoredProposal> scored(proposals.size());
        for (size_t i = 0; i < proposals.size(); ++i) {
            scored[i].box = proposals[i];
            scored[i].class_scores = preds[i].class_probs;
        }
        const CostMatrix cost = build_cost_matrix(scored, gt, cfg_.match);
        const Assignment asn = hungarian_assign(cost);
        std::vector<std::array<double, 8>> reg_targets;
        reg_targets.reserve(asn.pairs.size());
        for (const auto& [row, col] : asn.pairs) {
            reg_targets.push_back(box_deltas(proposals[row], gt[col]));
        }
        loss_out->loss = second_stage_loss(preds, gt, asn, reg_targets);
        loss_out->has_loss = true;
    }
    return refined;
}

std::vector<Box3D> Pipeline::run_impl(const std::vector<Point>& points,
                                      const std::vector<Box3D>& gt,
                                      SceneDetections* loss_out) const {
    std::vector<FeatureMap> maps;
    if (cfg_.mode == BackboneMode::kOracle) {
        maps = oracle_forward(gt, cfg_.backbone, cfg_.head, cfg_.voxel);
    } else {
        maps = learned_maps(make_bev(range_filter(points)));
    }
    return detect_from_maps(maps, gt, loss_out);
}

std::vector<Box3D> Pipeline::run(const Scene& scene) const {
    return run_impl(scene.points, scene.boxes, nullptr);
}

SceneDetections Pipeline::run_with_loss(const Scene& scene) const {
    SceneDetections out;
    out.boxes = run_impl(scene.points, scene.boxes, &out);
    return out;
}

std::vector<Box3D> Pipeline::run_staged(const std::string& cloud_path,
                                        const std::string& label_path,
                                        StageTimer& timer) const {
    std::vector<Point> points;
    std::vector<Box3D> labels;
    timer.time(Stage::kLoadData, [&] {
        points = load_point_cloud(cloud_path);
        labels = load_labels(label_path);
    });

    std::vector<Point> filtered;
    Tensor bev;
    const bool early_voxel = cfg_.voxel_stage == VoxelStage::kPreprocess;
    timer.time(Stage::kPreprocess, [&] {
        filtered = range_filter(points);
        if (early_voxel) bev = make_bev(filtered);
    });

    Tensor batch;
    timer.time(Stage::kCollate, [&] {
        if (early_voxel) {
            batch = bev;
        } else {
            batch = Tensor({filtered.size(), 4});
            for (size_t i = 0; i < filtered.size(); ++i) {
                batch(i, 0) = filtered[i].x;
                batch(i, 1) = filtered[i].y;
                batch(i, 2) = filtered[i].z;
                batch(i, 3) = filtered[i].intensity;
            }
        }
    });

    Tensor device;
    timer.time(Stage::kLoadToGpu, [&] {
        device = cfg_.precision == Precision::kHalf && early_voxel ? quantize_fp16(batch)
                                                                   : batch;
    });

    std::vector<Box3D> detections;
    timer.time(Stage::kModel, [&] {
        std::vector<FeatureMap> maps;
        if (cfg_.mode == BackboneMode::kOracle) {
            if (!early_voxel) bev = make_bev(filtered);
            maps = oracle_forward(labels, cfg_.backbone, cfg_.head, cfg_.voxel);
        } else if (early_voxel) {
            // device tensor already carries the converted bev image
            maps = cfg_.use_fpn ? fpn_forward(device, cfg_.backbone, weights_)
                                : std::vector<FeatureMap>{
                                      backbone_forward(device, cfg_.backbone, weights_)};
        } else {
            maps = learned_maps(make_bev(filtered));
        }
        detections = detect_from_maps(maps, labels, nullptr);
    });
    return detections;
}

std::vector<VariantSpec> parse_variants(const std::string& spec) {
    const std::vector<VariantSpec> grid = {
        {"baseline", false, false},
        {"centeratt", true, false},
        {"fpn", false, true},
        {"both", true, true},
    };
    if (spec == "all") return grid;
    std::vector<VariantSpec> out;
    std::string item;
    std::stringstream ss(spec);
    while (std::getline(ss, item, ',')) {
        const size_t a = item.find_first_not_of(" \t");
        const size_t b = item.find_last_not_of(" \t");
        if (a == std::string::npos) throw ConfigError("empty variant name in \"" + spec + "\"");
        item = item.substr(a, b - a + 1);
        const auto it = std::find_if(grid.begin(), grid.end(),
                                     [&](const VariantSpec& v) { return v.name == item; });
        if (it == grid.end()) {
            throw ConfigError("unknown variant \"" + item +
                              "\" (use baseline, centeratt, fpn, both or all)");
        }
        out.push_back(*it);
    }
    if (out.empty()) throw ConfigError("no variants requested");
    return out;
}

PipelineConfig apply_variant(const PipelineConfig& base, const VariantSpec& v) {
    PipelineConfig cfg = base;
    cfg.second_stage = v.centeratt ? SecondStage::kCenterAtt : SecondStage::kBaseline;
    cfg.use_fpn = v.fpn;
    cfg.roi.scales = v.fpn ? cfg.backbone.fpn_scales : std::vector<int>{1};
    cfg.validate();
    return cfg;
}

std::string resolve_path(const std::string& manifest_path, const std::string& entry_path) {
    const std::filesystem::path entry(entry_path);
    if (entry.is_absolute()) return entry_path;
    const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
    if (dir.empty()) return entry_path;
    return (dir / entry).string();
}

}  // namespace centeratt
