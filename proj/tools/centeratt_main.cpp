#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "centeratt/bench.hpp"
#include "centeratt/config.hpp"
#include "centeratt/errors.hpp"
#include "centeratt/eval.hpp"
#include "centeratt/optimize.hpp"
#include "centeratt/pipeline.hpp"
#include "centeratt/rng.hpp"
#include "centeratt/scene.hpp"
#include "centeratt/workers.hpp"

namespace fs = std::filesystem;
using namespace centeratt;

namespace {

// exit codes by failure class; 0 means the command ran to completion
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitIo = 4;
constexpr int kExitShape = 5;

struct CommonArgs {
    std::string config_path;
    int workers = 0;
    int64_t seed = -1;  // <0 keeps the config seed
};

PipelineConfig make_config(const CommonArgs& common) {
    PipelineConfig cfg = common.config_path.empty() ? desk_config() : load_config(common.config_path);
    if (common.seed >= 0) cfg.seed = static_cast<uint64_t>(common.seed);
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& common) {
    cmd->add_option("-c,--config", common.config_path,
                    "pipeline config file (key = value); omit for the built-in 51.2 m preset");
    cmd->add_option("-w,--workers", common.workers,
                    "worker threads; overrides CENTERATT_WORKERS, 0 picks the default");
    cmd->add_option("--seed", common.seed, "override the config seed (>= 0)");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::vector<ManifestEntry> entries = load_manifest(path);
    return entries;
}

Scene load_scene(const std::string& manifest_path, const ManifestEntry& entry) {
    Scene s;
    s.points = load_point_cloud(resolve_path(manifest_path, entry.cloud_path));
    s.boxes = load_labels(resolve_path(manifest_path, entry.label_path));
    s.seed = entry.seed;
    return s;
}

// ---- generate ----

struct GenerateArgs {
    CommonArgs common;
    std::string outdir;
    int count = 10;
};

int cmd_generate(const GenerateArgs& a) {
    PipelineConfig cfg = make_config(a.common);
    fs::create_directories(a.outdir);

    std::vector<ManifestEntry> entries;
    for (int i = 0; i < a.count; ++i) {
        SceneConfig sc = cfg.scene;
        sc.seed = mix_seed(cfg.seed, static_cast<uint64_t>(i));
        const Scene scene = generate_scene(sc);

        char name[32];
        std::snprintf(name, sizeof name, "scene_%04d", i);
        const std::string cloud = std::string(name) + ".catp";
        const std::string labels = std::string(name) + ".txt";
        save_point_cloud((fs::path(a.outdir) / cloud).string(), scene.points);
        save_labels((fs::path(a.outdir) / labels).string(), scene.boxes);
        entries.push_back({cloud, labels, sc.seed});
    }
    const std::string manifest = (fs::path(a.outdir) / "manifest.txt").string();
    save_manifest(manifest, entries);
    std::printf("wrote %d scene(s) to %s\n", a.count, manifest.c_str());
    return 0;
}

// ---- weight init ----

struct InitArgs {
    CommonArgs common;
    std::string output;
};

int cmd_init(const InitArgs& a) {
    PipelineConfig cfg = make_config(a.common);
    const WeightStore store = init_weights(cfg, cfg.seed);
    save_weights(a.output, store);
    std::printf("wrote %zu tensors to %s\n", store.size(), a.output.c_str());
    return 0;
}

// ---- detect ----

struct DetectArgs {
    CommonArgs common;
    std::string manifest;
    std::string weights;
    std::string outdir;
    std::string variants;
    bool oracle = false;
    bool fpn = false;
    bool no_second_stage = false;
    bool fp16 = false;
    bool fold_bn = false;
    bool loss_report = false;
    double score_threshold = 0.1;
};

PipelineConfig detect_config(const DetectArgs& a) {
    PipelineConfig cfg = make_config(a.common);
    if (a.oracle) cfg.mode = BackboneMode::kOracle;
    if (a.fpn) {
        cfg.use_fpn = true;
        cfg.roi.scales = cfg.backbone.fpn_scales;
    }
    if (a.no_second_stage) cfg.second_stage = SecondStage::kNone;
    if (a.fp16) cfg.precision = Precision::kHalf;
    if (a.fold_bn) cfg.fold_bn = true;
    cfg.head.score_threshold = a.score_threshold;
    cfg.validate();
    return cfg;
}

WeightStore detect_weights(const PipelineConfig& cfg, const std::string& weights_path) {
    if (!weights_path.empty()) return load_weights(weights_path);
    return init_weights(cfg, cfg.seed);
}

size_t run_detect_pass(const Pipeline& pipeline, const std::string& manifest_path,
                       const std::vector<ManifestEntry>& entries, const std::string& outdir,
                       bool loss_report, EvalAccumulator* eval_acc, const EvalConfig& eval_cfg) {
    fs::create_directories(outdir);
    size_t total = 0;
    double cls_sum = 0.0, reg_sum = 0.0;
    for (const ManifestEntry& entry : entries) {
        const Scene scene = load_scene(manifest_path, entry);
        std::vector<Box3D> dets;
        if (loss_report) {
            const SceneDetections r = pipeline.run_with_loss(scene);
            dets = r.boxes;
            cls_sum += r.loss.cls_loss;
            reg_sum += r.loss.reg_loss;
        } else {
            dets = pipeline.run(scene);
        }
        if (eval_acc) eval_acc->add_scene(dets, scene.boxes, eval_cfg);
        save_labels((fs::path(outdir) / (scene_id(entry) + ".det.txt")).string(), dets);
        total += dets.size();
    }
    if (loss_report && !entries.empty()) {
        std::printf("mean loss over %zu scene(s): cls %.6f, reg %.6f\n", entries.size(),
                    cls_sum / static_cast<double>(entries.size()),
                    reg_sum / static_cast<double>(entries.size()));
    }
    return total;
}

int cmd_detect(const DetectArgs& a) {
    const std::vector<ManifestEntry> entries = read_manifest(a.manifest);
    const int workers = resolve_workers(a.common.workers);

    if (a.variants.empty()) {
        const PipelineConfig cfg = detect_config(a);
        if (cfg.mode == BackboneMode::kLearned && a.weights.empty()) {
            std::fprintf(stderr, "error: learned mode needs --weights or --oracle\n");
            return kExitUsage;
        }
        const Pipeline pipeline(cfg, detect_weights(cfg, a.weights), workers);
        const size_t total =
            run_detect_pass(pipeline, a.manifest, entries, a.outdir, a.loss_report, nullptr, {});
        std::printf("wrote %zu detection(s) for %zu scene(s) to %s\n", total, entries.size(),
                    a.outdir.c_str());
        return 0;
    }

    // ablation grid: one sub-directory and one comparison row per variant
    const std::vector<VariantSpec> specs = parse_variants(a.variants);
    const PipelineConfig base = detect_config(a);
    std::printf("%-12s %8s %12s %8s %8s\n", "variant", "scenes", "detections", "mAP", "mAPH");
    for (const VariantSpec& spec : specs) {
        const PipelineConfig cfg = apply_variant(base, spec);
        const Pipeline pipeline(cfg, detect_weights(cfg, a.weights), workers);
        EvalAccumulator acc;
        const size_t total =
            run_detect_pass(pipeline, a.manifest, entries, (fs::path(a.outdir) / spec.name).string(),
                            a.loss_report, &acc, cfg.eval);
        const EvalResult res = compute_ap_aph(acc.dets, acc.num_gt);
        std::printf("%-12s %8zu %12zu %8.1f %8.1f\n", spec.name.c_str(), entries.size(), total,
                    res.map * 100.0, res.maph * 100.0);
    }
    return 0;
}

// ---- bench ----

struct BenchArgs {
    CommonArgs common;
    std::string manifest;
    std::string weights;
    std::string variants = "centeratt";
    std::string output;
    int runs = 10;
    int warmup = 2;
    double budget_ms = 0.0;
    bool oracle = false;
    bool fp16 = false;
    bool fold_bn = false;
};

int cmd_bench(const BenchArgs& a) {
    const std::vector<ManifestEntry> entries = read_manifest(a.manifest);
    if (entries.empty()) {
        std::fprintf(stderr, "error: manifest %s lists no scenes\n", a.manifest.c_str());
        return kExitUsage;
    }
    const int workers = resolve_workers(a.common.workers);

    PipelineConfig base = make_config(a.common);
    if (a.oracle) base.mode = BackboneMode::kOracle;
    if (a.fp16) base.precision = Precision::kHalf;
    if (a.fold_bn) base.fold_bn = true;
    if (base.mode == BackboneMode::kLearned && a.weights.empty()) {
        std::fprintf(stderr, "error: learned mode needs --weights or --oracle\n");
        return kExitUsage;
    }

    std::vector<std::pair<std::string, std::string>> resolved;
    for (const ManifestEntry& entry : entries) {
        resolved.emplace_back(resolve_path(a.manifest, entry.cloud_path),
                              resolve_path(a.manifest, entry.label_path));
    }

    std::vector<LatencyReport> reports;
    for (const VariantSpec& spec : parse_variants(a.variants)) {
        const PipelineConfig cfg = apply_variant(base, spec);
        const Pipeline pipeline(cfg, a.weights.empty() ? init_weights(cfg, cfg.seed)
                                                       : load_weights(a.weights),
                                workers);

        LatencyReport report = run_profile(
            [&](StageTimer& timer) {
                for (const auto& [cloud, labels] : resolved) {
                    pipeline.run_staged(cloud, labels, timer);
                }
            },
            static_cast<size_t>(a.runs), static_cast<size_t>(a.warmup), spec.name);

        EvalAccumulator acc;
        for (const ManifestEntry& entry : entries) {
            const Scene scene = load_scene(a.manifest, entry);
            acc.add_scene(pipeline.run(scene), scene.boxes, cfg.eval);
        }
        report.quality = compute_ap_aph(acc.dets, acc.num_gt).maph * 100.0;
        reports.push_back(std::move(report));
    }

    std::printf("%s", format_latency_table(reports).c_str());
    if (a.budget_ms > 0.0) {
        for (const LatencyReport& r : reports) {
            std::printf("budget %.1f ms: %s %s (overall mean %.1f ms)\n", a.budget_ms,
                        r.variant.c_str(), r.overall_mean() <= a.budget_ms ? "within" : "over",
                        r.overall_mean());
        }
    }
    if (!a.output.empty()) {
        write_latency_csv(a.output, reports);
        std::printf("wrote %s\n", a.output.c_str());
    }
    return 0;
}

// ---- eval ----

struct EvalArgs {
    CommonArgs common;
    std::string manifest;
    std::string detections;
    std::string output;
};

int cmd_eval(const EvalArgs& a) {
    const PipelineConfig cfg = make_config(a.common);
    const std::vector<ManifestEntry> entries = read_manifest(a.manifest);

    std::vector<std::string> missing;
    for (const ManifestEntry& entry : entries) {
        if (!fs::exists(fs::path(a.detections) / (scene_id(entry) + ".det.txt"))) {
            missing.push_back(scene_id(entry));
        }
    }
    if (!missing.empty()) {
        std::string joined;
        for (const std::string& id : missing) {
            if (!joined.empty()) joined += ", ";
            joined += id;
        }
        throw IoError("missing detections for " + std::to_string(missing.size()) +
                      " scene(s): " + joined);
    }

    EvalAccumulator acc;
    for (const ManifestEntry& entry : entries) {
        const std::vector<Box3D> gts = load_labels(resolve_path(a.manifest, entry.label_path));
        const std::vector<Box3D> dets =
            load_labels((fs::path(a.detections) / (scene_id(entry) + ".det.txt")).string());
        acc.add_scene(dets, gts, cfg.eval);
    }
    const EvalResult res = compute_ap_aph(acc.dets, acc.num_gt);
    std::printf("%s", format_eval_table(res).c_str());
    if (!a.output.empty()) {
        write_eval_csv(a.output, res);
        std::printf("wrote %s\n", a.output.c_str());
    }
    return 0;
}

// ---- fold-bn ----

struct FoldArgs {
    std::string weights;
    std::string output;
};

int cmd_fold_bn(const FoldArgs& a) {
    const WeightStore store = load_weights(a.weights);
    const WeightStore folded = fold_pipeline_batchnorm(store);
    save_weights(a.output, folded);
    std::printf("folded %zu tensors down to %zu, wrote %s\n", store.size(), folded.size(),
                a.output.c_str());
    return 0;
}

// ---- compare-precision ----

struct CompareArgs {
    CommonArgs common;
    std::string manifest;
    std::string weights;
    std::string output;
    double tolerance = 0.1;
    bool oracle = false;
};

int cmd_compare_precision(const CompareArgs& a) {
    PipelineConfig cfg = make_config(a.common);
    if (a.oracle) cfg.mode = BackboneMode::kOracle;
    if (cfg.mode == BackboneMode::kLearned && a.weights.empty()) {
        std::fprintf(stderr, "error: learned mode needs --weights or --oracle\n");
        return kExitUsage;
    }
    const int workers = resolve_workers(a.common.workers);
    const std::vector<ManifestEntry> entries = read_manifest(a.manifest);

    std::vector<Scene> scenes;
    for (const ManifestEntry& entry : entries) scenes.push_back(load_scene(a.manifest, entry));

    const WeightStore store =
        a.weights.empty() ? init_weights(cfg, cfg.seed) : load_weights(a.weights);
    PipelineConfig cfg16 = cfg;
    cfg16.precision = Precision::kHalf;
    cfg.precision = Precision::kFloat32;

    const Pipeline full(cfg, store, workers);
    const Pipeline half(cfg16, store, workers);
    const EquivalenceReport report = equivalence_check(
        [&](const Scene& s) { return full.run(s); }, [&](const Scene& s) { return half.run(s); },
        scenes, a.tolerance);

    std::printf("%s", format_equivalence_table(report).c_str());
    if (!a.output.empty()) {
        write_equivalence_csv(a.output, report);
        std::printf("wrote %s\n", a.output.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic LiDAR detection pipeline: two-stage center-based detector with "
                 "attention refinement, latency profiling and AP/APH evaluation"};
    app.require_subcommand(1);

    GenerateArgs gen;
    CLI::App* c_gen = app.add_subcommand("generate", "generate synthetic scenes plus a manifest");
    add_common(c_gen, gen.common);
    c_gen->add_option("-o,--output", gen.outdir, "output directory")->required();
    c_gen->add_option("-n,--count", gen.count, "number of scenes")->check(CLI::NonNegativeNumber);

    InitArgs init;
    CLI::App* c_init = app.add_subcommand("init", "write randomly initialized pipeline weights");
    add_common(c_init, init.common);
    c_init->add_option("-o,--output", init.output, "weight file to write")->required();

    DetectArgs det;
    CLI::App* c_det = app.add_subcommand("detect", "run detection over a scene manifest");
    add_common(c_det, det.common);
    c_det->add_option("-m,--manifest", det.manifest, "scene manifest")->required();
    c_det->add_option("-o,--output", det.outdir, "detection output directory")->required();
    CLI::Option* det_weights_opt =
        c_det->add_option("--weights", det.weights, "weight file (required in learned mode)");
    c_det->add_flag("--oracle", det.oracle, "decode ground-truth target maps instead of the net");
    c_det->add_flag("--fpn", det.fpn, "enable the multi-scale neck");
    CLI::Option* no_ss = c_det->add_flag("--no-second-stage", det.no_second_stage,
                                         "stop after the center heatmap stage");
    c_det->add_flag("--fp16", det.fp16, "run network compute in emulated half precision");
    c_det->add_flag("--fold-bn", det.fold_bn, "fold batch norm into conv weights first");
    c_det->add_flag("--loss-report", det.loss_report,
                    "also report matching-based second-stage losses vs ground truth");
    c_det->add_option("--score-threshold", det.score_threshold, "heatmap score cutoff")
        ->default_val(0.1)
        ->check(CLI::Range(0.0, 1.0));
    c_det->add_option("--variants", det.variants,
                      "comparison grid from {baseline,centeratt,fpn,both}, or `all`; "
                      "each variant re-derives its weights from the seed")
        ->excludes(no_ss)
        ->excludes(det_weights_opt);

    BenchArgs bench;
    CLI::App* c_bench = app.add_subcommand("bench", "profile per-stage latency over a manifest");
    add_common(c_bench, bench.common);
    c_bench->add_option("-m,--manifest", bench.manifest, "scene manifest")->required();
    c_bench->add_option("--weights", bench.weights, "weight file (required in learned mode)");
    c_bench->add_option("-r,--runs", bench.runs, "measured runs")->check(CLI::PositiveNumber);
    c_bench->add_option("--warmup", bench.warmup, "discarded warmup runs")
        ->check(CLI::NonNegativeNumber);
    c_bench->add_option("--variants", bench.variants,
                        "comparison grid from {baseline,centeratt,fpn,both}, or `all`");
    c_bench->add_option("-o,--output", bench.output, "latency CSV path");
    c_bench->add_option("--budget-ms", bench.budget_ms,
                        "report (not enforce) whether overall mean fits this budget");
    c_bench->add_flag("--oracle", bench.oracle, "profile the oracle decode path");
    c_bench->add_flag("--fp16", bench.fp16, "profile emulated half precision");
    c_bench->add_flag("--fold-bn", bench.fold_bn, "fold batch norm before profiling");

    EvalArgs ev;
    CLI::App* c_eval = app.add_subcommand("eval", "score detection files against a manifest");
    add_common(c_eval, ev.common);
    c_eval->add_option("-m,--manifest", ev.manifest, "scene manifest")->required();
    c_eval->add_option("-d,--detections", ev.detections, "directory of .det.txt files")->required();
    c_eval->add_option("-o,--output", ev.output, "metric CSV path");

    FoldArgs fold;
    CLI::App* c_fold = app.add_subcommand("fold-bn", "fold batch norm groups into conv weights");
    c_fold->add_option("--weights", fold.weights, "input weight file")->required();
    c_fold->add_option("-o,--output", fold.output, "output weight file")->required();

    CompareArgs cmp;
    CLI::App* c_cmp = app.add_subcommand("compare-precision",
                                         "compare fp32 and emulated fp16 detections");
    add_common(c_cmp, cmp.common);
    c_cmp->add_option("-m,--manifest", cmp.manifest, "scene manifest")->required();
    c_cmp->add_option("--weights", cmp.weights, "weight file (required in learned mode)");
    c_cmp->add_option("--tolerance", cmp.tolerance, "max relative divergence counted as a pass");
    c_cmp->add_option("-o,--output", cmp.output, "report CSV path");
    c_cmp->add_flag("--oracle", cmp.oracle, "compare on the oracle decode path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (c_gen->parsed()) return cmd_generate(gen);
        if (c_init->parsed()) return cmd_init(init);
        if (c_det->parsed()) return cmd_detect(det);
        if (c_bench->parsed()) return cmd_bench(bench);
        if (c_eval->parsed()) return cmd_eval(ev);
        if (c_fold->parsed()) return cmd_fold_bn(fold);
        if (c_cmp->parsed()) return cmd_compare_precision(cmp);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return kExitIo;
    } catch (const ShapeError& e) {
        std::fprintf(stderr, "shape error: %s\n", e.what());
        return kExitShape;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
