#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "centeratt/config.hpp"
#include "centeratt/errors.hpp"
#include "centeratt/pipeline.hpp"
#include "centeratt/rng.hpp"
#include "centeratt/scene.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace centeratt;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
    static int invocation = 0;
    const std::string capture =
        (fs::temp_directory_path() / ("centeratt_cli_out_" + std::to_string(invocation++)))
            .string();
    const std::string cmd =
        std::string(CENTERATT_CLI_PATH) + " " + args + " > " + capture + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    std::ifstream in(capture);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    fs::remove(capture);
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

size_t count_lines(const std::string& text) {
    size_t n = 0;
    for (char c : text) n += c == '\n' ? 1 : 0;
    return n;
}

// small learned setup keeping net forward passes fast; written per test dir
std::string write_small_config(const std::string& dir) {
    const std::string path = dir + "/small.cfg";
    std::ofstream f(path);
    f << "voxel.x_min = -9.6\nvoxel.x_max = 9.6\n"
         "voxel.y_min = -9.6\nvoxel.y_max = 9.6\n"
         "scene.x_min = -8\nscene.x_max = 8\n"
         "scene.y_min = -8\nscene.y_max = 8\n"
         "scene.vehicles = 2\nscene.pedestrians = 1\nscene.cyclists = 1\n"
         "scene.points_per_object = 128\nscene.background_points = 512\n"
         "backbone.channels = 8, 12\nbackbone.blocks = 1, 1\n"
         "backbone.fpn_scales = 1, 2\n"
         "att.model_dim = 32\natt.pe_dim = 32\natt.num_heads = 4\natt.ffn_dim = 64\n"
         "roi.mlp_dims = 32, 32\n";
    return path;
}

PipelineConfig oracle_desk() {
    PipelineConfig cfg = desk_config();
    cfg.mode = BackboneMode::kOracle;
    cfg.scene.vehicles = 3;
    cfg.scene.pedestrians = 2;
    cfg.scene.cyclists = 1;
    return cfg;
}

}  // namespace

TEST_CASE("oracle pipeline recovers every planted box") {
    PipelineConfig cfg = oracle_desk();
    const Pipeline pipe(cfg, init_weights(cfg, 1), 4);
    for (uint64_t seed : {5u, 6u, 7u}) {
        SceneConfig sc = cfg.scene;
        sc.seed = seed;
        const Scene scene = generate_scene(sc);
        const std::vector<Box3D> dets = pipe.run(scene);
        REQUIRE(dets.size() == scene.boxes.size());
        for (const Box3D& gt : scene.boxes) {
            double best = 1e18;
            const Box3D* hit = nullptr;
            for (const Box3D& d : dets) {
                const double dd = std::hypot(gt.cx - d.cx, gt.cy - d.cy);
                if (dd < best) {
                    best = dd;
                    hit = &d;
                }
            }
            REQUIRE(hit != nullptr);
            CHECK(best < 0.5 * cfg.voxel.voxel_x);
            CHECK(std::fabs(hit->l - gt.l) <= 1e-6 * gt.l);
            CHECK(std::fabs(hit->w - gt.w) <= 1e-6 * gt.w);
            CHECK(std::fabs(hit->h - gt.h) <= 1e-6 * gt.h);
            CHECK(std::fabs(wrap_angle(hit->yaw - gt.yaw)) < 1e-6);
            CHECK(hit->cls == gt.cls);
        }
    }
}

TEST_CASE("oracle loss report reflects the untrained second stage") {
    PipelineConfig cfg = oracle_desk();
    const Pipeline pipe(cfg, init_weights(cfg, 1), 4);
    SceneConfig sc = cfg.scene;
    sc.seed = 21;
    const SceneDetections r = pipe.run_with_loss(generate_scene(sc));
    REQUIRE(r.has_loss);
    CHECK(r.loss.matched == r.boxes.size());
    // every stage-2 sigmoid sits at 0.5, so each bce term is ln 2
    CHECK(r.loss.cls_loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    // proposals differ from gt only by the sub-voxel decode error
    CHECK(r.loss.reg_loss < 0.01);
}

TEST_CASE("staged run detects the same boxes under both attribution modes") {
    PipelineConfig cfg = oracle_desk();
    const std::string dir = testutil::fresh_dir("staged");
    SceneConfig sc = cfg.scene;
    sc.seed = 31;
    const Scene scene = generate_scene(sc);
    save_point_cloud(dir + "/s.catp", scene.points);
    save_labels(dir + "/s.txt", scene.boxes);

    for (VoxelStage vs : {VoxelStage::kPreprocess, VoxelStage::kModel}) {
        cfg.voxel_stage = vs;
        const Pipeline pipe(cfg, init_weights(cfg, 1), 4);
        const std::vector<Box3D> plain = pipe.run(scene);
        StageTimer timer;
        const std::vector<Box3D> staged = pipe.run_staged(dir + "/s.catp", dir + "/s.txt", timer);
        REQUIRE(staged.size() == plain.size());
        for (size_t i = 0; i < staged.size(); ++i) {
            CHECK(staged[i].cx == plain[i].cx);
            CHECK(staged[i].cy == plain[i].cy);
            CHECK(staged[i].score == plain[i].score);
        }
        double total = 0.0;
        for (double ms : timer.run_ms()) {
            CHECK(ms >= 0.0);
            total += ms;
        }
        CHECK(total > 0.0);
    }
}

TEST_CASE("variant grid parsing and application") {
    const std::vector<VariantSpec> all = parse_variants("all");
    REQUIRE(all.size() == 4);
    CHECK(all[0].name == "baseline");
    CHECK(all[1].name == "centeratt");
    CHECK(all[2].name == "fpn");
    CHECK(all[3].name == "both");
    CHECK_FALSE(all[0].centeratt);
    CHECK(all[1].centeratt);
    CHECK(all[3].centeratt);
    CHECK(all[3].fpn);

    const std::vector<VariantSpec> two = parse_variants("fpn, baseline");
    REQUIRE(two.size() == 2);
    CHECK(two[0].name == "fpn");
    CHECK_THROWS_AS(parse_variants("warp"), ConfigError);
    CHECK_THROWS_AS(parse_variants(""), ConfigError);

    const PipelineConfig base = desk_config();
    const PipelineConfig b = apply_variant(base, all[0]);
    CHECK(b.second_stage == SecondStage::kBaseline);
    CHECK_FALSE(b.use_fpn);
    CHECK(b.roi.scales == std::vector<int>{1});
    const PipelineConfig f = apply_variant(base, all[2]);
    CHECK(f.second_stage == SecondStage::kBaseline);
    CHECK(f.use_fpn);
    CHECK(f.roi.scales == base.backbone.fpn_scales);
    const PipelineConfig both = apply_variant(base, all[3]);
    CHECK(both.second_stage == SecondStage::kCenterAtt);
    CHECK(both.use_fpn);
}

TEST_CASE("manifest entries resolve relative to the manifest file") {
    CHECK(resolve_path("/data/set/manifest.txt", "scene_0001.catp") ==
          "/data/set/scene_0001.catp");
    CHECK(resolve_path("/data/set/manifest.txt", "/abs/cloud.catp") == "/abs/cloud.catp");
    CHECK(resolve_path("manifest.txt", "scene_0001.catp") == "scene_0001.catp");
}

TEST_CASE("cli help documents every command and flag") {
    const CliResult top = run_cli("--help");
    CHECK(top.code == 0);
    for (const char* cmd :
         {"generate", "init", "detect", "bench", "eval", "fold-bn", "compare-precision"}) {
        CHECK(top.output.find(cmd) != std::string::npos);
    }
    const CliResult det = run_cli("detect --help");
    CHECK(det.code == 0);
    for (const char* flag : {"--manifest", "--output", "--weights", "--oracle", "--fpn",
                             "--no-second-stage", "--fp16", "--fold-bn", "--score-threshold",
                             "--variants", "--loss-report", "--config", "--workers", "--seed"}) {
        CHECK(det.output.find(flag) != std::string::npos);
    }
    const CliResult bench = run_cli("bench --help");
    CHECK(bench.code == 0);
    for (const char* flag : {"--runs", "--warmup", "--variants", "--budget-ms", "--output"}) {
        CHECK(bench.output.find(flag) != std::string::npos);
    }
    const CliResult ev = run_cli("eval --help");
    CHECK(ev.code == 0);
    CHECK(ev.output.find("--detections") != std::string::npos);

    // bare invocation and unknown commands are usage errors
    CHECK(run_cli("").code == 2);
    CHECK(run_cli("frobnicate").code == 2);
    CHECK(run_cli("detect").code == 2);  // missing required options
}

TEST_CASE("generate is deterministic and honours count zero") {
    const std::string a = testutil::fresh_dir("gen_a");
    const std::string b = testutil::fresh_dir("gen_b");
    CHECK(run_cli("generate -o " + a + " -n 2 --seed 9").code == 0);
    CHECK(run_cli("generate -o " + b + " -n 2 --seed 9").code == 0);
    for (const char* name : {"manifest.txt", "scene_0000.catp", "scene_0000.txt",
                             "scene_0001.catp", "scene_0001.txt"}) {
        CHECK(slurp(a + "/" + name) == slurp(b + "/" + name));
    }
    // different seed changes the points
    const std::string c = testutil::fresh_dir("gen_c");
    CHECK(run_cli("generate -o " + c + " -n 1 --seed 10").code == 0);
    CHECK(slurp(c + "/scene_0000.catp") != slurp(a + "/scene_0000.catp"));

    const std::string empty = testutil::fresh_dir("gen_empty");
    CHECK(run_cli("generate -o " + empty + " -n 0").code == 0);
    CHECK(fs::exists(empty + "/manifest.txt"));
    CHECK(load_manifest(empty + "/manifest.txt").empty());
}

TEST_CASE("oracle detections round-trip to a perfect score") {
    const std::string dir = testutil::fresh_dir("roundtrip");
    REQUIRE(run_cli("generate -o " + dir + "/scenes -n 3 --seed 4").code == 0);
    const std::string manifest = dir + "/scenes/manifest.txt";

    const CliResult det =
        run_cli("detect -m " + manifest + " -o " + dir + "/dets --oracle");
    CHECK(det.code == 0);
    for (int i = 0; i < 3; ++i) {
        char name[48];
        std::snprintf(name, sizeof name, "/dets/scene_%04d.det.txt", i);
        CHECK(fs::exists(dir + name));
    }

    const CliResult ev = run_cli("eval -m " + manifest + " -d " + dir + "/dets -o " +
                                 dir + "/metrics.csv");
    CHECK(ev.code == 0);
    CHECK(ev.output.find("mAP 100.0") != std::string::npos);
    CHECK(ev.output.find("mAPH 100.0") != std::string::npos);
    const std::string csv = slurp(dir + "/metrics.csv");
    CHECK(csv.find("mAP,100.0") != std::string::npos);

    // a second identical detect pass produces byte-identical files
    REQUIRE(run_cli("detect -m " + manifest + " -o " + dir + "/dets2 --oracle").code == 0);
    CHECK(slurp(dir + "/dets/scene_0000.det.txt") == slurp(dir + "/dets2/scene_0000.det.txt"));

    // skipping refinement still reproduces the planted boxes
    REQUIRE(run_cli("detect -m " + manifest + " -o " + dir +
                    "/dets3 --oracle --no-second-stage")
                .code == 0);
    const std::vector<Box3D> bare = load_labels(dir + "/dets3/scene_0000.det.txt");
    const std::vector<Box3D> gt = load_labels(dir + "/scenes/scene_0000.txt");
    REQUIRE(bare.size() == gt.size());
}

TEST_CASE("learned mode needs weights and respects the score threshold") {
    const std::string dir = testutil::fresh_dir("learned");
    const std::string cfg = write_small_config(dir);
    REQUIRE(run_cli("generate -c " + cfg + " -o " + dir + "/scenes -n 2 --seed 2").code == 0);
    const std::string manifest = dir + "/scenes/manifest.txt";

    // no weights in learned mode is a usage error
    CHECK(run_cli("detect -c " + cfg + " -m " + manifest + " -o " + dir + "/none").code == 2);

    REQUIRE(run_cli("init -c " + cfg + " -o " + dir + "/w.catw --seed 3").code == 0);
    const CliResult det = run_cli("detect -c " + cfg + " -m " + manifest + " -o " + dir +
                                  "/dets --weights " + dir + "/w.catw");
    CHECK(det.code == 0);

    // an untrained net cannot reach a sigmoid of exactly 1
    const CliResult none = run_cli("detect -c " + cfg + " -m " + manifest + " -o " + dir +
                                   "/empty --weights " + dir + "/w.catw --score-threshold 1.0");
    CHECK(none.code == 0);
    CHECK(none.output.find("wrote 0 detection(s)") != std::string::npos);
    CHECK(load_labels(dir + "/empty/scene_0000.det.txt").empty());

    // identical reruns are byte-identical in fp32
    REQUIRE(run_cli("detect -c " + cfg + " -m " + manifest + " -o " + dir +
                    "/dets_again --weights " + dir + "/w.catw")
                .code == 0);
    CHECK(slurp(dir + "/dets/scene_0000.det.txt") ==
          slurp(dir + "/dets_again/scene_0000.det.txt"));
}

TEST_CASE("eval reports every missing detection file at once") {
    const std::string dir = testutil::fresh_dir("missing");
    REQUIRE(run_cli("generate -o " + dir + "/scenes -n 3 --seed 8").code == 0);
    const std::string manifest = dir + "/scenes/manifest.txt";
    REQUIRE(run_cli("detect -m " + manifest + " -o " + dir + "/dets --oracle").code == 0);
    fs::remove(dir + "/dets/scene_0001.det.txt");
    fs::remove(dir + "/dets/scene_0002.det.txt");
    const CliResult ev = run_cli("eval -m " + manifest + " -d " + dir + "/dets");
    CHECK(ev.code == 4);
    CHECK(ev.output.find("scene_0001") != std::string::npos);
    CHECK(ev.output.find("scene_0002") != std::string::npos);
    CHECK(ev.output.find("scene_0000") == std::string::npos);
}

TEST_CASE("structured exit codes for bad inputs") {
    const std::string dir = testutil::fresh_dir("badinput");
    std::ofstream(dir + "/bad.cfg") << "voxel.x_min = -1\nvoxel.x_max = -2\n";
    CHECK(run_cli("generate -c " + dir + "/bad.cfg -o " + dir + "/out -n 1").code == 3);
    std::ofstream(dir + "/unknown.cfg") << "mystery.key = 1\n";
    CHECK(run_cli("generate -c " + dir + "/unknown.cfg -o " + dir + "/out -n 1").code == 3);
    CHECK(run_cli("detect -m " + dir + "/no_manifest.txt -o " + dir + "/out --oracle").code == 4);
    CHECK(run_cli("detect -m " + dir + "/no_manifest.txt -o " + dir +
                  "/out --oracle --score-threshold 2.0")
              .code == 2);  // rejected by the option validator
}

TEST_CASE("variant grid emits one comparison row per variant") {
    const std::string dir = testutil::fresh_dir("variants");
    REQUIRE(run_cli("generate -o " + dir + "/scenes -n 2 --seed 12").code == 0);
    const CliResult r = run_cli("detect -m " + dir + "/scenes/manifest.txt -o " + dir +
                                "/dets --oracle --variants all");
    CHECK(r.code == 0);
    for (const char* name : {"baseline", "centeratt", "fpn", "both"}) {
        CHECK(r.output.find(name) != std::string::npos);
        CHECK(fs::exists(dir + "/dets/" + name + "/scene_0000.det.txt"));
    }
    CHECK(count_lines(r.output) == 5);  // header plus four rows
    CHECK(r.output.find("100.0") != std::string::npos);

    // weights cannot be pinned across variants with different widths
    CHECK(run_cli("detect -m " + dir + "/scenes/manifest.txt -o " + dir +
                  "/dets --oracle --variants all --weights " + dir + "/w.catw")
              .code == 2);
}

TEST_CASE("bench writes the latency table and csv") {
    const std::string dir = testutil::fresh_dir("benchcli");
    REQUIRE(run_cli("generate -o " + dir + "/scenes -n 1 --seed 13").code == 0);
    const CliResult r = run_cli("bench -m " + dir + "/scenes/manifest.txt --oracle -r 3 "
                                "--warmup 1 --variants baseline,centeratt -o " +
                                dir + "/lat.csv --budget-ms 80");
    CHECK(r.code == 0);
    for (const char* stage : {"load data", "preprocess", "collate", "load to GPU", "model"}) {
        CHECK(r.output.find(stage) != std::string::npos);
    }
    CHECK(r.output.find("budget") != std::string::npos);
    const std::string csv = slurp(dir + "/lat.csv");
    CHECK(csv.find("variant,load_data,preprocess,collate,load_to_gpu,model,overall,quality") ==
          0);
    CHECK(count_lines(csv) == 3);
    CHECK(csv.find("baseline,") != std::string::npos);
    CHECK(csv.find("centeratt,") != std::string::npos);
}

TEST_CASE("fold-bn and compare-precision tool passes") {
    const std::string dir = testutil::fresh_dir("tools");
    const std::string cfg = write_small_config(dir);
    REQUIRE(run_cli("init -c " + cfg + " -o " + dir + "/w.catw --seed 5").code == 0);
    const CliResult fold =
        run_cli("fold-bn --weights " + dir + "/w.catw -o " + dir + "/folded.catw");
    CHECK(fold.code == 0);
    const WeightStore folded = load_weights(dir + "/folded.catw");
    for (const auto& [name, t] : folded) {
        CHECK(name.find(".bn.") == std::string::npos);
    }

    REQUIRE(run_cli("generate -c " + cfg + " -o " + dir + "/scenes -n 2 --seed 6").code == 0);
    const CliResult cmp = run_cli("compare-precision -c " + cfg + " -m " + dir +
                                  "/scenes/manifest.txt --weights " + dir +
                                  "/w.catw --tolerance 0.05 -o " + dir + "/equiv.csv");
    CHECK(cmp.code == 0);
    CHECK(cmp.output.find("score") != std::string::npos);
    CHECK(slurp(dir + "/equiv.csv").find("tensor,metric,value") == 0);
}
