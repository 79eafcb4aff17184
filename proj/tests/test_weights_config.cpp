#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "centeratt/config.hpp"
#include "centeratt/errors.hpp"
#include "centeratt/fp16.hpp"
#include "centeratt/pipeline.hpp"
#include "centeratt/rng.hpp"
#include "centeratt/weights.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace centeratt;

TEST_CASE("weight files round-trip bit-exactly") {
    Rng rng(111);
    WeightStore store;
    store["a.weight"] = testutil::random_tensor(rng, {3, 4});
    store["a.bias"] = testutil::random_tensor(rng, {3});
    store["deep.block0.conv.weight"] = testutil::random_tensor(rng, {2, 2, 3, 3});
    Tensor half = testutil::random_tensor(rng, {16});
    half = quantize_fp16(half);
    store["h.weight"] = half;

    const std::string path = testutil::fresh_dir("weights") + "/w.catw";
    save_weights(path, store);
    const WeightStore back = load_weights(path);
    REQUIRE(back.size() == store.size());
    for (const auto& [name, t] : store) {
        REQUIRE(back.count(name) == 1);
        const Tensor& b = back.at(name);
        CHECK(b.shape == t.shape);
        CHECK(b.precision == t.precision);
        CHECK(b.data == t.data);
    }
    CHECK(back.at("h.weight").precision == Precision::kHalf);
    CHECK(back.at("h.weight").is_half_clean());
}

TEST_CASE("weight io failure modes") {
    CHECK_THROWS_AS(load_weights("/nonexistent/dir/w.catw"), IoError);
    const std::string dir = testutil::fresh_dir("badweights");
    const std::string path = dir + "/bad.catw";
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPE";
        const uint32_t zeros[2] = {0, 0};
        f.write(reinterpret_cast<const char*>(zeros), sizeof(zeros));
    }
    CHECK_THROWS_AS(load_weights(path), IoError);
    {
        std::ofstream f(dir + "/trunc.catw", std::ios::binary);
        f << "CATW";  // header cut short
    }
    CHECK_THROWS_AS(load_weights(dir + "/trunc.catw"), IoError);
}

TEST_CASE("weight lookup names the missing tensor") {
    WeightStore store;
    store["present.weight"] = Tensor::zeros({1});
    CHECK(has_weight(store, "present.weight"));
    CHECK_FALSE(has_weight(store, "absent.weight"));
    CHECK_NOTHROW(fetch_weight(store, "present.weight"));
    try {
        fetch_weight(store, "absent.weight");
        FAIL("expected a throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("absent.weight") != std::string::npos);
    }
}

TEST_CASE("config text parses every section") {
    const std::string text = R"(# detection range
voxel.x_min = -12.8
voxel.x_max = 12.8
voxel.y_min = -12.8
voxel.y_max = 12.8

mode = oracle
precision = fp16
second_stage = baseline
voxel_stage = preprocess
use_fpn = true
fold_bn = true
seed = 99

head.score_threshold = 0.25
head.max_proposals = 64

backbone.channels = 8, 16
backbone.blocks = 1, 1
backbone.fpn_scales = 1, 2
roi.scales = 1, 2
roi.mlp_dims = 32, 64
att.model_dim = 64
att.pe_dim = 64
att.num_heads = 4
att.ffn_dim = 128
att.layers = 2

match.lambda_iou = 2.0
eval.iou_vehicle = 0.6
scene.vehicles = 5
scene.surface_noise = 0.01
)";
    const PipelineConfig c = parse_config(text);
    CHECK(c.mode == BackboneMode::kOracle);
    CHECK(c.precision == Precision::kHalf);
    CHECK(c.second_stage == SecondStage::kBaseline);
    CHECK(c.voxel_stage == VoxelStage::kPreprocess);
    CHECK(c.use_fpn);
    CHECK(c.fold_bn);
    CHECK(c.seed == 99);
    CHECK(c.voxel.x_min == doctest::Approx(-12.8));
    CHECK(c.voxel.dim_x() == 256);
    CHECK(c.head.score_threshold == doctest::Approx(0.25));
    CHECK(c.head.max_proposals == 64);
    CHECK(c.backbone.channels == std::vector<int>{8, 16});
    CHECK(c.backbone.fpn_scales == std::vector<int>{1, 2});
    CHECK(c.roi.scales == std::vector<int>{1, 2});
    CHECK(c.roi.mlp_dims == std::vector<int>{32, 64});
    CHECK(c.roi.model_dim == 64);  // follows att.model_dim
    CHECK(c.attention.num_heads == 4);
    CHECK(c.attention.layers == 2);
    CHECK(c.match.lambda_iou == doctest::Approx(2.0));
    CHECK(c.eval.iou_thresholds[0] == doctest::Approx(0.6));
    CHECK(c.scene.vehicles == 5);
    CHECK(c.scene.surface_noise == doctest::Approx(0.01));
}

TEST_CASE("config parse errors name the offence") {
    CHECK_THROWS_AS(parse_config("nonsense_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("just some words\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("= 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("seed = notanumber\n"), ConfigError);
    try {
        parse_config("# fine\n\nbroken line here\n");
        FAIL("expected a throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), IoError);
}

TEST_CASE("cross-field validation catches inconsistent setups") {
    PipelineConfig c = desk_config();
    c.roi.scales = {2};  // no fpn: only stride 1 exists
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk_config();
    c.use_fpn = true;
    c.roi.scales = {8};  // beyond the configured pyramid
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk_config();
    c.attention.pe_dim = 64;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk_config();
    c.roi.model_dim = 32;
    c.roi.mlp_dims.back() = 32;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk_config();
    c.voxel.x_max = 25.6 + 0.15;  // 513 cells, max stride 4
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(desk_config().validate());
}

TEST_CASE("learned init covers the configured tensors deterministically") {
    PipelineConfig c = desk_config();
    const WeightStore a = init_weights(c, 7);
    const WeightStore b = init_weights(c, 7);
    REQUIRE(a.size() == b.size());
    for (const auto& [name, t] : a) {
        CHECK(b.at(name).data == t.data);
    }
    const WeightStore other = init_weights(c, 8);
    bool any_differs = false;
    for (const auto& [name, t] : a) {
        if (other.at(name).data != t.data) any_differs = true;
    }
    CHECK(any_differs);

    CHECK(has_weight(a, "backbone.stem.weight"));
    CHECK(has_weight(a, "backbone.stage0.block0.conv.weight"));
    CHECK(has_weight(a, "att.q.weight"));
    CHECK(has_weight(a, "att.ffn1.weight"));
    CHECK(has_weight(a, "roi.mlp.layer0.weight"));
    CHECK(has_weight(a, "cls_head.weight"));
    CHECK(has_weight(a, "reg_head.weight"));
    CHECK(has_weight(a, "base2.cls.weight"));
}

TEST_CASE("oracle init zeroes the second stage and skips the backbone") {
    PipelineConfig c = desk_config();
    c.mode = BackboneMode::kOracle;
    const WeightStore w = init_weights(c, 3);
    CHECK_FALSE(has_weight(w, "backbone.stem.weight"));
    size_t nonzero = 0;
    for (const auto& [name, t] : w) {
        for (float v : t.data) nonzero += v != 0.0f ? 1 : 0;
    }
    CHECK(nonzero == 0);
    // roi input width follows the packed-plane channel count in oracle mode
    const Tensor& first = w.at("roi.mlp.layer0.weight");
    CHECK(first.dim(1) == 5u * 1u * 11u);
}
