#include <cmath>
#include <vector>

#include "centeratt/box_delta.hpp"
#include "centeratt/config.hpp"
#include "centeratt/errors.hpp"
#include "centeratt/pipeline.hpp"
#include "centeratt/roi_head.hpp"
#include "centeratt/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace centeratt;

namespace {

// oracle-mode desk preset: feature maps carry 11 packed target channels
PipelineConfig oracle_cfg() {
    PipelineConfig pc = desk_config();
    pc.mode = BackboneMode::kOracle;
    return pc;
}

FeatureMap constant_map(size_t c, size_t h, size_t w, float fill, int stride) {
    FeatureMap m;
    m.tensor = Tensor::full({c, h, w}, fill);
    m.stride = stride;
    return m;
}

}  // namespace

TEST_CASE("face centers sit on the box axes") {
    Box3D b;
    b.cx = 2.0;
    b.cy = -1.0;
    b.l = 4.0;
    b.w = 2.0;
    b.yaw = 0.0;
    const auto pts = face_centers(b);
    CHECK(pts[0].x == doctest::Approx(2.0));
    CHECK(pts[0].y == doctest::Approx(-1.0));
    CHECK(pts[1].x == doctest::Approx(4.0));  // +l/2 along x at yaw 0
    CHECK(pts[1].y == doctest::Approx(-1.0));
    CHECK(pts[2].x == doctest::Approx(0.0));
    CHECK(pts[3].x == doctest::Approx(2.0));  // +w/2 along y
    CHECK(pts[3].y == doctest::Approx(0.0));
    CHECK(pts[4].y == doctest::Approx(-2.0));

    b.yaw = M_PI / 2.0;  // quarter turn maps the length axis onto y
    const auto rot = face_centers(b);
    CHECK(rot[1].x == doctest::Approx(2.0));
    CHECK(rot[1].y == doctest::Approx(1.0));
    CHECK(rot[3].x == doctest::Approx(1.0));
    CHECK(rot[3].y == doctest::Approx(-1.0));
}

TEST_CASE("roi config validation") {
    RoiConfig cfg;
    cfg.scales.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RoiConfig{};
    cfg.mlp_dims = {64};  // must end at model_dim
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RoiConfig{};
    cfg.mlp_dims = {64, 128};
    cfg.model_dim = 128;
    cfg.validate();
}

TEST_CASE("feature extraction samples the configured scales") {
    const PipelineConfig pc = oracle_cfg();
    const WeightStore store = init_weights(pc, 11);
    std::vector<FeatureMap> maps = {constant_map(11, 64, 64, 0.0f, 1)};
    std::vector<Box3D> props(3);
    for (auto& b : props) {
        b.cx = 0.0;
        b.cy = 0.0;
        b.l = 2.0;
        b.w = 1.0;
        b.h = 1.0;
    }
    const Tensor feats =
        extract_roi_features(props, maps, pc.roi, pc.voxel, store);
    REQUIRE(feats.shape ==
            std::vector<size_t>{3, static_cast<size_t>(pc.roi.model_dim)});
    // identical proposals over a constant map produce identical rows
    for (size_t j = 0; j < feats.dim(1); ++j) {
        CHECK(feats(0, j) == feats(1, j));
        CHECK(feats(0, j) == feats(2, j));
    }

    // asking for a stride no map carries is a shape error
    RoiConfig two_scales = pc.roi;
    two_scales.scales = {1, 2};
    CHECK_THROWS_AS(extract_roi_features(props, maps, two_scales, pc.voxel, store),
                    ShapeError);
}

TEST_CASE("zero second-stage weights make an identity refinement") {
    const PipelineConfig pc = oracle_cfg();
    const WeightStore store = init_weights(pc, 13);  // oracle mode: all zero
    Rng rng(81);
    std::vector<Box3D> props;
    for (int i = 0; i < 4; ++i) {
        Box3D b = testutil::random_box(rng, 20.0);
        b.score = rng.uniform01();
        props.push_back(b);
    }
    std::vector<FeatureMap> maps = {constant_map(11, 64, 64, 0.3f, 1)};
    const Tensor feats = extract_roi_features(props, maps, pc.roi, pc.voxel, store);
    Tensor attn;
    const std::vector<SecondStagePrediction> preds =
        centeratt_forward(feats, props, pc.voxel, pc.attention, store, &attn);
    REQUIRE(preds.size() == props.size());
    std::vector<std::array<double, 8>> deltas;
    for (const auto& p : preds) {
        for (double s : p.class_probs) CHECK(s == doctest::Approx(0.5));
        for (double d : p.deltas) CHECK(d == 0.0);
        deltas.push_back(p.deltas);
    }
    const std::vector<Box3D> refined = refine_boxes(props, deltas);
    for (size_t i = 0; i < props.size(); ++i) {
        CHECK(refined[i].cx == doctest::Approx(props[i].cx));
        CHECK(refined[i].cy == doctest::Approx(props[i].cy));
        CHECK(refined[i].l == doctest::Approx(props[i].l));
        CHECK(refined[i].yaw == doctest::Approx(props[i].yaw).epsilon(1e-9));
        CHECK(refined[i].score == props[i].score);
        CHECK(refined[i].cls == props[i].cls);
    }
    // attention over n tokens: every row of every head sums to one
    REQUIRE(attn.rank() == 3);
    for (size_t h = 0; h < attn.dim(0); ++h) {
        for (size_t i = 0; i < attn.dim(1); ++i) {
            double row = 0.0;
            for (size_t j = 0; j < attn.dim(2); ++j) row += attn(h, i, j);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
        }
    }
}

TEST_CASE("a single token attends only to itself") {
    const PipelineConfig pc = oracle_cfg();
    const WeightStore store = init_weights(pc, 17);
    std::vector<Box3D> props(1);
    props[0].l = props[0].w = props[0].h = 1.0;
    std::vector<FeatureMap> maps = {constant_map(11, 64, 64, 0.1f, 1)};
    const Tensor feats = extract_roi_features(props, maps, pc.roi, pc.voxel, store);
    Tensor attn;
    centeratt_forward(feats, props, pc.voxel, pc.attention, store, &attn);
    REQUIRE(attn.shape == std::vector<size_t>{static_cast<size_t>(pc.attention.num_heads), 1, 1});
    for (float v : attn.data) CHECK(v == 1.0f);
}

TEST_CASE("no proposals short-circuits to an empty prediction set") {
    const PipelineConfig pc = oracle_cfg();
    const WeightStore store = init_weights(pc, 19);
    const Tensor feats = Tensor::zeros({0, static_cast<size_t>(pc.roi.model_dim)});
    CHECK(centeratt_forward(feats, {}, pc.voxel, pc.attention, store).empty());
    CHECK(second_stage_mlp_forward(feats, store).empty());
    CHECK(refine_boxes({}, {}).empty());
}

TEST_CASE("plain mlp head broadcasts one sigmoid over the classes") {
    PipelineConfig pc = oracle_cfg();
    pc.second_stage = SecondStage::kBaseline;
    const WeightStore store = init_weights(pc, 23);
    std::vector<Box3D> props(2);
    for (auto& b : props) b.l = b.w = b.h = 1.0;
    std::vector<FeatureMap> maps = {constant_map(11, 64, 64, 0.2f, 1)};
    const Tensor feats = extract_roi_features(props, maps, pc.roi, pc.voxel, store);
    const std::vector<SecondStagePrediction> preds = second_stage_mlp_forward(feats, store);
    REQUIRE(preds.size() == 2);
    for (const auto& p : preds) {
        CHECK(p.class_probs[0] == p.class_probs[1]);
        CHECK(p.class_probs[1] == p.class_probs[2]);
    }
}

TEST_CASE("box delta parameterization inverts exactly") {
    Rng rng(85);
    for (int i = 0; i < 50; ++i) {
        const Box3D src = testutil::random_box(rng);
        const Box3D dst = testutil::random_box(rng);
        const std::array<double, 8> d = box_deltas(src, dst);
        const Box3D back = apply_box_deltas(src, d);
        CHECK(back.cx == doctest::Approx(dst.cx).epsilon(1e-9));
        CHECK(back.cy == doctest::Approx(dst.cy).epsilon(1e-9));
        CHECK(back.cz == doctest::Approx(dst.cz).epsilon(1e-9));
        CHECK(back.l == doctest::Approx(dst.l).epsilon(1e-9));
        CHECK(back.w == doctest::Approx(dst.w).epsilon(1e-9));
        CHECK(back.h == doctest::Approx(dst.h).epsilon(1e-9));
        CHECK(std::fabs(wrap_angle(back.yaw - dst.yaw)) < 1e-9);
    }
}

TEST_CASE("refinement rejects mismatched delta counts") {
    std::vector<Box3D> props(2);
    CHECK_THROWS_AS(refine_boxes(props, std::vector<std::array<double, 8>>(1)), ShapeError);
}

TEST_CASE("score fusion takes the geometric mean of the stages") {
    CHECK(fuse_scores(0.9, 0.4) == doctest::Approx(std::sqrt(0.36)));
    CHECK(fuse_scores(1.0, 1.0) == doctest::Approx(1.0));
    CHECK(fuse_scores(0.5, 0.0) == doctest::Approx(0.0));
    SecondStagePrediction p;
    p.class_probs = {0.2, 0.7, 0.4};
    CHECK(stage2_score(p) == doctest::Approx(0.7));
}
