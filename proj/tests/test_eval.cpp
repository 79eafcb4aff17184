#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "centeratt/errors.hpp"
#include "centeratt/eval.hpp"
#include "centeratt/ref/reference.hpp"
#include "centeratt/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace centeratt;

namespace {

Box3D det_at(double cx, double cy, ObjectClass cls, double score, double yaw = 0.0) {
    Box3D b;
    b.cx = cx;
    b.cy = cy;
    b.l = 4.0;
    b.w = 2.0;
    b.h = 1.5;
    b.yaw = yaw;
    b.cls = cls;
    b.score = score;
    return b;
}

std::vector<ScoredDet> random_dets(Rng& rng, size_t n) {
    std::vector<ScoredDet> dets(n);
    for (auto& d : dets) {
        d.score = rng.uniform01();
        d.tp = rng.uniform01() < 0.6;
        d.dyaw = rng.uniform(0.0, M_PI);
    }
    return dets;
}

}  // namespace

TEST_CASE("greedy matching is one-to-one, class-bound and thresholded") {
    const std::vector<Box3D> gts = {det_at(0, 0, ObjectClass::kVehicle, 1.0),
                                    det_at(10, 0, ObjectClass::kPedestrian, 1.0)};
    std::vector<Box3D> dets = {
        det_at(0.2, 0, ObjectClass::kVehicle, 0.9),     // matches gt 0
        det_at(0.4, 0, ObjectClass::kVehicle, 0.8),     // gt 0 taken: unmatched
        det_at(10.1, 0, ObjectClass::kVehicle, 0.7),    // wrong class
        det_at(10.1, 0, ObjectClass::kPedestrian, 0.6), // matches gt 1
        det_at(24, 24, ObjectClass::kVehicle, 0.5),     // no overlap
    };
    const std::vector<DetMatch> m = match_detections(dets, gts, 0.3);
    REQUIRE(m.size() == 5);
    CHECK(m[0].matched);
    CHECK(m[0].gt == 0);
    CHECK(m[0].iou > 0.3);
    CHECK_FALSE(m[1].matched);
    CHECK_FALSE(m[2].matched);
    CHECK(m[3].matched);
    CHECK(m[3].gt == 1);
    CHECK_FALSE(m[4].matched);

    // tight threshold rejects the offset match
    const std::vector<DetMatch> strict = match_detections(dets, gts, 0.99);
    CHECK_FALSE(strict[0].matched);
}

TEST_CASE("heading error enters the match in [0, pi]") {
    const std::vector<Box3D> gts = {det_at(0, 0, ObjectClass::kVehicle, 1.0, 0.0)};
    const std::vector<Box3D> dets = {det_at(0, 0, ObjectClass::kVehicle, 0.9, 3.0)};
    const std::vector<DetMatch> m = match_detections(dets, gts, 0.5);
    REQUIRE(m[0].matched);
    CHECK(m[0].dyaw == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(m[0].dyaw >= 0.0);
    CHECK(m[0].dyaw <= M_PI);

    // past the half turn the wrap brings the error back down
    const std::vector<Box3D> spun = {det_at(0, 0, ObjectClass::kVehicle, 0.9, 3.3)};
    const std::vector<DetMatch> mw = match_detections(spun, gts, 0.5);
    REQUIRE(mw[0].matched);
    CHECK(mw[0].dyaw == doctest::Approx(2.0 * M_PI - 3.3).epsilon(1e-9));
}

TEST_CASE("a single perfect detection scores full marks") {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    dets[0] = {{0.9, true, 0.0}};
    const EvalResult r = compute_ap_aph(dets, {1, 0, 0});
    CHECK(r.per_class[0].evaluated);
    CHECK(r.per_class[0].ap == doctest::Approx(1.0));
    CHECK(r.per_class[0].aph == doctest::Approx(1.0));
    CHECK_FALSE(r.per_class[1].evaluated);
    CHECK(r.classes_evaluated == 1);
    CHECK(r.map == doctest::Approx(1.0));
    CHECK(r.maph == doctest::Approx(1.0));
}

TEST_CASE("a quarter-turn heading error halves the heading-weighted score") {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    dets[0] = {{0.9, true, M_PI / 2.0}};
    const EvalResult r = compute_ap_aph(dets, {1, 0, 0});
    CHECK(r.per_class[0].ap == doctest::Approx(1.0));
    CHECK(r.per_class[0].aph == 0.5 * r.per_class[0].ap);
}

TEST_CASE("hand case: one fp between two tps") {
    // sorted by score: tp, fp, tp with 2 gts
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    dets[1] = {{0.9, true, 0.0}, {0.8, false, 0.0}, {0.7, true, 0.0}};
    const EvalResult r = compute_ap_aph(dets, {0, 2, 0});
    // recall steps at precision 1/1 and 2/3
    CHECK(r.per_class[1].ap == doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-12));
    CHECK(r.per_class[1].aph == doctest::Approx(r.per_class[1].ap));
    CHECK(r.map == r.per_class[1].ap);
}

TEST_CASE("missed ground truth caps the recall") {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    dets[2] = {{0.9, true, 0.0}};
    const EvalResult r = compute_ap_aph(dets, {0, 0, 4});
    CHECK(r.per_class[2].ap == doctest::Approx(0.25));
}

TEST_CASE("empty detections with ground truth score zero") {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    const EvalResult r = compute_ap_aph(dets, {3, 0, 0});
    CHECK(r.per_class[0].evaluated);
    CHECK(r.per_class[0].ap == 0.0);
    CHECK(r.per_class[0].aph == 0.0);
    CHECK(r.map == 0.0);
}

TEST_CASE("no ground truth anywhere is a config error") {
    std::array<std::vector<ScoredDet>, kNumClasses> dets;
    dets[0] = {{0.9, false, 0.0}};
    CHECK_THROWS_AS(compute_ap_aph(dets, {0, 0, 0}), ConfigError);
}

TEST_CASE("scoring agrees with the per-rank restatement") {
    Rng rng(101);
    for (int iter = 0; iter < 200; ++iter) {
        const size_t n = rng.uniform_index(12);
        const std::vector<ScoredDet> sample = random_dets(rng, n);
        size_t tp_count = 0;
        for (const auto& d : sample) tp_count += d.tp ? 1 : 0;
        const size_t num_gt = tp_count + rng.uniform_index(4) + (tp_count == 0 ? 1 : 0);
        std::array<std::vector<ScoredDet>, kNumClasses> dets;
        dets[0] = sample;
        const EvalResult fast = compute_ap_aph(dets, {num_gt, 0, 0});
        const auto [ap, aph] = ref::ap_aph_ref(sample, num_gt);
        CHECK(fast.per_class[0].ap == doctest::Approx(ap).epsilon(1e-12));
        CHECK(fast.per_class[0].aph == doctest::Approx(aph).epsilon(1e-12));
        CHECK(fast.per_class[0].aph <= fast.per_class[0].ap + 1e-12);
    }
}

TEST_CASE("accumulation across scenes keeps per-class tallies") {
    EvalConfig cfg;
    EvalAccumulator acc;
    const std::vector<Box3D> gts1 = {det_at(0, 0, ObjectClass::kVehicle, 1.0)};
    const std::vector<Box3D> dets1 = {det_at(0.1, 0, ObjectClass::kVehicle, 0.9)};
    acc.add_scene(dets1, gts1, cfg);
    const std::vector<Box3D> gts2 = {det_at(5, 5, ObjectClass::kPedestrian, 1.0)};
    const std::vector<Box3D> dets2 = {det_at(20, -20, ObjectClass::kPedestrian, 0.4)};
    acc.add_scene(dets2, gts2, cfg);
    CHECK(acc.num_gt[0] == 1);
    CHECK(acc.num_gt[1] == 1);
    CHECK(acc.num_gt[2] == 0);
    REQUIRE(acc.dets[0].size() == 1);
    CHECK(acc.dets[0][0].tp);
    REQUIRE(acc.dets[1].size() == 1);
    CHECK_FALSE(acc.dets[1][0].tp);
    const EvalResult r = compute_ap_aph(acc.dets, acc.num_gt);
    CHECK(r.classes_evaluated == 2);
    CHECK(r.map == doctest::Approx(0.5));
}

TEST_CASE("detections are rescored by descending confidence before matching") {
    // a low-score detection listed first must not steal the gt
    EvalConfig cfg;
    EvalAccumulator acc;
    const std::vector<Box3D> gts = {det_at(0, 0, ObjectClass::kVehicle, 1.0)};
    const std::vector<Box3D> dets = {det_at(0.5, 0, ObjectClass::kVehicle, 0.2),
                                     det_at(0.05, 0, ObjectClass::kVehicle, 0.9)};
    acc.add_scene(dets, gts, cfg);
    REQUIRE(acc.dets[0].size() == 2);
    for (const ScoredDet& d : acc.dets[0]) {
        if (d.score == doctest::Approx(0.9)) CHECK(d.tp);
        if (d.score == doctest::Approx(0.2)) CHECK_FALSE(d.tp);
    }
}

TEST_CASE("eval csv carries percentages and the mean footers") {
    EvalResult r;
    r.per_class[0] = {true, 0.875, 0.75, 4};
    r.per_class[1] = {true, 0.5, 0.25, 2};
    r.per_class[2].evaluated = false;
    r.map = 0.6;
    r.maph = 0.5;
    r.classes_evaluated = 2;
    const std::string path = testutil::fresh_dir("evalcsv") + "/eval.csv";
    write_eval_csv(path, r);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line == "class,ap,aph");
    std::getline(in, line);
    CHECK(line == "vehicle,87.5,75.0");
    std::getline(in, line);
    CHECK(line == "pedestrian,50.0,25.0");
    bool saw_map = false, saw_maph = false;
    while (std::getline(in, line)) {
        if (line == "mAP,60.0") saw_map = true;
        if (line == "mAPH,50.0") saw_maph = true;
    }
    CHECK(saw_map);
    CHECK(saw_maph);
    const std::string table = format_eval_table(r);
    CHECK(table.find("vehicle") != std::string::npos);
    CHECK(table.find("87.5") != std::string::npos);
}

TEST_CASE("eval config validation") {
    EvalConfig cfg;
    cfg.iou_thresholds[1] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = EvalConfig{};
    cfg.iou_thresholds[0] = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
