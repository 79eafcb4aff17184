#include <algorithm>
#include <cmath>
#include <vector>

#include "centeratt/errors.hpp"
#include "centeratt/matching.hpp"
#include "centeratt/ref/reference.hpp"
#include "centeratt/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace centeratt;

namespace {

Box3D square(double cx, double cy, double side, double yaw) {
    Box3D b;
    b.cx = cx;
    b.cy = cy;
    b.cz = 0.0;
    b.l = side;
    b.w = side;
    b.h = 1.0;
    b.yaw = yaw;
    return b;
}

CostMatrix random_cost(Rng& rng, size_t rows, size_t cols) {
    CostMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.cost.resize(rows * cols);
    for (double& c : m.cost) c = rng.uniform(0.0, 10.0);
    return m;
}

bool same_assignment(const Assignment& a, const Assignment& b) {
    return a.pairs == b.pairs && a.unmatched_rows == b.unmatched_rows &&
           a.unmatched_cols == b.unmatched_cols;
}

}  // namespace

TEST_CASE("identical boxes have IoU one, far boxes zero") {
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        const Box3D b = testutil::random_box(rng);
        CHECK(rotated_iou_bev(b, b) == doctest::Approx(1.0));
        Box3D far = b;
        far.cx += 100.0;
        CHECK(rotated_iou_bev(b, far) == 0.0);
    }
}

TEST_CASE("fixed overlap geometries give their closed-form IoU") {
    const Box3D a = square(0, 0, 1, 0);
    // half-overlapping unit squares: inter 0.5, union 1.5
    CHECK(rotated_iou_bev(a, square(0.5, 0, 1, 0)) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    // concentric square rotated 45 degrees: octagon intersection
    const double octagon = 2.0 * (std::sqrt(2.0) - 1.0);
    const double expect = octagon / (2.0 - octagon);
    CHECK(rotated_iou_bev(a, square(0, 0, 1, M_PI / 4.0)) == doctest::Approx(expect).epsilon(1e-9));
    // corner-diagonal offset: inter 0.25, union 1.75
    CHECK(rotated_iou_bev(a, square(0.5, 0.5, 1, 0)) == doctest::Approx(1.0 / 7.0).epsilon(1e-9));
    // touching edges intersect with zero area
    CHECK(rotated_iou_bev(a, square(1.0, 0, 1, 0)) == doctest::Approx(0.0));
}

TEST_CASE("BEV IoU is symmetric and yaw-periodic") {
    Rng rng(43);
    for (int i = 0; i < 50; ++i) {
        Box3D a = testutil::random_box(rng, 4.0);
        Box3D b = testutil::random_box(rng, 4.0);
        const double ab = rotated_iou_bev(a, b);
        CHECK(rotated_iou_bev(b, a) == doctest::Approx(ab).epsilon(1e-12));
        Box3D spun = b;
        spun.yaw += M_PI;  // rectangle is unchanged by a half turn
        CHECK(rotated_iou_bev(a, spun) == doctest::Approx(ab).epsilon(1e-9));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0 + 1e-12);
    }
}

TEST_CASE("analytic IoU agrees with uniform sampling") {
    Rng rng(45);
    for (int i = 0; i < 10; ++i) {
        Box3D a = testutil::random_box(rng, 3.0);
        Box3D b = testutil::random_box(rng, 3.0);
        b.cx = a.cx + rng.uniform(-2.0, 2.0);
        b.cy = a.cy + rng.uniform(-2.0, 2.0);
        const double analytic = rotated_iou_bev(a, b);
        const ref::McIou mc = ref::rotated_iou_mc(a, b, 200000, 7000 + i);
        CHECK(std::fabs(analytic - mc.iou) <= 4.0 * mc.sigma + 1e-9);
    }
}

TEST_CASE("3D IoU scales the BEV overlap by the z extent") {
    Box3D a = square(0, 0, 2, 0);
    a.cz = 0.0;
    a.h = 2.0;
    Box3D b = a;
    CHECK(rotated_iou_3d(a, b) == doctest::Approx(1.0));
    b.cz = 1.0;  // slabs [-1,1] and [0,2]: overlap 1 of height 2
    // inter = 4*1, union = 8 + 8 - 4
    CHECK(rotated_iou_3d(a, b) == doctest::Approx(4.0 / 12.0));
    b.cz = 3.0;  // disjoint in z
    CHECK(rotated_iou_3d(a, b) == 0.0);
}

TEST_CASE("cost matrix combines score and IoU complements") {
    MatchConfig cfg;
    cfg.lambda_cls = 2.0;
    cfg.lambda_iou = 0.5;
    ScoredProposal p;
    p.box = square(0, 0, 1, 0);
    p.class_scores = {0.9, 0.2, 0.1};
    const std::vector<Box3D> gts = {square(0.5, 0, 1, 0)};
    std::vector<Box3D> labelled = gts;
    labelled[0].cls = ObjectClass::kPedestrian;
    const CostMatrix m = build_cost_matrix({p}, labelled, cfg);
    REQUIRE(m.rows == 1);
    REQUIRE(m.cols == 1);
    const double expect = 2.0 * (1.0 - 0.2) + 0.5 * (1.0 - 1.0 / 3.0);
    CHECK(m.at(0, 0) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("hand-sized assignments pick the cheap diagonal") {
    CostMatrix m;
    m.rows = 2;
    m.cols = 2;
    m.cost = {1.0, 10.0, 10.0, 1.0};
    const Assignment a = hungarian_assign(m);
    REQUIRE(a.pairs.size() == 2);
    CHECK(a.pairs[0] == std::pair<size_t, size_t>{0, 0});
    CHECK(a.pairs[1] == std::pair<size_t, size_t>{1, 1});
    CHECK(a.total_cost == doctest::Approx(2.0));
    CHECK(a.unmatched_rows.empty());
    CHECK(a.unmatched_cols.empty());

    // forcing the anti-diagonal
    m.cost = {10.0, 1.0, 1.0, 10.0};
    const Assignment b = hungarian_assign(m);
    CHECK(b.pairs[0] == std::pair<size_t, size_t>{0, 1});
    CHECK(b.pairs[1] == std::pair<size_t, size_t>{1, 0});
}

TEST_CASE("rectangular matrices leave the surplus side unmatched") {
    CostMatrix m;
    m.rows = 3;
    m.cols = 2;
    m.cost = {5.0, 9.0, 1.0, 2.0, 8.0, 1.5};
    const Assignment a = hungarian_assign(m);
    CHECK(a.pairs.size() == 2);
    CHECK(a.unmatched_rows.size() == 1);
    CHECK(a.unmatched_cols.empty());
    const Assignment ex = ref::assign_exhaustive(m);
    CHECK(same_assignment(a, ex));
    CHECK(a.total_cost == ex.total_cost);
}

TEST_CASE("empty and degenerate inputs are handled") {
    CostMatrix m;
    const Assignment a = hungarian_assign(m);
    CHECK(a.pairs.empty());
    CHECK(a.total_cost == 0.0);

    m.rows = 2;
    m.cols = 0;
    const Assignment b = hungarian_assign(m);
    CHECK(b.pairs.empty());
    CHECK(b.unmatched_rows == std::vector<size_t>{0, 1});

    m.rows = 1;
    m.cols = 1;
    m.cost = {std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(hungarian_assign(m), ConfigError);
    m.cost = {std::nan("")};
    CHECK_THROWS_AS(hungarian_assign(m), ConfigError);
}

TEST_CASE("assignment equals the exhaustive optimum on random instances") {
    Rng rng(47);
    for (int iter = 0; iter < 120; ++iter) {
        const size_t rows = 1 + rng.uniform_index(6);
        const size_t cols = 1 + rng.uniform_index(6);
        const CostMatrix m = random_cost(rng, rows, cols);
        const Assignment fast = hungarian_assign(m);
        const Assignment ex = ref::assign_exhaustive(m);
        CHECK(fast.total_cost == ex.total_cost);
        CHECK(same_assignment(fast, ex));
    }
}

TEST_CASE("ties break toward the lexicographically smallest pairing") {
    CostMatrix m;
    m.rows = 3;
    m.cols = 3;
    m.cost.assign(9, 1.0);  // every perfect matching costs 3
    const Assignment a = hungarian_assign(m);
    REQUIRE(a.pairs.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(a.pairs[i] == std::pair<size_t, size_t>{i, i});
    }
    Rng rng(49);
    for (int iter = 0; iter < 60; ++iter) {
        CostMatrix im = random_cost(rng, 1 + rng.uniform_index(5), 1 + rng.uniform_index(5));
        for (double& c : im.cost) c = std::floor(c * 0.5);  // force collisions
        const Assignment fast = hungarian_assign(im);
        const Assignment ex = ref::assign_exhaustive(im);
        CHECK(fast.total_cost == ex.total_cost);
        CHECK(same_assignment(fast, ex));
    }
}

TEST_CASE("bce hits its textbook values") {
    CHECK(bce(0.5, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce(0.5, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce(1.0, 1.0) == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
    CHECK(bce(0.0, 0.0) == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
    CHECK(bce(0.9, 1.0) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
}

TEST_CASE("perfect predictions give a vanishing loss") {
    std::vector<Box3D> gts = {square(0, 0, 2, 0.3), square(5, 5, 1, -0.2)};
    gts[0].cls = ObjectClass::kVehicle;
    gts[1].cls = ObjectClass::kCyclist;
    Assignment a;
    a.pairs = {{0, 0}, {1, 1}};
    std::vector<SecondStagePrediction> preds(2);
    preds[0].class_probs = {1.0, 0.0, 0.0};
    preds[1].class_probs = {0.0, 0.0, 1.0};
    const std::vector<std::array<double, 8>> targets(2, std::array<double, 8>{});
    const LossBreakdown loss = second_stage_loss(preds, gts, a, targets);
    // probability clamping leaves a floor of -ln(1 - 1e-7) per term
    CHECK(loss.cls_loss < 1e-6);
    CHECK(loss.reg_loss == 0.0);
    CHECK(loss.matched == 2);
    CHECK(loss.unmatched == 0);
}

TEST_CASE("loss rejects malformed assignments") {
    const std::vector<Box3D> gts = {square(0, 0, 2, 0)};
    std::vector<SecondStagePrediction> preds(2);
    Assignment a;
    a.pairs = {{0, 0}};
    CHECK_THROWS_AS(second_stage_loss(preds, gts, a, {}), ConfigError);
    std::vector<std::array<double, 8>> targets(1);
    a.pairs = {{5, 0}};
    CHECK_THROWS_AS(second_stage_loss(preds, gts, a, targets), ConfigError);
    a.pairs = {{0, 7}};
    CHECK_THROWS_AS(second_stage_loss(preds, gts, a, targets), ConfigError);
    a.pairs = {{0, 0}, {0, 0}};
    targets.resize(2);
    CHECK_THROWS_AS(second_stage_loss(preds, gts, a, targets), ConfigError);
}

TEST_CASE("loss terms match the scalar restatement") {
    Rng rng(51);
    for (int iter = 0; iter < 40; ++iter) {
        const size_t n = 1 + rng.uniform_index(6);
        const size_t g = 1 + rng.uniform_index(6);
        std::vector<SecondStagePrediction> preds(n);
        for (auto& p : preds) {
            for (double& s : p.class_probs) s = rng.uniform01();
            for (double& d : p.deltas) d = rng.uniform(-1.0, 1.0);
        }
        std::vector<Box3D> gts(g);
        for (auto& b : gts) b = testutil::random_box(rng);
        std::vector<ScoredProposal> props(n);
        for (size_t i = 0; i < n; ++i) {
            props[i].box = testutil::random_box(rng);
            props[i].class_scores = preds[i].class_probs;
        }
        const Assignment a = hungarian_assign(build_cost_matrix(props, gts, MatchConfig{}));
        std::vector<std::array<double, 8>> targets(a.pairs.size());
        for (auto& t : targets) {
            for (double& v : t) v = rng.uniform(-1.0, 1.0);
        }
        const LossBreakdown fast = second_stage_loss(preds, gts, a, targets);
        const LossBreakdown slow = ref::loss_ref(preds, gts, a, targets);
        CHECK(fast.cls_loss == doctest::Approx(slow.cls_loss).epsilon(1e-12));
        CHECK(fast.reg_loss == doctest::Approx(slow.reg_loss).epsilon(1e-12));
        CHECK(fast.matched == slow.matched);
        CHECK(fast.unmatched == slow.unmatched);
    }
}
