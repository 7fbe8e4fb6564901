#include "colony/detection_metrics.hpp"
#include "colony/errors.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <random>

using namespace colony;

namespace {

std::vector<ScoredFlag> flags(std::initializer_list<bool> tp) {
    std::vector<ScoredFlag> out;
    double c = 1.0;
    for (bool t : tp) {
        out.push_back({c, t});
        c -= 0.1;
    }
    return out;
}

struct Instance {
    std::vector<oracle::Box> preds, gts;
    std::vector<double> conf;
};

// Boxes drawn from a small 16x16 frame so overlaps are frequent, and
// confidences from a coarse grid so ties occur.
Instance random_instance(std::mt19937& rng, std::size_t max_preds, std::size_t max_gts) {
    std::uniform_int_distribution<std::size_t> np(0, max_preds), ng(0, max_gts);
    std::uniform_int_distribution<int> grid(1, 5);
    Instance in;
    const auto n = np(rng), m = ng(rng);
    for (std::size_t i = 0; i < n; ++i) {
        in.preds.push_back(oracle::random_int_box(rng, 16));
        in.conf.push_back(grid(rng) / 5.0);
    }
    for (std::size_t i = 0; i < m; ++i) in.gts.push_back(oracle::random_int_box(rng, 16));
    return in;
}

MatchResult run(const Instance& in, double thr) {
    std::vector<BoundingBox> p, g;
    for (const auto& b : in.preds) p.push_back(fixtures::to_box(b));
    for (const auto& b : in.gts) g.push_back(fixtures::to_box(b));
    return match_boxes(p, in.conf, g, thr);
}

} // namespace

TEST_SUITE("detection-metrics") {

TEST_CASE("match_image worked example") {
    const std::vector<Detection> preds{{BoundingBox(1, 1, 10, 10), 0.9, {}}, {BoundingBox(100, 100, 110, 110), 0.8, {}}};
    const std::vector<GroundTruthBox> gts{{BoundingBox(0, 0, 10, 10), 1}, {BoundingBox(20, 20, 30, 30), 1}};
    const auto r = match_image(preds, gts, 0.2);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].prediction == 0);
    CHECK(r.pairs[0].ground_truth == 0);
    // p1 lies inside g1: intersection 81, union 100
    CHECK(r.pairs[0].iou == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(r.false_positives == std::vector<std::size_t>{1});
    CHECK(r.false_negatives == std::vector<std::size_t>{1});
    CHECK(r.prediction_flags(2) == std::vector<bool>{true, false});
}

TEST_CASE("identity and empty cases") {
    const std::vector<GroundTruthBox> gts{{BoundingBox(0, 0, 4, 4), 1}, {BoundingBox(5, 5, 9, 9), 1}, {BoundingBox(2, 0, 6, 4), 2}};
    std::vector<Detection> same;
    for (const auto& g : gts) same.push_back({g.box, 0.5, {}});
    for (double thr : {0.05, 0.2, 0.5, 1.0}) {
        const auto r = match_image(same, gts, thr);
        CHECK(r.pairs.size() == 3);
        CHECK(r.false_positives.empty());
        CHECK(r.false_negatives.empty());
    }
    const auto none = match_image({}, gts, 0.2);
    CHECK(none.pairs.empty());
    CHECK(none.false_negatives == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("threshold outside (0, 1] is a configuration error") {
    for (double thr : {0.0, -0.1, 1.01}) {
        try {
            match_image({}, {}, thr);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Configuration);
        }
    }
}

TEST_CASE("tie rules: equal confidence goes by input order, equal IoU by ground-truth order") {
    const BoundingBox g(0, 0, 10, 10);
    const std::vector<BoundingBox> preds{BoundingBox(0, 0, 10, 9), BoundingBox(0, 0, 10, 10)};
    const std::vector<double> conf{0.7, 0.7};
    // the first prediction claims the single GT even though the second overlaps it better
    const auto r = match_boxes(preds, conf, std::vector<BoundingBox>{g}, 0.2);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].prediction == 0);

    // two identical GTs: the lower index is claimed first
    const auto r2 = match_boxes(std::vector<BoundingBox>{g}, std::vector<double>{0.5}, std::vector<BoundingBox>{g, g}, 0.2);
    REQUIRE(r2.pairs.size() == 1);
    CHECK(r2.pairs[0].ground_truth == 0);
    CHECK(r2.false_negatives == std::vector<std::size_t>{1});
}

TEST_CASE("greedy matching reproduces the literal reference and never beats the maximum matching") {
    std::mt19937 rng(2024);
    for (int i = 0; i < 200; ++i) {
        const auto in = random_instance(rng, 8, 8);
        const auto r = run(in, 0.2);
        const auto ref = oracle::naive_greedy(in.preds, in.conf, in.gts, 0.2);
        REQUIRE(r.pairs.size() == ref.size());
        for (std::size_t k = 0; k < ref.size(); ++k) {
            CHECK(r.pairs[k].prediction == ref[k].p);
            CHECK(r.pairs[k].ground_truth == ref[k].g);
        }
        CHECK(r.pairs.size() <= oracle::max_matching(in.preds, in.gts, 0.2));
    }
}

TEST_CASE("cardinality invariants, determinism and threshold monotonicity") {
    std::mt19937 rng(99);
    for (int i = 0; i < 100; ++i) {
        const auto in = random_instance(rng, 50, 50);
        const auto r = run(in, 0.2);
        CHECK(r.pairs.size() + r.false_positives.size() == in.preds.size());
        CHECK(r.pairs.size() + r.false_negatives.size() == in.gts.size());
        std::vector<bool> p_seen(in.preds.size()), g_seen(in.gts.size());
        for (const auto& pr : r.pairs) {
            CHECK_FALSE(p_seen[pr.prediction]);
            CHECK_FALSE(g_seen[pr.ground_truth]);
            p_seen[pr.prediction] = g_seen[pr.ground_truth] = true;
            CHECK(pr.iou >= 0.2);
        }
        CHECK(run(in, 0.2) == r);
        std::size_t prev = in.preds.size() + 1;
        for (double thr : {0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0}) {
            const auto n = run(in, thr).pairs.size();
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("pr_curve points") {
    const auto pts = pr_curve(flags({true, false, true}), 2);
    REQUIRE(pts.size() == 3);
    CHECK(pts[0].precision == 1.0);
    CHECK(pts[0].recall == 0.5);
    CHECK(pts[1].precision == 0.5);
    CHECK(pts[1].recall == 0.5);
    CHECK(pts[2].precision == doctest::Approx(2.0 / 3.0));
    CHECK(pts[2].recall == 1.0);

    const auto one = pr_curve(flags({true}), 1);
    CHECK(one[0].precision == 1.0);
    CHECK(one[0].recall == 1.0);
    const auto miss = pr_curve(flags({false}), 1);
    CHECK(miss[0].precision == 0.0);
    CHECK(miss[0].recall == 0.0);

    try {
        pr_curve(flags({true}), 0);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedMetric);
    }
}

TEST_CASE("pr_curve sorts by confidence, stable on ties") {
    const std::vector<ScoredFlag> f{{0.2, true}, {0.9, false}, {0.5, true}, {0.5, false}};
    const auto pts = pr_curve(f, 4);
    REQUIRE(pts.size() == 4);
    CHECK(pts[0].confidence_cutoff == 0.9);
    CHECK(pts[0].precision == 0.0);
    CHECK(pts[1].precision == 0.5);   // 0.5/TP comes before 0.5/FP
    CHECK(pts[2].precision == doctest::Approx(1.0 / 3.0));
    CHECK(pts[3].recall == 0.5);
    for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].recall >= pts[i - 1].recall);
}

TEST_CASE("average_precision hand cases") {
    CHECK(average_precision(pr_curve(flags({true, false, true}), 2)) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-12));
    CHECK(average_precision(pr_curve(flags({true, true, true}), 3)) == 1.0);
    CHECK(average_precision(pr_curve(flags({false, false}), 3)) == 0.0);
    CHECK(average_precision({}) == 0.0);
    // envelope lifts the dip: [FP, TP] with 1 GT -> precision 0.5 over the whole recall range
    CHECK(average_precision(pr_curve(flags({false, true}), 1)) == 0.5);
    // unreached recall contributes nothing
    CHECK(average_precision(pr_curve(flags({true}), 4)) == 0.25);
}

TEST_CASE("AP depends only on the confidence order") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    std::bernoulli_distribution tp(0.6);
    for (int i = 0; i < 100; ++i) {
        std::vector<ScoredFlag> a;
        for (int k = 0; k < 12; ++k) a.push_back({u(rng), tp(rng)});
        auto b = a;
        for (auto& f : b) f.confidence = 0.1 + f.confidence * f.confidence * 0.5;  // strictly increasing map
        const double ap_a = average_precision(pr_curve(a, 10));
        CHECK(ap_a >= 0.0);
        CHECK(ap_a <= 1.0);
        CHECK(ap_a == average_precision(pr_curve(b, 10)));
    }
}

TEST_CASE("mean_average_precision") {
    const std::vector<ClassAP> three{{1, 1.0, 3, 3}, {2, 5.0 / 6.0, 2, 3}, {3, 0.0, 1, 2}};
    CHECK(mean_average_precision(three) == doctest::Approx(0.6111).epsilon(1e-4));
    CHECK(mean_average_precision(std::vector<ClassAP>{{1, 1.0, 1, 1}, {2, 0.5, 1, 1}}) == 0.75);
    // classes without ground truths are excluded, not scored zero
    CHECK(mean_average_precision(std::vector<ClassAP>{{1, 0.8, 2, 2}, {2, 0.0, 0, 4}}) == 0.8);
    try {
        mean_average_precision(std::vector<ClassAP>{});
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedMetric);
    }
    CHECK_THROWS_AS(mean_average_precision(std::vector<ClassAP>{{1, 0.0, 0, 3}}), Error);
}

TEST_CASE("evaluate_detection on the identity fixture") {
    std::vector<ImageDetections> images;
    for (const auto& p : fixtures::three_plates()) {
        ImageDetections img{p.id, {}, {}};
        for (const auto& c : p.colonies) {
            img.predictions.push_back({fixtures::to_box(c.box), 0.9, {}});
            img.ground_truths.push_back({fixtures::to_box(c.box), c.class_id});
        }
        images.push_back(img);
    }
    const auto s = evaluate_detection(images, 0.2);
    REQUIRE(s.map.has_value());
    CHECK(*s.map == 1.0);
    CHECK(s.tp == 7);
    CHECK(s.fp == 0);
    CHECK(s.fn == 0);
    REQUIRE(s.per_class.size() == 2);
    CHECK(s.per_class[0].num_ground_truths == 4);
    CHECK(s.per_class[1].num_ground_truths == 3);
    CHECK(s.per_image.size() == 3);
}

TEST_CASE("evaluate_detection pools per class and applies the floor") {
    // image x: class 1 GT, a hit and a false positive; image y: class 2 GT, one miss
    std::vector<ImageDetections> images{
        {"x", {{BoundingBox(0, 0, 10, 10), 0.9, {}}, {BoundingBox(50, 50, 60, 60), 0.3, {}}}, {{BoundingBox(0, 0, 10, 10), 1}}},
        {"y", {{BoundingBox(30, 30, 40, 40), 0.8, {}}}, {{BoundingBox(0, 0, 10, 10), 2}}},
    };
    const auto s = evaluate_detection(images, 0.2);
    CHECK(s.tp == 1);
    CHECK(s.fp == 2);
    CHECK(s.fn == 1);
    REQUIRE(s.per_class.size() == 2);
    CHECK(s.per_class[0].ap == 1.0);
    CHECK(s.per_class[0].num_predictions == 2);
    CHECK(s.per_class[1].ap == 0.0);
    CHECK(*s.map == 0.5);

    const auto floored = evaluate_detection(images, 0.2, 0.5);
    CHECK(floored.fp == 1);
    CHECK(floored.per_class[0].num_predictions == 1);

    std::vector<ImageDetections> no_gt{{"z", {{BoundingBox(0, 0, 1, 1), 0.5, {}}}, {}}};
    const auto empty = evaluate_detection(no_gt, 0.2);
    CHECK_FALSE(empty.map.has_value());
    CHECK(empty.fp == 1);
}

}
