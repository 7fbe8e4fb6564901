#include "colony/errors.hpp"
#include "colony/reporting.hpp"

#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/golden_run.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <random>

using namespace colony;
using nlohmann::json;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

const OverlaySpec kSpec{};

cv::Mat white(int w, int h) { return cv::Mat(h, w, CV_8UC3, cv::Scalar(255, 255, 255)); }

bool is(const cv::Mat& img, int x, int y, const Rgb& c) { return img.at<cv::Vec3b>(y, x) == c.bgr(); }

cv::Mat color_mask(const cv::Mat& img, const Rgb& c) {
    cv::Mat m;
    const auto v = c.bgr();
    cv::inRange(img, cv::Scalar(v[0], v[1], v[2]), cv::Scalar(v[0], v[1], v[2]), m);
    return m;
}

int regions(const cv::Mat& img, const Rgb& c) {
    cv::Mat labels;
    return cv::connectedComponents(color_mask(img, c), labels, 8) - 1;
}

struct Scene {
    std::vector<Detection> preds;
    std::vector<GroundTruthBox> gts;
    MatchResult match;
};

// One TP at (5,5)-(15,15), one FN at (30,5)-(40,15), one FP at (30,25)-(40,35), on 60x40.
Scene tp_fp_fn() {
    Scene s;
    s.preds = {{BoundingBox(5, 5, 15, 15), 0.9, {}}, {BoundingBox(30, 25, 40, 35), 0.6, {}}};
    s.gts = {{BoundingBox(5, 5, 15, 15), 1}, {BoundingBox(30, 5, 40, 15), 1}};
    s.match = match_image(s.preds, s.gts);
    return s;
}

std::vector<uchar> png(const cv::Mat& img) {
    std::vector<uchar> buf;
    cv::imencode(".png", img, buf);
    return buf;
}

MetricsReport small_report() {
    MetricsReport r;
    r.meta = {"demo", "file:x", "m", "abc", "2025-01-01T00:00:00Z", 0.2, 0.0};
    r.detection = DetectionReport{{{1, 5.0 / 6.0, 2, 3}}, 5.0 / 6.0, 2, 1, 0};
    DatasetSegSummary seg;
    seg.micro_dice = 1.0 / 3.0;
    seg.macro_dice = 0.25;
    seg.micro_dice_at_detection = 0.5;
    seg.macro_dice_at_detection = 0.5;
    seg.images_evaluated = 1;
    seg.images_skipped = 1;
    r.segmentation = seg;
    r.per_image = {{"a", 2, 0, 0, 0.5, 0.5}, {"b", 0, 1, 0, 0.0, std::nullopt}};
    return r;
}

} // namespace

TEST_SUITE("reporting") {

TEST_CASE("overlay colors at probe coordinates") {
    const auto s = tp_fp_fn();
    const auto out = render_overlay(white(60, 40), s.match, s.preds, s.gts, nullptr, kSpec);
    REQUIRE(out.type() == CV_8UC3);

    // 2-px strokes run inside the covered pixel extent [5, 14]
    for (int x : {5, 6, 13, 14}) CHECK(is(out, x, 10, kSpec.matched_color));
    for (int y : {5, 6, 13, 14}) CHECK(is(out, 10, y, kSpec.matched_color));
    CHECK(is(out, 7, 10, Rgb{255, 255, 255}));
    CHECK(is(out, 4, 10, Rgb{255, 255, 255}));

    for (int x : {30, 31, 38, 39}) CHECK(is(out, x, 10, kSpec.unmatched_gt_color));
    CHECK(is(out, 35, 5, kSpec.unmatched_gt_color));
    CHECK(is(out, 35, 10, Rgb{255, 255, 255}));

    for (int x : {30, 31, 38, 39}) CHECK(is(out, x, 30, kSpec.unmatched_pred_color));
    CHECK(is(out, 35, 34, kSpec.unmatched_pred_color));
    CHECK(is(out, 35, 30, Rgb{255, 255, 255}));

    CHECK(regions(out, kSpec.matched_color) == 1);
    CHECK(regions(out, kSpec.unmatched_gt_color) == 1);
    CHECK(regions(out, kSpec.unmatched_pred_color) == 1);
    // a 10x10 box with a 2-px stroke: 100 - 36 interior pixels
    CHECK(cv::countNonZero(color_mask(out, kSpec.matched_color)) == 64);
}

TEST_CASE("single TP and GT-only scenes") {
    const std::vector<Detection> p{{BoundingBox(5, 5, 15, 15), 0.9, {}}};
    const std::vector<GroundTruthBox> g{{BoundingBox(6, 6, 15, 15), 1}};
    const auto m = match_image(p, g);
    const auto out = render_overlay(white(30, 30), m, p, g, nullptr, kSpec);
    CHECK(cv::countNonZero(color_mask(out, kSpec.matched_color)) > 0);
    CHECK(cv::countNonZero(color_mask(out, kSpec.unmatched_pred_color)) == 0);
    CHECK(cv::countNonZero(color_mask(out, kSpec.unmatched_gt_color)) == 0);

    const std::vector<GroundTruthBox> two{{BoundingBox(2, 2, 10, 10), 1}, {BoundingBox(15, 15, 25, 25), 1}};
    const auto none = match_image({}, two);
    const auto yellow = render_overlay(white(30, 30), none, {}, two, nullptr, kSpec);
    CHECK(regions(yellow, kSpec.unmatched_gt_color) == 2);
    CHECK(cv::countNonZero(color_mask(yellow, kSpec.matched_color)) == 0);
    CHECK(cv::countNonZero(color_mask(yellow, kSpec.unmatched_pred_color)) == 0);

    const auto blank = render_overlay(white(30, 30), match_image({}, {}), {}, {}, nullptr, kSpec);
    CHECK(png(blank) == png(white(30, 30)));
}

TEST_CASE("red regions count the false positives") {
    std::mt19937 rng(12);
    std::bernoulli_distribution coin(0.5);
    for (int round = 0; round < 20; ++round) {
        // 4x3 grid of disjoint cells; each cell holds a GT, a prediction, or both
        std::vector<Detection> preds;
        std::vector<GroundTruthBox> gts;
        for (int cy = 0; cy < 3; ++cy)
            for (int cx = 0; cx < 4; ++cx) {
                const BoundingBox b(cx * 20 + 3, cy * 20 + 3, cx * 20 + 15, cy * 20 + 15);
                const bool has_gt = coin(rng), has_pred = coin(rng);
                if (has_gt) gts.push_back({b, 1});
                if (has_pred) preds.push_back({b, 0.5, {}});
            }
        const auto m = match_image(preds, gts);
        const auto out = render_overlay(white(80, 60), m, preds, gts, nullptr, kSpec);
        CHECK(regions(out, kSpec.unmatched_pred_color) == static_cast<int>(m.false_positives.size()));
        CHECK(regions(out, kSpec.unmatched_gt_color) == static_cast<int>(m.false_negatives.size()));
        CHECK(regions(out, kSpec.matched_color) == static_cast<int>(m.pairs.size()));
    }
}

TEST_CASE("renders are byte-deterministic") {
    const auto s = tp_fp_fn();
    const std::vector<InstanceMask> masks{box_to_mask(BoundingBox(7, 7, 13, 13), ImageDims(60, 40)),
                                          box_to_mask(BoundingBox(32, 27, 38, 33), ImageDims(60, 40))};
    OverlaySpec spec;
    spec.draw_labels = true;
    const auto a = render_overlay(white(60, 40), s.match, s.preds, s.gts, &masks, spec);
    const auto b = render_overlay(white(60, 40), s.match, s.preds, s.gts, &masks, spec);
    CHECK(png(a) == png(b));

    TempDir tmp;
    write_overlay_png(a, tmp / "one.png");
    write_overlay_png(b, tmp / "two.png");
    CHECK(fixtures::read_bytes(tmp / "one.png") == fixtures::read_bytes(tmp / "two.png"));
    const cv::Mat back = cv::imread((tmp / "one.png").string(), cv::IMREAD_UNCHANGED);
    CHECK(back.channels() == 3);
    CHECK(is(back, 5, 10, kSpec.matched_color));
}

TEST_CASE("mask fills blend at the configured opacity") {
    const auto s = tp_fp_fn();
    const std::vector<InstanceMask> masks{box_to_mask(BoundingBox(7, 7, 13, 13), ImageDims(60, 40)),
                                          box_to_mask(BoundingBox(32, 27, 38, 33), ImageDims(60, 40))};
    const auto out = render_overlay(white(60, 40), s.match, s.preds, s.gts, &masks, kSpec);
    // 255 * 0.6 + c * 0.4, rounded
    CHECK(out.at<cv::Vec3b>(10, 10) == cv::Vec3b(153, 233, 153));
    CHECK(out.at<cv::Vec3b>(30, 35) == cv::Vec3b(153, 153, 241));

    const std::vector<InstanceMask> short_list{masks[0]};
    CHECK_THROWS_AS(render_overlay(white(60, 40), s.match, s.preds, s.gts, &short_list, kSpec), Error);
}

TEST_CASE("overlay inputs and spec validation") {
    const auto s = tp_fp_fn();
    cv::Mat gray(40, 60, CV_8UC1, cv::Scalar(255));
    const auto from_gray = render_overlay(gray, s.match, s.preds, s.gts, nullptr, kSpec);
    CHECK(png(from_gray) == png(render_overlay(white(60, 40), s.match, s.preds, s.gts, nullptr, kSpec)));
    cv::Mat bgra(40, 60, CV_8UC4, cv::Scalar(255, 255, 255, 255));
    CHECK(render_overlay(bgra, s.match, s.preds, s.gts, nullptr, kSpec).type() == CV_8UC3);
    CHECK_THROWS_AS(render_overlay(cv::Mat(40, 60, CV_32FC1), s.match, s.preds, s.gts, nullptr, kSpec), Error);

    OverlaySpec bad;
    bad.stroke_width = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.unmatched_pred_color = bad.matched_color;
    CHECK_THROWS_AS(bad.validate(), Error);

    OverlaySpec wide;
    wide.stroke_width = 4;
    const auto thick = render_overlay(white(60, 40), s.match, s.preds, s.gts, nullptr, wide);
    CHECK(is(thick, 8, 10, wide.matched_color));
    CHECK(is(thick, 9, 10, Rgb{255, 255, 255}));
}

TEST_CASE("report JSON: rounding, layout and round trip") {
    const auto r = small_report();
    const auto j = report_to_json(r);
    CHECK(j["detection"]["map"] == 0.833333);
    CHECK(j["detection"]["per_class"][0]["ap"] == 0.833333);
    CHECK(j["segmentation"]["micro_dice"] == 0.333333);
    CHECK(j["segmentation"]["macro_dice"] == 0.25);
    CHECK(j["iou_threshold"] == 0.2);
    CHECK(j["per_image"][1]["dice_at_detection"].is_null());

    const auto back = report_from_json(j);
    CHECK(report_to_json(back) == j);
    CHECK(back.meta == r.meta);
    CHECK(back.per_image.size() == 2);

    auto no_seg = r;
    no_seg.segmentation.reset();
    CHECK(report_to_json(no_seg)["segmentation"].is_null());
}

TEST_CASE("report consistency is asserted at emission") {
    auto r = small_report();
    r.detection->tp = 3;
    CHECK_THROWS_AS(report_to_json(r), Error);
    r = small_report();
    r.detection->map = 0.9;
    CHECK_THROWS_AS(report_to_json(r), Error);
}

TEST_CASE("report CSV") {
    const auto csv = report_to_csv(small_report());
    CHECK(csv ==
          "image_id,tp,fp,fn,dice,dice_at_detection\n"
          "a,2,0,0,0.500000,0.500000\n"
          "b,0,1,0,0.000000,\n"
          "__summary__,2,1,0,0.333333,0.500000\n");
}

TEST_CASE("emit_report writes both files") {
    TempDir tmp;
    emit_report(small_report(), tmp / "out");
    CHECK(fs::exists(tmp / "out" / "report.json"));
    CHECK(fixtures::read_bytes(tmp / "out" / "report.csv") == report_to_csv(small_report()));
    const auto j = read_json_file(tmp / "out" / "report.json");
    CHECK(report_to_json(report_from_json(j)) == j);

    emit_report(small_report(), tmp / "csv_only", ReportFormats{false, true});
    CHECK_FALSE(fs::exists(tmp / "csv_only" / "report.json"));

    write_text_file("x", tmp / "file");
    try {
        emit_report(small_report(), tmp / "file");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).find((tmp / "file").string()) != std::string::npos);
    }
}

TEST_CASE("build_report on the identity fixture") {
    TempDir tmp;
    const auto plates = fixtures::three_plates();
    const auto m = fixtures::write_dataset(tmp.path(), plates);
    const auto r = build_report(m, fixtures::identity_predictions(plates), ReportOptions{});
    REQUIRE(r.detection.has_value());
    CHECK(*r.detection->map == 1.0);
    CHECK(r.detection->tp == 7);
    CHECK(r.detection->fp == 0);
    CHECK(r.detection->fn == 0);
    REQUIRE(r.segmentation.has_value());
    CHECK(r.segmentation->micro_dice == 1.0);
    CHECK(r.segmentation->micro_dice_at_detection == 1.0);
    CHECK(r.notes.empty());

    auto failed = fixtures::identity_predictions(plates);
    failed.images.erase("plate_b");
    failed.failures["plate_b"] = "remote: injected";
    const auto rf = build_report(m, failed, ReportOptions{});
    CHECK(rf.detection->fn == 3);
    CHECK(rf.per_image[1].fn == std::optional<std::size_t>(3));
    CHECK(rf.notes.size() == 1);

    auto maskless = fixtures::identity_predictions(plates);
    maskless.images["plate_a"].masks.reset();
    CHECK_THROWS_AS(build_report(m, maskless, ReportOptions{}), Error);
    ReportOptions det_only;
    det_only.segmentation = false;
    CHECK_NOTHROW(build_report(m, maskless, det_only));
}

TEST_CASE("stub-run report matches the golden files") {
    TempDir tmp;
    stub::StubServer server;
    const auto out = golden::stub_run(tmp.path(), server);
    CHECK_FALSE(out.run.aborted);
    CHECK(golden::matches("predictions.json", out.predictions_json));
    CHECK(golden::matches("report.json", out.report_json));
    CHECK(golden::matches("report.csv", out.report_csv));
}

}
