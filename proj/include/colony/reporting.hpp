#pragma once

#include "colony/detection_metrics.hpp"
#include "colony/ingest.hpp"
#include "colony/segmentation_metrics.hpp"

#include "json.hpp"

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace colony {

struct Rgb {
    std::uint8_t r, g, b;

    cv::Vec3b bgr() const noexcept { return {b, g, r}; }
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct OverlaySpec {
    Rgb matched_color{0, 200, 0};
    Rgb unmatched_gt_color{230, 200, 0};
    Rgb unmatched_pred_color{220, 0, 0};
    int stroke_width = 2;
    bool draw_labels = false;
    int mask_opacity_percent = 40;

    /// Throws ErrorKind::Configuration for equal colors or a stroke below 1.
    void validate() const;
};

/// Draws matched predictions green, unmatched ground truths yellow and
/// unmatched predictions red. Strokes run along the inside of each box's
/// covered pixel extent. Masks, when given, are blended under the strokes
/// with the color of their prediction. Accepts 8-bit gray or BGR input and
/// returns BGR.
cv::Mat render_overlay(const cv::Mat& image, const MatchResult& match, std::span<const Detection> predictions,
                       std::span<const GroundTruthBox> ground_truths, const std::vector<InstanceMask>* masks,
                       const OverlaySpec& spec = {});

/// Writes the overlay as an RGB PNG.
void write_overlay_png(const cv::Mat& overlay, const std::filesystem::path& path);

struct ReportMetadata {
    std::string dataset;
    std::string provider;
    std::string model_version;
    std::string config_fingerprint;
    std::string timestamp;
    double iou_threshold = kDefaultIouThreshold;
    double confidence_floor = 0.0;

    friend bool operator==(const ReportMetadata&, const ReportMetadata&) = default;
};

struct DetectionReport {
    std::vector<ClassAP> per_class;
    std::optional<double> map;
    std::size_t tp = 0, fp = 0, fn = 0;
};

struct PerImageRow {
    std::string image_id;
    std::optional<std::size_t> tp, fp, fn;
    std::optional<double> dice;
    std::optional<double> dice_at_detection;
};

struct MetricsReport {
    ReportMetadata meta;
    std::optional<DetectionReport> detection;
    std::optional<DatasetSegSummary> segmentation;
    std::vector<PerImageRow> per_image;
    std::vector<std::string> notes;
};

struct ReportOptions {
    double iou_threshold = kDefaultIouThreshold;
    double confidence_floor = 0.0;
    bool detection = true;     // evaluated only when the dataset has boxes
    bool segmentation = true;  // evaluated only when the dataset has masks
    std::string timestamp;
    std::string config_fingerprint;
};

/// Per-image inputs for the detection evaluator. Images missing from the
/// prediction set (failed) contribute no predictions.
std::vector<ImageDetections> detection_inputs(const DatasetManifest& manifest, const PredictionSet& preds);

/// Throws ErrorKind::Validation when an image with detections carries no masks.
std::vector<SegmentationEval> segmentation_inputs(const DatasetManifest& manifest, const PredictionSet& preds,
                                                  double confidence_floor);

MetricsReport build_report(const DatasetManifest& manifest, const PredictionSet& preds,
                           const ReportOptions& options);

/// Values rounded to 6 decimals. Throws ErrorKind::Validation when totals
/// disagree with the per-image rows or the mAP with the per-class list.
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
std::string report_to_csv(const MetricsReport& report);

struct ReportFormats {
    bool json = true;
    bool csv = true;
};

/// Writes report.json and/or report.csv into out_dir.
void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir, ReportFormats formats = {});

} // namespace colony
