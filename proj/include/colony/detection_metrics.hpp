#pragma once

#include "colony/geometry.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace colony {

inline constexpr double kDefaultIouThreshold = 0.2;

using ClassId = int;

struct Detection {
    BoundingBox box;
    double confidence;
    std::optional<std::string> phrase;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthBox {
    BoundingBox box;
    ClassId class_id;

    friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct MatchPair {
    std::size_t prediction;
    std::size_t ground_truth;
    double iou;

    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

/// Outcome of matching one image. Indices refer to the input order.
struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<std::size_t> false_positives;
    std::vector<std::size_t> false_negatives;
    double iou_threshold = kDefaultIouThreshold;

    /// TP flag per prediction index.
    std::vector<bool> prediction_flags(std::size_t num_predictions) const;

    friend bool operator==(const MatchResult&, const MatchResult&) = default;
};

/// Greedy matching: predictions in descending confidence (ties by input
/// index) each claim the unclaimed ground truth of highest IoU at or above
/// the threshold (ties by lower ground-truth index).
///
/// Throws ErrorKind::Configuration unless 0 < iou_threshold <= 1.
MatchResult match_boxes(std::span<const BoundingBox> predictions, std::span<const double> confidences,
                        std::span<const BoundingBox> ground_truths, double iou_threshold);

MatchResult match_image(std::span<const Detection> predictions, std::span<const GroundTruthBox> ground_truths,
                        double iou_threshold = kDefaultIouThreshold);

struct ScoredFlag {
    double confidence;
    bool true_positive;
};

struct PRPoint {
    double confidence_cutoff;
    double precision;
    double recall;
};

/// One point per prediction after stable-sorting by descending confidence.
/// Throws ErrorKind::UndefinedMetric when total_ground_truths is zero.
std::vector<PRPoint> pr_curve(std::span<const ScoredFlag> flags, std::size_t total_ground_truths);

/// All-points interpolated AP: the area under the precision envelope
/// p(r) = max{precision at recall >= r}. Zero for an empty curve.
double average_precision(std::span<const PRPoint> points);

struct ClassAP {
    ClassId class_id;
    double ap;
    std::size_t num_ground_truths;
    std::size_t num_predictions;

    friend bool operator==(const ClassAP&, const ClassAP&) = default;
};

/// Unweighted mean over classes with at least one ground truth.
/// Throws ErrorKind::UndefinedMetric when no such class exists.
double mean_average_precision(std::span<const ClassAP> per_class);

/// Predictions and ground truths for one image, as consumed by the
/// dataset-level evaluator.
struct ImageDetections {
    std::string image_id;
    std::vector<Detection> predictions;
    std::vector<GroundTruthBox> ground_truths;
};

struct ImageMatchCounts {
    std::string image_id;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

struct DetectionSummary {
    std::vector<ClassAP> per_class;
    std::optional<double> map;  // absent when no class has ground truths
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::vector<ImageMatchCounts> per_image;
};

/// Dataset-level detection evaluation for a class-agnostic detector.
///
/// Counts come from class-agnostic matching of every prediction against
/// every ground truth of the image. AP is computed per dataset class as a
/// binary task: only images holding ground truths of that class take part,
/// every prediction there is a candidate, and it is matched against that
/// class's ground truths only. Predictions below confidence_floor are
/// dropped first.
DetectionSummary evaluate_detection(std::span<const ImageDetections> images,
                                    double iou_threshold = kDefaultIouThreshold,
                                    double confidence_floor = 0.0);

} // namespace colony
