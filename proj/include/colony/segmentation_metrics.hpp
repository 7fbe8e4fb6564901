#pragma once

#include "colony/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace colony {

/// Pixel counts behind one Dice value. Tallies add across images, which
/// is what makes the pooled (micro) Dice an order-independent reduction.
struct PixelTally {
    std::uint64_t intersection = 0;
    std::uint64_t predicted = 0;
    std::uint64_t ground_truth = 0;

    /// 1.0 when both sides are empty.
    double dice() const noexcept;

    PixelTally& operator+=(const PixelTally& o) noexcept {
        intersection += o.intersection;
        predicted += o.predicted;
        ground_truth += o.ground_truth;
        return *this;
    }
    friend bool operator==(const PixelTally&, const PixelTally&) = default;
};

PixelTally tally(const InstanceMask& predicted, const InstanceMask& ground_truth);

/// Dice between the union of predicted instances and the ground-truth foreground.
double image_dice(std::span<const InstanceMask> pred_masks, const InstanceMask& gt_mask);

/// Union of the predicted boxes rasterized by the pixel-center rule.
InstanceMask detected_region(std::span<const BoundingBox> pred_boxes, ImageDims dims);

/// Dice of (prediction n R) against (ground truth n R) where R is the
/// detected region; nullopt when R is empty.
std::optional<double> image_dice_at_detection(std::span<const InstanceMask> pred_masks,
                                              std::span<const BoundingBox> pred_boxes,
                                              const InstanceMask& gt_mask);

struct SegmentationEval {
    std::string image_id;
    double dice = 0.0;
    std::optional<double> dice_at_detection;
    std::uint64_t detected_region_pixels = 0;
    std::uint64_t gt_pixels = 0;
    std::uint64_t pred_pixels = 0;
    PixelTally full;
    PixelTally in_region;
};

SegmentationEval evaluate_segmentation(std::string image_id, std::span<const InstanceMask> pred_masks,
                                       std::span<const BoundingBox> pred_boxes, const InstanceMask& gt_mask);

struct DatasetSegSummary {
    double micro_dice = 0.0;
    double macro_dice = 0.0;
    double micro_dice_at_detection = 0.0;
    double macro_dice_at_detection = 0.0;
    std::size_t images_evaluated = 0;
    std::size_t images_skipped = 0;
};

/// Micro values pool pixel tallies over images; macro values average the
/// per-image scores. Images with an empty detected region are skipped for
/// the Dice@detection figures and counted in images_skipped.
///
/// Throws ErrorKind::UndefinedMetric for an empty input or when every
/// image was skipped.
DatasetSegSummary summarize_segmentation(std::span<const SegmentationEval> per_image);

} // namespace colony
