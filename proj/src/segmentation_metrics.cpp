#include "colony/segmentation_metrics.hpp"

#include "colony/errors.hpp"

namespace colony {

double PixelTally::dice() const noexcept {
    const auto total = predicted + ground_truth;
    if (total == 0) return 1.0;
    return 2.0 * static_cast<double>(intersection) / static_cast<double>(total);
}

PixelTally tally(const InstanceMask& predicted, const InstanceMask& ground_truth) {
    return {intersection_count(predicted, ground_truth), predicted.foreground_count(),
            ground_truth.foreground_count()};
}

double image_dice(std::span<const InstanceMask> pred_masks, const InstanceMask& gt_mask) {
    return tally(mask_union(pred_masks, gt_mask.dims()), gt_mask).dice();
}

InstanceMask detected_region(std::span<const BoundingBox> pred_boxes, ImageDims dims) {
    InstanceMask region = InstanceMask::empty(dims);
    for (const auto& b : pred_boxes) region = mask_union(region, box_to_mask(b, dims));
    return region;
}

std::optional<double> image_dice_at_detection(std::span<const InstanceMask> pred_masks,
                                              std::span<const BoundingBox> pred_boxes,
                                              const InstanceMask& gt_mask) {
    const auto e = evaluate_segmentation({}, pred_masks, pred_boxes, gt_mask);
    return e.dice_at_detection;
}

SegmentationEval evaluate_segmentation(std::string image_id, std::span<const InstanceMask> pred_masks,
                                       std::span<const BoundingBox> pred_boxes, const InstanceMask& gt_mask) {
    const ImageDims dims = gt_mask.dims();
    const InstanceMask pred = mask_union(pred_masks, dims);
    const InstanceMask region = detected_region(pred_boxes, dims);

    SegmentationEval e;
    e.image_id = std::move(image_id);
    e.full = tally(pred, gt_mask);
    e.dice = e.full.dice();
    e.detected_region_pixels = region.foreground_count();
    e.gt_pixels = gt_mask.foreground_count();
    e.pred_pixels = pred.foreground_count();
    if (!region.is_empty()) {
        e.in_region = tally(mask_intersect(pred, region), mask_intersect(gt_mask, region));
        e.dice_at_detection = e.in_region.dice();
    }
    return e;
}

DatasetSegSummary summarize_segmentation(std::span<const SegmentationEval> per_image) {
    if (per_image.empty()) throw Error(ErrorKind::UndefinedMetric, "no images to summarize");

    DatasetSegSummary s;
    PixelTally full, region;
    double dice_sum = 0.0, dad_sum = 0.0;
    for (const auto& e : per_image) {
        full += e.full;
        dice_sum += e.dice;
        if (e.dice_at_detection) {
            region += e.in_region;
            dad_sum += *e.dice_at_detection;
            ++s.images_evaluated;
        } else {
            ++s.images_skipped;
        }
    }
    if (s.images_evaluated == 0)
        throw Error(ErrorKind::UndefinedMetric, "Dice@detection undefined: no image has a detected region");

    s.micro_dice = full.dice();
    s.macro_dice = dice_sum / static_cast<double>(per_image.size());
    s.micro_dice_at_detection = region.dice();
    s.macro_dice_at_detection = dad_sum / static_cast<double>(s.images_evaluated);
    return s;
}

} // namespace colony
