#include "colony/detection_metrics.hpp"

#include "colony/errors.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

namespace colony {

std::vector<bool> MatchResult::prediction_flags(std::size_t num_predictions) const {
    std::vector<bool> flags(num_predictions, false);
    for (const auto& p : pairs) flags.at(p.prediction) = true;
    return flags;
}

MatchResult match_boxes(std::span<const BoundingBox> predictions, std::span<const double> confidences,
                        std::span<const BoundingBox> ground_truths, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
        std::ostringstream os;
        os << "IoU threshold must lie in (0, 1], got " << iou_threshold;
        throw Error(ErrorKind::Configuration, os.str());
    }
    if (predictions.size() != confidences.size())
        throw Error(ErrorKind::Configuration, "prediction and confidence counts differ");

    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });

    MatchResult result;
    result.iou_threshold = iou_threshold;
    std::vector<bool> claimed(ground_truths.size(), false);
    for (const std::size_t p : order) {
        std::optional<std::size_t> best;
        double best_iou = 0.0;
        for (std::size_t g = 0; g < ground_truths.size(); ++g) {
            if (claimed[g]) continue;
            const double iou = box_iou(predictions[p], ground_truths[g]);
            if (iou >= iou_threshold && (!best || iou > best_iou)) {
                best = g;
                best_iou = iou;
            }
        }
        if (best) {
            claimed[*best] = true;
            result.pairs.push_back({p, *best, best_iou});
        } else {
            result.false_positives.push_back(p);
        }
    }
    for (std::size_t g = 0; g < ground_truths.size(); ++g)
        if (!claimed[g]) result.false_negatives.push_back(g);
    return result;
}

MatchResult match_image(std::span<const Detection> predictions, std::span<const GroundTruthBox> ground_truths,
                        double iou_threshold) {
    std::vector<BoundingBox> pred_boxes, gt_boxes;
    std::vector<double> confidences;
    pred_boxes.reserve(predictions.size());
    confidences.reserve(predictions.size());
    for (const auto& d : predictions) {
        pred_boxes.push_back(d.box);
        confidences.push_back(d.confidence);
    }
    gt_boxes.reserve(ground_truths.size());
    for (const auto& g : ground_truths) gt_boxes.push_back(g.box);
    return match_boxes(pred_boxes, confidences, gt_boxes, iou_threshold);
}

std::vector<PRPoint> pr_curve(std::span<const ScoredFlag> flags, std::size_t total_ground_truths) {
    if (total_ground_truths == 0)
        throw Error(ErrorKind::UndefinedMetric, "precision/recall undefined for a class without ground truths");
    std::vector<ScoredFlag> sorted(flags.begin(), flags.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const ScoredFlag& a, const ScoredFlag& b) { return a.confidence > b.confidence; });

    std::vector<PRPoint> points;
    points.reserve(sorted.size());
    std::size_t tp = 0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        if (sorted[k].true_positive) ++tp;
        points.push_back({sorted[k].confidence, static_cast<double>(tp) / static_cast<double>(k + 1),
                          static_cast<double>(tp) / static_cast<double>(total_ground_truths)});
    }
    return points;
}

double average_precision(std::span<const PRPoint> points) {
    if (points.empty()) return 0.0;
    // Envelope from the right: best precision achievable at this recall or beyond.
    std::vector<double> envelope(points.size());
    double running = 0.0;
    for (std::size_t i = points.size(); i-- > 0;) {
        running = std::max(running, points[i].precision);
        envelope[i] = running;
    }
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        ap += (points[i].recall - prev_recall) * envelope[i];
        prev_recall = points[i].recall;
    }
    return std::clamp(ap, 0.0, 1.0);
}

double mean_average_precision(std::span<const ClassAP> per_class) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : per_class) {
        if (c.num_ground_truths == 0) continue;
        sum += c.ap;
        ++n;
    }
    if (n == 0) throw Error(ErrorKind::UndefinedMetric, "mAP undefined: no class has ground truths");
    return sum / static_cast<double>(n);
}

DetectionSummary evaluate_detection(std::span<const ImageDetections> images, double iou_threshold,
                                    double confidence_floor) {
    DetectionSummary summary;

    std::vector<std::vector<Detection>> kept(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (const auto& d : images[i].predictions)
            if (d.confidence >= confidence_floor) kept[i].push_back(d);
    }

    // Class-agnostic counts.
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto m = match_image(kept[i], images[i].ground_truths, iou_threshold);
        ImageMatchCounts c{images[i].image_id, m.pairs.size(), m.false_positives.size(), m.false_negatives.size()};
        summary.tp += c.tp;
        summary.fp += c.fp;
        summary.fn += c.fn;
        summary.per_image.push_back(std::move(c));
    }

    std::set<ClassId> classes;
    for (const auto& img : images)
        for (const auto& g : img.ground_truths) classes.insert(g.class_id);

    for (const ClassId cls : classes) {
        std::vector<ScoredFlag> pooled;
        std::size_t num_gt = 0;
        for (std::size_t i = 0; i < images.size(); ++i) {
            std::vector<GroundTruthBox> gts;
            for (const auto& g : images[i].ground_truths)
                if (g.class_id == cls) gts.push_back(g);
            if (gts.empty()) continue;
            num_gt += gts.size();
            const auto m = match_image(kept[i], gts, iou_threshold);
            const auto flags = m.prediction_flags(kept[i].size());
            for (std::size_t p = 0; p < kept[i].size(); ++p) pooled.push_back({kept[i][p].confidence, flags[p]});
        }
        const auto curve = pr_curve(pooled, num_gt);
        summary.per_class.push_back({cls, average_precision(curve), num_gt, pooled.size()});
    }
    if (!summary.per_class.empty()) summary.map = mean_average_precision(summary.per_class);
    return summary;
}

} // namespace colony
