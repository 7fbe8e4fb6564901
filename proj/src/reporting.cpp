#include "colony/reporting.hpp"

#include "colony/errors.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace colony {

namespace {

double round6(double v) { return std::round(v * 1e6) / 1e6; }

json opt_number(const std::optional<double>& v) { return v ? json(round6(*v)) : json(nullptr); }
json opt_count(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_opt_number(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}
std::optional<std::size_t> read_opt_count(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::size_t>();
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Inclusive pixel extent covered by the box under the pixel-center rule.
struct PixelExtent {
    int x0, y0, x1, y1;
    bool empty() const { return x0 > x1 || y0 > y1; }
};

PixelExtent extent(const BoundingBox& b, int width, int height) {
    auto lo = [](double v, int limit) { return std::clamp(static_cast<int>(std::ceil(v - 0.5)), 0, limit); };
    return {lo(b.x_min(), width), lo(b.y_min(), height), lo(b.x_max(), width) - 1, lo(b.y_max(), height) - 1};
}

void stroke(cv::Mat& img, const BoundingBox& box, const Rgb& color, int width) {
    const PixelExtent e = extent(box, img.cols, img.rows);
    if (e.empty()) return;
    const cv::Scalar c(color.b, color.g, color.r);
    for (int k = 0; k < width; ++k) {
        if (e.x0 + k > e.x1 - k || e.y0 + k > e.y1 - k) break;
        cv::rectangle(img, cv::Point(e.x0 + k, e.y0 + k), cv::Point(e.x1 - k, e.y1 - k), c, 1, cv::LINE_8);
    }
}

void blend(cv::Mat& img, const InstanceMask& mask, const Rgb& color, int percent) {
    const BinaryRaster r = mask.decode();
    const cv::Vec3b c = color.bgr();
    for (int y = 0; y < r.dims.height; ++y) {
        auto* row = img.ptr<cv::Vec3b>(y);
        for (int x = 0; x < r.dims.width; ++x) {
            if (!r.at(x, y)) continue;
            for (int ch = 0; ch < 3; ++ch)
                row[x][ch] = static_cast<std::uint8_t>((row[x][ch] * (100 - percent) + c[ch] * percent + 50) / 100);
        }
    }
}

} // namespace

void OverlaySpec::validate() const {
    if (stroke_width < 1) throw Error(ErrorKind::Configuration, "stroke width must be at least 1");
    if (matched_color == unmatched_gt_color || matched_color == unmatched_pred_color ||
        unmatched_gt_color == unmatched_pred_color)
        throw Error(ErrorKind::Configuration, "overlay colors must be distinct");
    if (mask_opacity_percent < 0 || mask_opacity_percent > 100)
        throw Error(ErrorKind::Configuration, "mask opacity must lie in [0, 100]");
}

cv::Mat render_overlay(const cv::Mat& image, const MatchResult& match, std::span<const Detection> predictions,
                       std::span<const GroundTruthBox> ground_truths, const std::vector<InstanceMask>* masks,
                       const OverlaySpec& spec) {
    spec.validate();
    cv::Mat out;
    if (image.type() == CV_8UC1)
        cv::cvtColor(image, out, cv::COLOR_GRAY2BGR);
    else if (image.type() == CV_8UC3)
        out = image.clone();
    else if (image.type() == CV_8UC4)
        cv::cvtColor(image, out, cv::COLOR_BGRA2BGR);
    else
        throw Error(ErrorKind::Validation, "overlay input must be an 8-bit gray, BGR or BGRA image");

    const auto tp = match.prediction_flags(predictions.size());
    if (masks) {
        if (masks->size() != predictions.size())
            throw Error(ErrorKind::Validation, "overlay masks are not aligned with predictions");
        for (std::size_t i = 0; i < masks->size(); ++i) {
            const InstanceMask& m = (*masks)[i];
            if (m.dims() != ImageDims(out.cols, out.rows))
                throw Error(ErrorKind::InvalidGeometry, "overlay mask does not match the image size");
            blend(out, m, tp[i] ? spec.matched_color : spec.unmatched_pred_color, spec.mask_opacity_percent);
        }
    }
    for (const std::size_t g : match.false_negatives)
        stroke(out, ground_truths[g].box, spec.unmatched_gt_color, spec.stroke_width);
    for (const auto& p : match.pairs)
        stroke(out, predictions[p.prediction].box, spec.matched_color, spec.stroke_width);
    for (const std::size_t p : match.false_positives)
        stroke(out, predictions[p].box, spec.unmatched_pred_color, spec.stroke_width);

    if (spec.draw_labels) {
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            const Rgb& color = tp[i] ? spec.matched_color : spec.unmatched_pred_color;
            char label[16];
            std::snprintf(label, sizeof label, "%.2f", predictions[i].confidence);
            const PixelExtent e = extent(predictions[i].box, out.cols, out.rows);
            cv::putText(out, label, cv::Point(e.x0, std::max(e.y0 - 2, 8)), cv::FONT_HERSHEY_SIMPLEX, 0.3,
                        cv::Scalar(color.b, color.g, color.r), 1, cv::LINE_8);
        }
    }
    return out;
}

void write_overlay_png(const cv::Mat& overlay, const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    if (!cv::imwrite(path.string(), overlay)) throw Error(ErrorKind::Io, "cannot write overlay " + path.string());
}

// ---- report assembly --------------------------------------------------------

std::vector<ImageDetections> detection_inputs(const DatasetManifest& manifest, const PredictionSet& preds) {
    std::vector<ImageDetections> out;
    out.reserve(manifest.images.size());
    for (const auto& r : manifest.images) {
        ImageDetections d{r.image_id, {}, manifest.boxes_for(r.image_id)};
        if (const auto it = preds.images.find(r.image_id); it != preds.images.end())
            d.predictions = it->second.detections;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<SegmentationEval> segmentation_inputs(const DatasetManifest& manifest, const PredictionSet& preds,
                                                  double confidence_floor) {
    std::vector<SegmentationEval> out;
    for (const auto& r : manifest.images) {
        const InstanceMask* gt = manifest.mask_for(r.image_id);
        if (!gt) continue;
        std::vector<InstanceMask> masks;
        std::vector<BoundingBox> boxes;
        if (const auto it = preds.images.find(r.image_id); it != preds.images.end()) {
            const ImagePredictions& p = it->second;
            if (!p.detections.empty() && !p.masks)
                throw Error(ErrorKind::Validation,
                            "predictions for \"" + r.image_id + "\" carry no masks; segmentation cannot be scored");
            for (std::size_t i = 0; i < p.detections.size(); ++i) {
                if (p.detections[i].confidence < confidence_floor) continue;
                boxes.push_back(p.detections[i].box);
                masks.push_back((*p.masks)[i]);
            }
        }
        out.push_back(evaluate_segmentation(r.image_id, masks, boxes, *gt));
    }
    return out;
}

MetricsReport build_report(const DatasetManifest& manifest, const PredictionSet& preds,
                           const ReportOptions& options) {
    MetricsReport report;
    report.meta = {manifest.name,  preds.source,           preds.model_version,   options.config_fingerprint,
                   options.timestamp, options.iou_threshold, options.confidence_floor};
    for (const auto& r : manifest.images) report.per_image.push_back({r.image_id, {}, {}, {}, {}, {}});

    if (options.detection && manifest.has_boxes()) {
        const auto inputs = detection_inputs(manifest, preds);
        const auto s = evaluate_detection(inputs, options.iou_threshold, options.confidence_floor);
        report.detection = DetectionReport{s.per_class, s.map, s.tp, s.fp, s.fn};
        for (std::size_t i = 0; i < s.per_image.size(); ++i) {
            report.per_image[i].tp = s.per_image[i].tp;
            report.per_image[i].fp = s.per_image[i].fp;
            report.per_image[i].fn = s.per_image[i].fn;
        }
        if (!s.map) report.notes.push_back("no ground-truth boxes: mAP undefined");
    }
    if (options.segmentation && manifest.has_masks()) {
        const auto evals = segmentation_inputs(manifest, preds, options.confidence_floor);
        for (const auto& e : evals) {
            for (auto& row : report.per_image) {
                if (row.image_id != e.image_id) continue;
                row.dice = e.dice;
                row.dice_at_detection = e.dice_at_detection;
            }
        }
        try {
            report.segmentation = summarize_segmentation(evals);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UndefinedMetric) throw;
            report.notes.push_back(std::string("segmentation summary undefined: ") + e.what());
        }
    }
    if (!preds.failures.empty())
        report.notes.push_back(std::to_string(preds.failures.size()) +
                               " image(s) failed in the pipeline and were scored without predictions");
    return report;
}

// ---- serialization ----------------------------------------------------------

json report_to_json(const MetricsReport& r) {
    json j;
    j["dataset"] = r.meta.dataset;
    j["provider"] = r.meta.provider;
    j["model_version"] = r.meta.model_version;
    j["config_fingerprint"] = r.meta.config_fingerprint;
    j["timestamp"] = r.meta.timestamp;
    j["iou_threshold"] = round6(r.meta.iou_threshold);
    j["confidence_floor"] = round6(r.meta.confidence_floor);

    if (r.detection) {
        const DetectionReport& d = *r.detection;
        std::size_t tp = 0, fp = 0, fn = 0;
        for (const auto& row : r.per_image) {
            tp += row.tp.value_or(0);
            fp += row.fp.value_or(0);
            fn += row.fn.value_or(0);
        }
        if (tp != d.tp || fp != d.fp || fn != d.fn)
            throw Error(ErrorKind::Validation, "report totals disagree with per-image counts");
        std::optional<double> mean;
        if (!d.per_class.empty()) mean = mean_average_precision(d.per_class);
        if (mean.has_value() != d.map.has_value() || (mean && std::abs(*mean - *d.map) > 1e-6))
            throw Error(ErrorKind::Validation, "report mAP disagrees with its per-class APs");

        json classes = json::array();
        for (const auto& c : d.per_class)
            classes.push_back({{"class_id", c.class_id},
                               {"ap", round6(c.ap)},
                               {"num_ground_truths", c.num_ground_truths},
                               {"num_predictions", c.num_predictions}});
        j["detection"] = {{"per_class", classes}, {"map", opt_number(d.map)}, {"tp", d.tp}, {"fp", d.fp}, {"fn", d.fn}};
    } else {
        j["detection"] = nullptr;
    }

    if (r.segmentation) {
        const DatasetSegSummary& s = *r.segmentation;
        j["segmentation"] = {{"micro_dice", round6(s.micro_dice)},
                             {"macro_dice", round6(s.macro_dice)},
                             {"micro_dice_at_detection", round6(s.micro_dice_at_detection)},
                             {"macro_dice_at_detection", round6(s.macro_dice_at_detection)},
                             {"images_evaluated", s.images_evaluated},
                             {"images_skipped", s.images_skipped}};
    } else {
        j["segmentation"] = nullptr;
    }

    j["per_image"] = json::array();
    for (const auto& row : r.per_image)
        j["per_image"].push_back({{"image_id", row.image_id},
                                  {"tp", opt_count(row.tp)},
                                  {"fp", opt_count(row.fp)},
                                  {"fn", opt_count(row.fn)},
                                  {"dice", opt_number(row.dice)},
                                  {"dice_at_detection", opt_number(row.dice_at_detection)}});
    j["notes"] = r.notes;
    return j;
}

MetricsReport report_from_json(const json& j) {
    try {
        MetricsReport r;
        r.meta = {j.at("dataset").get<std::string>(),
                  j.at("provider").get<std::string>(),
                  j.at("model_version").get<std::string>(),
                  j.at("config_fingerprint").get<std::string>(),
                  j.at("timestamp").get<std::string>(),
                  j.at("iou_threshold").get<double>(),
                  j.at("confidence_floor").get<double>()};
        if (!j.at("detection").is_null()) {
            const json& d = j["detection"];
            DetectionReport det;
            for (const auto& c : d.at("per_class"))
                det.per_class.push_back({c.at("class_id").get<int>(), c.at("ap").get<double>(),
                                         c.at("num_ground_truths").get<std::size_t>(),
                                         c.at("num_predictions").get<std::size_t>()});
            det.map = read_opt_number(d, "map");
            det.tp = d.at("tp").get<std::size_t>();
            det.fp = d.at("fp").get<std::size_t>();
            det.fn = d.at("fn").get<std::size_t>();
            r.detection = std::move(det);
        }
        if (!j.at("segmentation").is_null()) {
            const json& s = j["segmentation"];
            r.segmentation = DatasetSegSummary{s.at("micro_dice").get<double>(),
                                               s.at("macro_dice").get<double>(),
                                               s.at("micro_dice_at_detection").get<double>(),
                                               s.at("macro_dice_at_detection").get<double>(),
                                               s.at("images_evaluated").get<std::size_t>(),
                                               s.at("images_skipped").get<std::size_t>()};
        }
        for (const auto& row : j.at("per_image"))
            r.per_image.push_back({row.at("image_id").get<std::string>(), read_opt_count(row, "tp"),
                                   read_opt_count(row, "fp"), read_opt_count(row, "fn"), read_opt_number(row, "dice"),
                                   read_opt_number(row, "dice_at_detection")});
        r.notes = j.at("notes").get<std::vector<std::string>>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Validation, std::string("malformed report: ") + e.what());
    }
}

std::string report_to_csv(const MetricsReport& r) {
    auto count = [](const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); };
    auto value = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); };
    std::ostringstream os;
    os << "image_id,tp,fp,fn,dice,dice_at_detection\n";
    for (const auto& row : r.per_image)
        os << row.image_id << ',' << count(row.tp) << ',' << count(row.fp) << ',' << count(row.fn) << ','
           << value(row.dice) << ',' << value(row.dice_at_detection) << '\n';
    os << "__summary__,";
    if (r.detection)
        os << r.detection->tp << ',' << r.detection->fp << ',' << r.detection->fn << ',';
    else
        os << ",,,";
    if (r.segmentation)
        os << fixed6(r.segmentation->micro_dice) << ',' << fixed6(r.segmentation->micro_dice_at_detection);
    else
        os << ',';
    os << '\n';
    return os.str();
}

void emit_report(const MetricsReport& report, const fs::path& out_dir, ReportFormats formats) {
    const json j = report_to_json(report);
    if (formats.json) write_json_file(j, out_dir / "report.json");
    if (formats.csv) write_text_file(report_to_csv(report), out_dir / "report.csv");
}

} // namespace colony
