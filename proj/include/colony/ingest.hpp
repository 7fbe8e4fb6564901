#pragma once

#include "colony/detection_metrics.hpp"
#include "colony/geometry.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace colony {

struct ImageRecord {
    std::string image_id;
    std::string file_path;
    ImageDims dims;
    std::optional<ClassId> class_focus;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct GroundTruthMask {
    std::string file_path;
    InstanceMask mask;
};

/// A dataset with box ground truth, mask ground truth, or both. The
/// presence of `boxes` / `masks` (even when a given image has no entry)
/// records which ground-truth types the dataset carries.
struct DatasetManifest {
    std::string name;
    std::map<ClassId, std::string> categories;
    std::vector<ImageRecord> images;
    std::optional<std::map<std::string, std::vector<GroundTruthBox>>> boxes;
    std::optional<std::map<std::string, GroundTruthMask>> masks;

    bool has_boxes() const noexcept { return boxes.has_value(); }
    bool has_masks() const noexcept { return masks.has_value(); }

    const ImageRecord* find_image(const std::string& image_id) const;
    const std::vector<GroundTruthBox>& boxes_for(const std::string& image_id) const;
    const InstanceMask* mask_for(const std::string& image_id) const;

    /// Throws ReferentialIntegrity / Validation / InvalidGeometry on the
    /// first broken invariant.
    void validate() const;
};

struct ImagePredictions {
    std::vector<Detection> detections;
    std::optional<std::vector<InstanceMask>> masks;  // index-aligned with detections

    friend bool operator==(const ImagePredictions&, const ImagePredictions&) = default;
};

/// Provider settings a prediction set was produced with.
struct PredictionParams {
    std::string prompt;
    double box_threshold = 0.0;
    double text_threshold = 0.0;
    double confidence_floor = 0.0;

    friend bool operator==(const PredictionParams&, const PredictionParams&) = default;
};

struct PredictionSet {
    std::string source;
    std::string model_version;
    std::optional<PredictionParams> params;
    std::map<std::string, ImagePredictions> images;
    std::map<std::string, std::string> failures;  // image_id -> error message

    friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

// ---- JSON forms -------------------------------------------------------------

nlohmann::json mask_to_json(const InstanceMask& mask);
/// Accepts "order" of "row-major" (default) or "column-major".
InstanceMask mask_from_json(const nlohmann::json& j);

nlohmann::json box_to_json(const BoundingBox& box);
nlohmann::json image_predictions_to_json(const ImagePredictions& p);
/// Validates one image entry against its record (arity, confidence range, frame bounds).
ImagePredictions image_predictions_from_json(const nlohmann::json& j, const ImageRecord& record);

nlohmann::json prediction_set_to_json(const PredictionSet& set);
PredictionSet prediction_set_from_json(const nlohmann::json& j, const DatasetManifest& manifest);

nlohmann::json manifest_to_json(const DatasetManifest& manifest);
/// Relative file paths resolve against base_dir. Mask files are decoded.
DatasetManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// ---- files ------------------------------------------------------------------

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Writes `j.dump(2)` plus a trailing newline atomically.
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

PredictionSet load_predictions(const std::filesystem::path& path, const DatasetManifest& manifest);
void save_predictions(const PredictionSet& set, const std::filesystem::path& path);

/// Nonzero pixels in any channel are foreground.
InstanceMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const InstanceMask& mask, const std::filesystem::path& path);
ImageDims read_image_dims(const std::filesystem::path& path);

// ---- importers / exporters --------------------------------------------------

struct ImportOptions {
    bool verify_image_dims = true;
};

struct ImportReport {
    DatasetManifest manifest;
    std::size_t source_records = 0;
    std::size_t imported_records = 0;
    std::vector<std::string> rejected;  // one message per dropped record
    std::vector<std::string> unpaired;  // mask-folder import only

    std::size_t warning_count() const noexcept { return rejected.size() + unpaired.size(); }
};

/// COCO-style annotations: images {id, file_name, width, height},
/// categories {id, name}, annotations {image_id, category_id, bbox [x, y, w, h]}.
/// Image ids become the file-name stem.
ImportReport import_coco_boxes(const std::filesystem::path& annotation_file,
                               const std::filesystem::path& image_root, const ImportOptions& options = {});

/// Pairs every image in image_root with the mask named by pairing_rule,
/// where "{stem}" expands to the image's file-name stem.
ImportReport import_mask_folder(const std::filesystem::path& mask_root, const std::filesystem::path& image_root,
                                const std::string& pairing_rule = "{stem}.png",
                                const ImportOptions& options = {});

/// COCO annotation JSON with one annotation per detection; masks, when
/// present, as column-major uncompressed RLE.
nlohmann::json preannotations_to_coco(const PredictionSet& preds, const DatasetManifest& manifest);
void export_preannotations(const PredictionSet& preds, const DatasetManifest& manifest,
                           const std::filesystem::path& out);

} // namespace colony
