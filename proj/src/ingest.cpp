#include "colony/ingest.hpp"

#include "colony/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace colony {

namespace {

[[noreturn]] void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

const json& member(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key))
        fail(ErrorKind::Validation, context + ": missing field \"" + key + "\"");
    return j.at(key);
}

double number(const json& j, const std::string& context) {
    if (!j.is_number()) fail(ErrorKind::Validation, context + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(ErrorKind::Validation, context + ": non-finite number");
    return v;
}

int integer(const json& j, const std::string& context) {
    if (!j.is_number_integer()) fail(ErrorKind::Validation, context + ": expected an integer");
    return j.get<int>();
}

std::string text(const json& j, const std::string& context) {
    if (!j.is_string()) fail(ErrorKind::Validation, context + ": expected a string");
    return j.get<std::string>();
}

std::array<double, 4> four_numbers(const json& j, const std::string& context) {
    if (!j.is_array() || j.size() != 4) fail(ErrorKind::Validation, context + ": expected 4 numbers");
    return {number(j[0], context), number(j[1], context), number(j[2], context), number(j[3], context)};
}

BoundingBox checked_box(double x1, double y1, double x2, double y2, const std::string& context) {
    try {
        return BoundingBox(x1, y1, x2, y2);
    } catch (const Error& e) {
        fail(ErrorKind::Validation, context + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string dims_text(const ImageDims& d) {
    return std::to_string(d.width) + "x" + std::to_string(d.height);
}

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    static const std::set<std::string> kExt{".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
    return kExt.count(ext) > 0;
}

} // namespace

// ---- manifest ---------------------------------------------------------------

const ImageRecord* DatasetManifest::find_image(const std::string& image_id) const {
    for (const auto& r : images)
        if (r.image_id == image_id) return &r;
    return nullptr;
}

const std::vector<GroundTruthBox>& DatasetManifest::boxes_for(const std::string& image_id) const {
    static const std::vector<GroundTruthBox> kNone;
    if (!boxes) return kNone;
    const auto it = boxes->find(image_id);
    return it == boxes->end() ? kNone : it->second;
}

const InstanceMask* DatasetManifest::mask_for(const std::string& image_id) const {
    if (!masks) return nullptr;
    const auto it = masks->find(image_id);
    return it == masks->end() ? nullptr : &it->second.mask;
}

void DatasetManifest::validate() const {
    if (!has_boxes() && !has_masks())
        fail(ErrorKind::Validation, "dataset \"" + name + "\" has neither box nor mask ground truth");
    std::set<std::string> ids;
    for (const auto& r : images) {
        if (!ids.insert(r.image_id).second)
            fail(ErrorKind::Validation, "duplicate image id \"" + r.image_id + "\"");
        if (r.class_focus && !categories.count(*r.class_focus))
            fail(ErrorKind::ReferentialIntegrity,
                 "image \"" + r.image_id + "\" focus class " + std::to_string(*r.class_focus) + " is not declared");
    }
    if (boxes) {
        for (const auto& [id, list] : *boxes) {
            const ImageRecord* rec = find_image(id);
            if (!rec) fail(ErrorKind::ReferentialIntegrity, "boxes reference unknown image \"" + id + "\"");
            for (const auto& g : list) {
                if (!categories.count(g.class_id))
                    fail(ErrorKind::ReferentialIntegrity,
                         "image \"" + id + "\" uses undeclared category " + std::to_string(g.class_id));
                if (!g.box.fits(rec->dims))
                    fail(ErrorKind::InvalidGeometry, "image \"" + id + "\" has a box outside its frame");
            }
        }
    }
    if (masks) {
        for (const auto& [id, m] : *masks) {
            const ImageRecord* rec = find_image(id);
            if (!rec) fail(ErrorKind::ReferentialIntegrity, "masks reference unknown image \"" + id + "\"");
            if (m.mask.dims() != rec->dims)
                fail(ErrorKind::InvalidGeometry, "mask " + m.file_path + " is " + dims_text(m.mask.dims()) +
                                                     " but image \"" + id + "\" is " + dims_text(rec->dims));
        }
    }
}

json manifest_to_json(const DatasetManifest& m) {
    json j;
    j["name"] = m.name;
    j["categories"] = json::array();
    for (const auto& [id, name] : m.categories) j["categories"].push_back({{"id", id}, {"name", name}});
    j["images"] = json::array();
    for (const auto& r : m.images) {
        json ji{{"id", r.image_id}, {"file", r.file_path}, {"width", r.dims.width}, {"height", r.dims.height}};
        if (r.class_focus) ji["focus_class"] = *r.class_focus;
        j["images"].push_back(std::move(ji));
    }
    if (m.boxes) {
        j["boxes"] = json::object();
        for (const auto& [id, list] : *m.boxes) {
            json arr = json::array();
            for (const auto& g : list)
                arr.push_back({{"bbox", {g.box.x_min(), g.box.y_min(), g.box.width(), g.box.height()}},
                               {"category_id", g.class_id}});
            j["boxes"][id] = std::move(arr);
        }
    }
    if (m.masks) {
        j["masks"] = json::object();
        for (const auto& [id, gm] : *m.masks) j["masks"][id] = gm.file_path;
    }
    return j;
}

DatasetManifest manifest_from_json(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) fail(ErrorKind::Validation, "manifest: expected a JSON object");
    static const std::set<std::string> kKeys{"name", "categories", "images", "boxes", "masks"};
    for (const auto& [key, _] : j.items())
        if (!kKeys.count(key)) fail(ErrorKind::Validation, "manifest: unknown key \"" + key + "\"");

    DatasetManifest m;
    m.name = text(member(j, "name", "manifest"), "manifest.name");
    for (const auto& c : member(j, "categories", "manifest")) {
        const int id = integer(member(c, "id", "category"), "category.id");
        if (!m.categories.emplace(id, text(member(c, "name", "category"), "category.name")).second)
            fail(ErrorKind::Validation, "manifest: duplicate category id " + std::to_string(id));
    }
    for (const auto& ji : member(j, "images", "manifest")) {
        ImageRecord r;
        r.image_id = text(member(ji, "id", "image"), "image.id");
        const std::string ctx = "image \"" + r.image_id + "\"";
        r.file_path = resolve(base_dir, text(member(ji, "file", ctx), ctx + ".file")).string();
        try {
            r.dims = ImageDims(integer(member(ji, "width", ctx), ctx + ".width"),
                               integer(member(ji, "height", ctx), ctx + ".height"));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::InvalidGeometry) fail(ErrorKind::Validation, ctx + ": " + e.what());
            throw;
        }
        if (ji.contains("focus_class") && !ji["focus_class"].is_null())
            r.class_focus = integer(ji["focus_class"], ctx + ".focus_class");
        m.images.push_back(std::move(r));
    }
    if (j.contains("boxes")) {
        m.boxes.emplace();
        for (const auto& [id, list] : j["boxes"].items()) {
            auto& out = (*m.boxes)[id];
            for (const auto& jb : list) {
                const std::string ctx = "boxes of \"" + id + "\"";
                const auto b = four_numbers(member(jb, "bbox", ctx), ctx);
                out.push_back({checked_box(b[0], b[1], b[0] + b[2], b[1] + b[3], ctx),
                               integer(member(jb, "category_id", ctx), ctx + ".category_id")});
            }
        }
    }
    if (j.contains("masks")) {
        m.masks.emplace();
        for (const auto& [id, jp] : j["masks"].items()) {
            const std::string file = text(jp, "masks." + id);
            m.masks->emplace(id, GroundTruthMask{file, read_mask_png(resolve(base_dir, file))});
        }
    }
    m.validate();
    return m;
}

// ---- masks and predictions --------------------------------------------------

json mask_to_json(const InstanceMask& mask) {
    return {{"size", {mask.dims().height, mask.dims().width}}, {"counts", mask.runs()}, {"order", "row-major"}};
}

InstanceMask mask_from_json(const json& j) {
    const auto& size = member(j, "size", "rle");
    if (!size.is_array() || size.size() != 2) fail(ErrorKind::Validation, "rle.size: expected [h, w]");
    const auto& counts = member(j, "counts", "rle");
    if (!counts.is_array()) fail(ErrorKind::Validation, "rle.counts: expected an array of integers");
    std::vector<InstanceMask::Run> runs;
    runs.reserve(counts.size());
    for (const auto& c : counts) {
        if (!c.is_number_unsigned() && !(c.is_number_integer() && c.get<long long>() >= 0))
            fail(ErrorKind::Validation, "rle.counts: expected non-negative integers");
        const auto v = c.get<unsigned long long>();
        if (v > UINT32_MAX) fail(ErrorKind::Validation, "rle.counts: run too long");
        runs.push_back(static_cast<InstanceMask::Run>(v));
    }
    const std::string order = j.contains("order") ? text(j["order"], "rle.order") : "row-major";
    try {
        const ImageDims dims(integer(size[1], "rle.size"), integer(size[0], "rle.size"));
        if (order == "row-major") return InstanceMask(dims, std::move(runs));
        if (order == "column-major") return InstanceMask::from_column_major(dims, runs);
    } catch (const Error& e) {
        fail(ErrorKind::Validation, std::string("rle: ") + e.what());
    }
    fail(ErrorKind::Validation, "rle.order: unknown order \"" + order + "\"");
}

json box_to_json(const BoundingBox& box) { return {box.x_min(), box.y_min(), box.x_max(), box.y_max()}; }

json image_predictions_to_json(const ImagePredictions& p) {
    json j;
    j["detections"] = json::array();
    for (const auto& d : p.detections) {
        json jd{{"box", box_to_json(d.box)}, {"score", d.confidence}};
        if (d.phrase) jd["phrase"] = *d.phrase;
        j["detections"].push_back(std::move(jd));
    }
    if (p.masks) {
        j["masks"] = json::array();
        for (const auto& m : *p.masks) j["masks"].push_back(mask_to_json(m));
    }
    return j;
}

ImagePredictions image_predictions_from_json(const json& j, const ImageRecord& record) {
    const std::string ctx = "predictions for \"" + record.image_id + "\"";
    ImagePredictions p;
    const auto& dets = member(j, "detections", ctx);
    if (!dets.is_array()) fail(ErrorKind::Validation, ctx + ": detections must be an array");
    for (const auto& jd : dets) {
        const auto c = four_numbers(member(jd, "box", ctx), ctx + ".box");
        BoundingBox box = checked_box(c[0], c[1], c[2], c[3], ctx);
        if (!box.fits(record.dims)) fail(ErrorKind::Validation, ctx + ": box outside the image frame");
        const double score = number(member(jd, "score", ctx), ctx + ".score");
        if (score < 0.0 || score > 1.0)
            fail(ErrorKind::Validation, ctx + ": score " + std::to_string(score) + " outside [0, 1]");
        std::optional<std::string> phrase;
        if (jd.contains("phrase") && !jd["phrase"].is_null()) phrase = text(jd["phrase"], ctx + ".phrase");
        p.detections.push_back({box, score, std::move(phrase)});
    }
    if (j.contains("masks") && !j["masks"].is_null()) {
        if (!j["masks"].is_array()) fail(ErrorKind::Validation, ctx + ": masks must be an array");
        std::vector<InstanceMask> masks;
        for (const auto& jm : j["masks"]) {
            auto m = mask_from_json(jm);
            if (m.dims() != record.dims)
                fail(ErrorKind::Validation, ctx + ": mask is " + dims_text(m.dims()) + ", image is " +
                                                dims_text(record.dims));
            masks.push_back(std::move(m));
        }
        if (masks.size() != p.detections.size())
            fail(ErrorKind::Validation, ctx + ": " + std::to_string(masks.size()) + " masks for " +
                                            std::to_string(p.detections.size()) + " detections");
        p.masks = std::move(masks);
    }
    return p;
}

json prediction_set_to_json(const PredictionSet& set) {
    json j;
    j["source"] = set.source;
    j["model_version"] = set.model_version;
    if (set.params)
        j["params"] = {{"prompt", set.params->prompt},
                       {"box_threshold", set.params->box_threshold},
                       {"text_threshold", set.params->text_threshold},
                       {"confidence_floor", set.params->confidence_floor}};
    j["images"] = json::object();
    for (const auto& [id, p] : set.images) j["images"][id] = image_predictions_to_json(p);
    if (!set.failures.empty()) j["failures"] = set.failures;
    return j;
}

PredictionSet prediction_set_from_json(const json& j, const DatasetManifest& manifest) {
    if (!j.is_object()) fail(ErrorKind::Validation, "predictions: expected a JSON object");
    PredictionSet set;
    set.source = text(member(j, "source", "predictions"), "predictions.source");
    set.model_version = text(member(j, "model_version", "predictions"), "predictions.model_version");
    if (j.contains("params")) {
        const auto& jp = j["params"];
        set.params = PredictionParams{text(member(jp, "prompt", "params"), "params.prompt"),
                                      number(member(jp, "box_threshold", "params"), "params.box_threshold"),
                                      number(member(jp, "text_threshold", "params"), "params.text_threshold"),
                                      number(member(jp, "confidence_floor", "params"), "params.confidence_floor")};
    }
    const auto& images = member(j, "images", "predictions");
    if (!images.is_object()) fail(ErrorKind::Validation, "predictions.images: expected an object");
    for (const auto& [id, jp] : images.items()) {
        const ImageRecord* rec = manifest.find_image(id);
        if (!rec)
            fail(ErrorKind::ReferentialIntegrity,
                 "predictions reference image \"" + id + "\" absent from dataset \"" + manifest.name + "\"");
        set.images.emplace(id, image_predictions_from_json(jp, *rec));
    }
    if (j.contains("failures")) {
        for (const auto& [id, msg] : j["failures"].items()) {
            if (!manifest.find_image(id))
                fail(ErrorKind::ReferentialIntegrity, "failure entry for unknown image \"" + id + "\"");
            set.failures.emplace(id, text(msg, "failures." + id));
        }
    }
    return set;
}

// ---- files ------------------------------------------------------------------

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Validation, path.string() + ": " + e.what());
    }
}

void write_text_file(const std::string& content, const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
        out << content;
        if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorKind::Io, "cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_json_file(const json& j, const fs::path& path) { write_text_file(j.dump(2) + "\n", path); }

DatasetManifest load_manifest(const fs::path& path) {
    return manifest_from_json(read_json_file(path), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
    write_json_file(manifest_to_json(manifest), path);
}

PredictionSet load_predictions(const fs::path& path, const DatasetManifest& manifest) {
    return prediction_set_from_json(read_json_file(path), manifest);
}

void save_predictions(const PredictionSet& set, const fs::path& path) {
    write_json_file(prediction_set_to_json(set), path);
}

InstanceMask read_mask_png(const fs::path& path) {
    const cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) fail(ErrorKind::Io, "cannot decode mask " + path.string());
    std::vector<cv::Mat> channels;
    cv::split(img, channels);
    cv::Mat any = channels[0] != 0;
    for (std::size_t c = 1; c < channels.size(); ++c) any |= (channels[c] != 0);
    BinaryRaster r(ImageDims(img.cols, img.rows));
    for (int y = 0; y < img.rows; ++y) {
        const auto* row = any.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.cols; ++x) r.at(x, y) = row[x] ? 1 : 0;
    }
    return InstanceMask::encode(r);
}

void write_mask_png(const InstanceMask& mask, const fs::path& path) {
    const BinaryRaster r = mask.decode();
    cv::Mat img(r.dims.height, r.dims.width, CV_8UC1);
    for (int y = 0; y < r.dims.height; ++y)
        for (int x = 0; x < r.dims.width; ++x) img.at<std::uint8_t>(y, x) = r.at(x, y) ? 255 : 0;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) fail(ErrorKind::Io, "cannot write " + path.string());
}

ImageDims read_image_dims(const fs::path& path) {
    const cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (img.empty()) fail(ErrorKind::Io, "cannot decode image " + path.string());
    return ImageDims(img.cols, img.rows);
}

// ---- importers --------------------------------------------------------------

ImportReport import_coco_boxes(const fs::path& annotation_file, const fs::path& image_root,
                               const ImportOptions& options) {
    const json j = read_json_file(annotation_file);
    const std::string file = annotation_file.string();

    ImportReport report;
    DatasetManifest& m = report.manifest;
    m.name = annotation_file.stem().string();
    if (j.contains("info") && j["info"].is_object() && j["info"].contains("description") &&
        j["info"]["description"].is_string() && !j["info"]["description"].get<std::string>().empty())
        m.name = j["info"]["description"].get<std::string>();

    for (const auto& c : member(j, "categories", file))
        m.categories[integer(member(c, "id", file), file + ": category.id")] =
            text(member(c, "name", file), file + ": category.name");

    std::map<std::string, std::string> coco_to_id;  // COCO id (as text) -> image id
    for (const auto& ji : member(j, "images", file)) {
        const auto& jid = member(ji, "id", file);
        const std::string coco_id = jid.is_string() ? jid.get<std::string>() : jid.dump();
        const std::string name = text(member(ji, "file_name", file), file + ": image.file_name");
        ImageRecord r;
        r.image_id = fs::path(name).stem().string();
        r.file_path = (image_root / name).string();
        try {
            r.dims = ImageDims(integer(member(ji, "width", file), file + ": width"),
                               integer(member(ji, "height", file), file + ": height"));
        } catch (const Error& e) {
            fail(ErrorKind::Validation, file + ": image " + name + ": " + e.what());
        }
        if (m.find_image(r.image_id))
            fail(ErrorKind::Validation, file + ": two images share the file stem \"" + r.image_id + "\"");
        if (options.verify_image_dims) {
            const ImageDims actual = read_image_dims(r.file_path);
            if (actual != r.dims)
                fail(ErrorKind::InvalidGeometry, file + ": image " + r.file_path + " is " + dims_text(actual) +
                                                     ", annotation says " + dims_text(r.dims));
        }
        coco_to_id[coco_id] = r.image_id;
        m.images.push_back(std::move(r));
    }

    m.boxes.emplace();
    const auto& annotations = member(j, "annotations", file);
    report.source_records = annotations.size();
    std::size_t index = 0;
    for (const auto& a : annotations) {
        const std::string ctx = file + ": annotation #" + std::to_string(index++);
        const auto& jid = member(a, "image_id", ctx);
        const std::string coco_id = jid.is_string() ? jid.get<std::string>() : jid.dump();
        const auto it = coco_to_id.find(coco_id);
        if (it == coco_to_id.end())
            fail(ErrorKind::ReferentialIntegrity, ctx + " references missing image " + coco_id);
        const int cat = integer(member(a, "category_id", ctx), ctx + ".category_id");
        if (!m.categories.count(cat))
            fail(ErrorKind::ReferentialIntegrity, ctx + " references undeclared category " + std::to_string(cat));
        const auto b = four_numbers(member(a, "bbox", ctx), ctx + ".bbox");
        const ImageRecord& rec = *m.find_image(it->second);
        std::optional<BoundingBox> box;
        try {
            box.emplace(b[0], b[1], b[0] + b[2], b[1] + b[3]);
        } catch (const Error& e) {
            report.rejected.push_back(ctx + ": " + e.what());
            continue;
        }
        if (!box->fits(rec.dims)) {
            report.rejected.push_back(ctx + ": box extends past the " + dims_text(rec.dims) + " frame");
            continue;
        }
        (*m.boxes)[it->second].push_back({*box, cat});
        ++report.imported_records;
    }
    m.validate();
    return report;
}

ImportReport import_mask_folder(const fs::path& mask_root, const fs::path& image_root,
                                const std::string& pairing_rule, const ImportOptions& options) {
    const auto placeholder = pairing_rule.find("{stem}");
    if (placeholder == std::string::npos || pairing_rule.find("{stem}", placeholder + 1) != std::string::npos)
        fail(ErrorKind::Configuration, "pairing rule \"" + pairing_rule + "\" must contain {stem} exactly once");
    const std::string prefix = pairing_rule.substr(0, placeholder);
    const std::string suffix = pairing_rule.substr(placeholder + 6);
    auto looks_like_mask = [&](const std::string& name) {
        return name.size() > prefix.size() + suffix.size() && name.starts_with(prefix) && name.ends_with(suffix);
    };

    auto list_files = [](const fs::path& dir) {
        std::error_code ec;
        if (!fs::is_directory(dir, ec)) fail(ErrorKind::Io, "not a directory: " + dir.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        return files;
    };

    const auto candidates = list_files(image_root);
    const auto mask_files = list_files(mask_root);
    const bool shared_dir = fs::equivalent(mask_root, image_root);
    std::vector<fs::path> image_files;
    for (const auto& p : candidates) {
        if (!is_image_file(p)) continue;
        if (shared_dir && looks_like_mask(p.filename().string())) continue;
        image_files.push_back(p);
    }

    ImportReport report;
    DatasetManifest& m = report.manifest;
    m.name = fs::absolute(mask_root).lexically_normal().parent_path().filename().string();
    if (m.name.empty()) m.name = mask_root.filename().string();
    m.categories[1] = "colony";
    m.masks.emplace();
    report.source_records = image_files.size();

    std::map<std::string, fs::path> by_stem;
    for (const auto& p : image_files) {
        const std::string stem = p.stem().string();
        if (by_stem.count(stem))
            fail(ErrorKind::Configuration, "ambiguous pairing: " + by_stem[stem].string() + " and " + p.string() +
                                               " map to the same mask");
        by_stem[stem] = p;
    }

    std::set<std::string> used_masks;
    for (const auto& [stem, image_path] : by_stem) {
        const fs::path mask_path = mask_root / (prefix + stem + suffix);
        if (!fs::exists(mask_path)) {
            report.unpaired.push_back("image without mask: " + image_path.string());
            continue;
        }
        used_masks.insert(mask_path.filename().string());
        InstanceMask mask = read_mask_png(mask_path);
        if (options.verify_image_dims) {
            const ImageDims dims = read_image_dims(image_path);
            if (dims != mask.dims())
                fail(ErrorKind::InvalidGeometry, "mask " + mask_path.string() + " is " + dims_text(mask.dims()) +
                                                     " but image " + image_path.string() + " is " + dims_text(dims));
        }
        m.images.push_back({stem, fs::absolute(image_path).string(), mask.dims(), std::nullopt});
        m.masks->emplace(stem, GroundTruthMask{fs::absolute(mask_path).string(), std::move(mask)});
        ++report.imported_records;
    }
    for (const auto& p : mask_files) {
        const std::string name = p.filename().string();
        if (looks_like_mask(name) && !used_masks.count(name)) report.unpaired.push_back("mask without image: " + p.string());
    }
    m.validate();
    return report;
}

json preannotations_to_coco(const PredictionSet& preds, const DatasetManifest& manifest) {
    json j;
    j["info"] = {{"description", manifest.name + " pre-annotations"},
                 {"source", preds.source},
                 {"model_version", preds.model_version}};
    j["categories"] = json::array({{{"id", 1}, {"name", "colony"}}});
    j["images"] = json::array();
    j["annotations"] = json::array();
    int ann_id = 1;
    for (std::size_t k = 0; k < manifest.images.size(); ++k) {
        const ImageRecord& r = manifest.images[k];
        const int image_id = static_cast<int>(k) + 1;
        j["images"].push_back({{"id", image_id},
                               {"file_name", fs::path(r.file_path).filename().string()},
                               {"width", r.dims.width},
                               {"height", r.dims.height}});
        const auto it = preds.images.find(r.image_id);
        if (it == preds.images.end()) continue;
        const ImagePredictions& p = it->second;
        for (std::size_t d = 0; d < p.detections.size(); ++d) {
            const Detection& det = p.detections[d];
            json a{{"id", ann_id++},
                   {"image_id", image_id},
                   {"category_id", 1},
                   {"bbox", {det.box.x_min(), det.box.y_min(), det.box.width(), det.box.height()}},
                   {"area", det.box.area()},
                   {"iscrowd", 0},
                   {"score", det.confidence}};
            if (p.masks) {
                const InstanceMask& mask = (*p.masks)[d];
                a["segmentation"] = {{"size", {mask.dims().height, mask.dims().width}},
                                     {"counts", mask.column_major_counts()}};
                a["area"] = mask.foreground_count();
            }
            j["annotations"].push_back(std::move(a));
        }
    }
    return j;
}

void export_preannotations(const PredictionSet& preds, const DatasetManifest& manifest, const fs::path& out) {
    write_json_file(preannotations_to_coco(preds, manifest), out);
}

} // namespace colony
