// colony: import datasets, run the detect/segment pipeline, evaluate and render.

#include "colony/config.hpp"
#include "colony/errors.hpp"
#include "colony/ingest.hpp"
#include "colony/pipeline.hpp"
#include "colony/reporting.hpp"

#include "CLI11.hpp"

#include <opencv2/imgcodecs.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>

namespace fs = std::filesystem;
using namespace colony;

namespace {

std::mutex log_mutex;

void log_line(std::string_view line) {
    std::lock_guard lock(log_mutex);
    std::cerr << line << '\n';
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Options shared by the config-aware subcommands. Only flags actually given
/// on the command line enter the flag layer.
struct CommonFlags {
    std::string config_file;
    std::string manifest, predictions, provider, prompt, out, cache_dir;
    double confidence_floor = 0, iou_threshold = 0, box_threshold = 0, text_threshold = 0;
    int jobs = 0, stroke_width = 0;
    bool labels = false;
    std::string timestamp;

    std::map<std::string, CLI::Option*> options;

    void add_config(CLI::App& app) {
        app.add_option("--config", config_file, "Config file (key = value lines)")->check(CLI::ExistingFile);
        app.add_option("--timestamp", timestamp, "Timestamp recorded in the report (default: now, UTC)");
    }
    void add(CLI::App& app, const std::string& key, const std::string& flag, std::string& target,
             const std::string& help) {
        options[key] = app.add_option(flag, target, help);
    }
    template <class T>
    void add(CLI::App& app, const std::string& key, const std::string& flag, T& target, const std::string& help) {
        options[key] = app.add_option(flag, target, help);
    }

    ConfigLayer flag_layer() const {
        ConfigLayer layer;
        for (const auto& [key, opt] : options) {
            if (opt->count() == 0) continue;
            layer[key] = opt->as<std::string>();
        }
        if (labels) layer["draw_labels"] = "true";
        return layer;
    }

    RunConfig resolve() const {
        const ConfigLayer file = config_file.empty() ? ConfigLayer{} : load_config_file(config_file);
        std::optional<std::string> env;
        if (const char* v = std::getenv("COLONY_PROVIDER_URL")) env = v;
        return RunConfig::resolve(file, flag_layer(), env);
    }

    std::string stamp() const { return timestamp.empty() ? utc_now() : timestamp; }
};

void add_eval_flags(CLI::App& app, CommonFlags& f) {
    f.add_config(app);
    f.add(app, "manifest", "--manifest", f.manifest, "Dataset manifest JSON");
    f.add(app, "predictions", "--predictions", f.predictions, "Prediction set JSON");
    f.add(app, "iou_threshold", "--iou-threshold", f.iou_threshold, "IoU threshold for matching (default 0.2)");
    f.add(app, "confidence_floor", "--confidence-floor", f.confidence_floor, "Drop detections scored below this");
    f.add(app, "out", "--out", f.out, "Output directory");
}

std::string require(const std::optional<std::string>& v, const char* what) {
    if (!v || v->empty()) throw Error(ErrorKind::Configuration, std::string("missing ") + what);
    return *v;
}

void write_resolved_config(const RunConfig& c) {
    write_text_file(c.to_text(), fs::path(c.out) / "resolved_config.toml");
}

int render_all(const DatasetManifest& manifest, const PredictionSet& preds, const RunConfig& c, bool strict) {
    OverlaySpec spec;
    spec.stroke_width = c.stroke_width;
    spec.draw_labels = c.draw_labels;
    const fs::path dir = fs::path(c.out) / "overlays";
    int written = 0;
    for (const auto& r : manifest.images) {
        const cv::Mat image = cv::imread(r.file_path, cv::IMREAD_COLOR);
        if (image.empty()) {
            if (strict) throw Error(ErrorKind::Io, "cannot decode image " + r.file_path);
            log_line("warning: no overlay for " + r.image_id + ": cannot decode " + r.file_path);
            continue;
        }
        std::vector<Detection> dets;
        const std::vector<InstanceMask>* masks = nullptr;
        std::vector<InstanceMask> kept_masks;
        if (const auto it = preds.images.find(r.image_id); it != preds.images.end()) {
            const auto& p = it->second;
            for (std::size_t i = 0; i < p.detections.size(); ++i) {
                if (p.detections[i].confidence < c.pipeline.confidence_floor) continue;
                dets.push_back(p.detections[i]);
                if (p.masks) kept_masks.push_back((*p.masks)[i]);
            }
            if (p.masks) masks = &kept_masks;
        }
        const auto& gts = manifest.boxes_for(r.image_id);
        const MatchResult m = match_image(dets, gts, c.pipeline.iou_threshold);
        write_overlay_png(render_overlay(image, m, dets, gts, masks, spec), dir / (r.image_id + ".png"));
        ++written;
    }
    log_line("wrote " + std::to_string(written) + " overlays to " + dir.string());
    return written;
}

int cmd_run(const CommonFlags& f, bool overlays) {
    const RunConfig c = f.resolve();
    const DatasetManifest manifest = load_manifest(require(c.manifest, "--manifest"));
    fs::create_directories(c.out);
    write_resolved_config(c);

    auto provider = make_provider(require(c.provider, "--provider (or COLONY_PROVIDER_URL)"), manifest, log_line);
    const PipelineRun run = run_pipeline(manifest, c.pipeline, *provider, log_line);
    save_predictions(run.predictions, fs::path(c.out) / "predictions.json");

    ReportOptions opts;
    opts.iou_threshold = c.pipeline.iou_threshold;
    opts.confidence_floor = c.pipeline.confidence_floor;
    opts.timestamp = f.stamp();
    opts.config_fingerprint = c.fingerprint();
    opts.segmentation = provider->provides_masks();
    MetricsReport report = build_report(manifest, run.predictions, opts);
    if (run.aborted) report.notes.push_back("run aborted: " + run.abort_reason);
    emit_report(report, c.out);
    if (overlays) render_all(manifest, run.predictions, c, false);

    log_line(std::to_string(run.completed) + " completed, " + std::to_string(run.failed) + " failed, " +
             std::to_string(run.cache_hits) + " from cache");
    if (run.aborted) {
        log_line("error: " + run.abort_reason);
        return 1;
    }
    return run.failed > 0 ? 1 : 0;
}

int cmd_eval(const CommonFlags& f, bool detection) {
    const RunConfig c = f.resolve();
    const DatasetManifest manifest = load_manifest(require(c.manifest, "--manifest"));
    if (detection && !manifest.has_boxes())
        throw Error(ErrorKind::Validation, "dataset \"" + manifest.name + "\" has no box ground truth");
    if (!detection && !manifest.has_masks())
        throw Error(ErrorKind::Validation, "dataset \"" + manifest.name + "\" has no mask ground truth");
    const PredictionSet preds = load_predictions(require(c.predictions, "--predictions"), manifest);

    ReportOptions opts;
    opts.iou_threshold = c.pipeline.iou_threshold;
    opts.confidence_floor = c.pipeline.confidence_floor;
    opts.timestamp = f.stamp();
    opts.config_fingerprint = c.fingerprint();
    opts.detection = detection;
    opts.segmentation = !detection;
    MetricsReport report = build_report(manifest, preds, opts);
    if (!detection && !report.segmentation)
        throw Error(ErrorKind::UndefinedMetric, "segmentation summary undefined for dataset \"" + manifest.name +
                                                    "\": no image has a detected region");
    fs::create_directories(c.out);
    write_resolved_config(c);
    emit_report(report, c.out);
    if (detection) {
        if (report.detection->map)
            std::cout << "mAP@" << c.pipeline.iou_threshold << " = " << *report.detection->map << '\n';
        std::cout << "TP " << report.detection->tp << "  FP " << report.detection->fp << "  FN "
                  << report.detection->fn << '\n';
    } else {
        const auto& s = *report.segmentation;
        std::cout << "Dice (micro/macro) = " << s.micro_dice << " / " << s.macro_dice << '\n'
                  << "Dice@detection (micro/macro) = " << s.micro_dice_at_detection << " / "
                  << s.macro_dice_at_detection << '\n';
    }
    return 0;
}

int cmd_render(const CommonFlags& f) {
    const RunConfig c = f.resolve();
    const DatasetManifest manifest = load_manifest(require(c.manifest, "--manifest"));
    const PredictionSet preds = load_predictions(require(c.predictions, "--predictions"), manifest);
    fs::create_directories(c.out);
    write_resolved_config(c);
    render_all(manifest, preds, c, true);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot colony detection/segmentation pipeline and evaluator"};
    app.require_subcommand(1);

    // import
    auto* import = app.add_subcommand("import", "Import a ground-truth dataset into a manifest");
    import->require_subcommand(1);
    std::string annotations, images, masks_dir, pattern = "{stem}.png", manifest_out;
    bool no_verify = false;

    auto* coco = import->add_subcommand("coco", "COCO-style box annotations");
    coco->add_option("--annotations", annotations, "COCO annotation JSON")->required();
    coco->add_option("--images", images, "Image directory")->required();
    coco->add_option("--out", manifest_out, "Manifest file to write")->required();
    coco->add_flag("--no-verify", no_verify, "Skip decoding images to verify their dimensions");

    auto* masks = import->add_subcommand("masks", "Folder of binary mask PNGs");
    masks->add_option("--masks", masks_dir, "Mask directory")->required();
    masks->add_option("--images", images, "Image directory")->required();
    masks->add_option("--pattern", pattern, "Mask file name for an image, {stem} = image stem");
    masks->add_option("--out", manifest_out, "Manifest file to write")->required();
    masks->add_flag("--no-verify", no_verify, "Skip decoding images to verify their dimensions");

    // run
    CommonFlags run_flags;
    bool no_overlays = false;
    auto* run = app.add_subcommand("run", "Run the pipeline, evaluate and render");
    add_eval_flags(*run, run_flags);
    run_flags.add(*run, "provider", "--provider", run_flags.provider, "Provider: service URL or file:PATH");
    run_flags.add(*run, "prompt", "--prompt", run_flags.prompt, "Detection prompt text");
    run_flags.add(*run, "box_threshold", "--box-threshold", run_flags.box_threshold,
                  "Detector box score threshold (default 0.3)");
    run_flags.add(*run, "text_threshold", "--text-threshold", run_flags.text_threshold,
                  "Detector text score threshold (default 0.25)");
    run_flags.add(*run, "jobs", "--jobs", run_flags.jobs, "Concurrent provider requests");
    run_flags.add(*run, "cache_dir", "--cache-dir", run_flags.cache_dir, "Provider result cache directory");
    run_flags.add(*run, "stroke_width", "--stroke-width", run_flags.stroke_width, "Overlay stroke width");
    run->add_flag("--labels", run_flags.labels, "Draw confidence labels on overlays");
    run->add_flag("--no-overlays", no_overlays, "Skip overlay rendering");

    CommonFlags det_flags, seg_flags, render_flags;
    auto* eval_det = app.add_subcommand("eval-det", "Detection metrics (mAP, TP/FP/FN) from saved predictions");
    add_eval_flags(*eval_det, det_flags);
    auto* eval_seg = app.add_subcommand("eval-seg", "Dice and Dice@detection from saved predictions");
    add_eval_flags(*eval_seg, seg_flags);
    auto* render = app.add_subcommand("render", "Draw TP/FP/FN overlays from saved predictions");
    add_eval_flags(*render, render_flags);
    render_flags.add(*render, "stroke_width", "--stroke-width", render_flags.stroke_width, "Overlay stroke width");
    render->add_flag("--labels", render_flags.labels, "Draw confidence labels");

    std::string preann_manifest, preann_preds, preann_out;
    auto* preann = app.add_subcommand("export-preann", "Export predictions as COCO pre-annotations");
    preann->add_option("--manifest", preann_manifest, "Dataset manifest JSON")->required();
    preann->add_option("--predictions", preann_preds, "Prediction set JSON")->required();
    preann->add_option("--out", preann_out, "COCO JSON file to write")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        ImportOptions opts;
        opts.verify_image_dims = !no_verify;
        if (*coco) {
            const ImportReport r = import_coco_boxes(annotations, images, opts);
            for (const auto& msg : r.rejected) log_line("warning: " + msg);
            save_manifest(r.manifest, manifest_out);
            std::cout << "imported " << r.manifest.images.size() << " images, " << r.imported_records << " of "
                      << r.source_records << " boxes (" << r.rejected.size() << " rejected)\n";
            return 0;
        }
        if (*masks) {
            const ImportReport r = import_mask_folder(masks_dir, images, pattern, opts);
            for (const auto& msg : r.unpaired) log_line("warning: " + msg);
            save_manifest(r.manifest, manifest_out);
            std::cout << "imported " << r.imported_records << " of " << r.source_records << " images ("
                      << r.unpaired.size() << " unpaired files)\n";
            return 0;
        }
        if (*run) return cmd_run(run_flags, !no_overlays);
        if (*eval_det) return cmd_eval(det_flags, true);
        if (*eval_seg) return cmd_eval(seg_flags, false);
        if (*render) return cmd_render(render_flags);
        if (*preann) {
            const DatasetManifest manifest = load_manifest(preann_manifest);
            export_preannotations(load_predictions(preann_preds, manifest), manifest, preann_out);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error (io): " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
