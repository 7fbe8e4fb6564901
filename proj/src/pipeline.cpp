#include "colony/pipeline.hpp"

#include "colony/digest.hpp"
#include "colony/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <thread>
#include <variant>

namespace fs = std::filesystem;
using nlohmann::json;

namespace colony {

namespace {

std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read image " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

void PipelineConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::Configuration, what); };
    if (prompt_text.empty()) bad("prompt text must not be empty");
    if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) bad("confidence floor must lie in [0, 1]");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) bad("IoU threshold must lie in (0, 1]");
    if (!(box_threshold >= 0.0 && box_threshold <= 1.0)) bad("box threshold must lie in [0, 1]");
    if (!(text_threshold >= 0.0 && text_threshold <= 1.0)) bad("text threshold must lie in [0, 1]");
    if (request_parallelism < 1 || request_parallelism > kMaxParallelism)
        bad("request parallelism must lie in [1, " + std::to_string(kMaxParallelism) + "]");
}

PredictionParams PipelineConfig::params() const {
    return {prompt_text, box_threshold, text_threshold, confidence_floor};
}

// ---- file provider ----------------------------------------------------------

FileProvider::FileProvider(const fs::path& file, const DatasetManifest& manifest)
    : set_(load_predictions(file, manifest)) {}

bool FileProvider::provides_masks() const {
    return std::any_of(set_.images.begin(), set_.images.end(),
                       [](const auto& kv) { return kv.second.masks.has_value(); });
}

std::vector<Detection> FileProvider::detect(const ImageRecord& image, std::string_view, const DetectParams&) {
    if (const auto f = set_.failures.find(image.image_id); f != set_.failures.end())
        throw Error(ErrorKind::Validation, "recorded failure: " + f->second);
    const auto it = set_.images.find(image.image_id);
    if (it == set_.images.end())
        throw Error(ErrorKind::Validation, "prediction file has no entry for image \"" + image.image_id + "\"");
    return it->second.detections;
}

std::optional<std::vector<InstanceMask>> FileProvider::segment(const ImageRecord& image, std::string_view,
                                                               std::span<const BoundingBox> boxes) {
    const auto it = set_.images.find(image.image_id);
    if (it == set_.images.end() || !it->second.masks) return std::nullopt;
    const ImagePredictions& stored = it->second;
    std::vector<bool> used(stored.detections.size(), false);
    std::vector<InstanceMask> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        std::size_t k = 0;
        while (k < stored.detections.size() && (used[k] || !(stored.detections[k].box == b))) ++k;
        if (k == stored.detections.size())
            throw Error(ErrorKind::Protocol, "prediction file has no mask for a requested box");
        used[k] = true;
        out.push_back((*stored.masks)[k]);
    }
    return out;
}

// ---- cache ------------------------------------------------------------------

ResultCache::ResultCache(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::string ResultCache::fingerprint(std::string_view image_bytes, const PipelineConfig& config,
                                     std::string_view model_version) {
    std::ostringstream os;
    os << "v1\n"
       << sha256_hex(image_bytes) << '\n'
       << config.prompt_text << '\n'
       << exact(config.box_threshold) << '\n'
       << exact(config.text_threshold) << '\n'
       << exact(config.confidence_floor) << '\n'
       << model_version;
    return sha256_hex(os.str());
}

fs::path ResultCache::entry_path(const std::string& key) const { return dir_ / (key + ".json"); }

std::optional<ProviderResult> ResultCache::lookup(const std::string& key, const ImageRecord& image) const {
    const fs::path path = entry_path(key);
    std::ifstream in(path);
    if (!in) return std::nullopt;
    try {
        const json j = json::parse(in);
        if (j.at("key").get<std::string>() != key) return std::nullopt;
        ImagePredictions p = image_predictions_from_json(j.at("result"), image);
        return ProviderResult{image.image_id, std::move(p.detections), std::move(p.masks),
                              j.at("latency_ms").get<double>(), j.at("model_version").get<std::string>()};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void ResultCache::store(const std::string& key, const ProviderResult& result) const {
    const json j{{"key", key},
                 {"image_id", result.image_id},
                 {"model_version", result.model_version},
                 {"latency_ms", result.provider_latency_ms},
                 {"result", image_predictions_to_json({result.detections, result.masks})}};
    write_json_file(j, entry_path(key));
}

// ---- orchestration ----------------------------------------------------------

namespace {

struct Failure {
    std::string message;
};

struct Abort {
    std::string message;
};

using Outcome = std::variant<std::monostate, ProviderResult, Failure, Abort>;

ProviderResult process_image(const ImageRecord& image, const PipelineConfig& config, PredictionProvider& provider,
                             const std::string& model_version, const ResultCache* cache, bool& cache_hit) {
    const auto start = std::chrono::steady_clock::now();
    std::string bytes;
    if (provider.needs_image_bytes()) bytes = read_file_bytes(image.file_path);

    std::string key;
    if (cache) {
        key = ResultCache::fingerprint(bytes, config, model_version);
        if (auto hit = cache->lookup(key, image)) {
            cache_hit = true;
            return std::move(*hit);
        }
    }

    ProviderResult result;
    result.image_id = image.image_id;
    result.model_version = model_version;
    for (auto& d : provider.detect(image, bytes, {config.prompt_text, config.box_threshold, config.text_threshold}))
        if (d.confidence >= config.confidence_floor) result.detections.push_back(std::move(d));

    if (result.detections.empty()) {
        if (provider.provides_masks()) result.masks.emplace();
    } else {
        std::vector<BoundingBox> boxes;
        boxes.reserve(result.detections.size());
        for (const auto& d : result.detections) boxes.push_back(d.box);
        result.masks = provider.segment(image, bytes, boxes);
    }
    if (result.masks && result.masks->size() != result.detections.size())
        throw Error(ErrorKind::Protocol, "mask count does not match detection count");

    result.provider_latency_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (cache) cache->store(key, result);
    return result;
}

} // namespace

PipelineRun run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config, PredictionProvider& provider,
                         const LogSink& log) {
    config.validate();
    auto say = [&](const std::string& line) {
        if (log) log(line);
    };

    PipelineRun run;
    run.predictions.source = provider.source();
    run.predictions.params = config.params();

    std::string model_version;
    try {
        model_version = provider.model_version();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Transport) throw;
        run.aborted = true;
        run.abort_reason = e.what();
        say("aborted: " + run.abort_reason);
        return run;
    }
    run.predictions.model_version = model_version;

    std::optional<ResultCache> cache;
    if (config.cache_dir && provider.needs_image_bytes()) cache.emplace(*config.cache_dir);

    const std::size_t n = manifest.images.size();
    std::vector<Outcome> outcomes(n);
    std::vector<char> hits(n, 0);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};

    auto worker = [&] {
        for (;;) {
            if (abort.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            const ImageRecord& image = manifest.images[i];
            bool hit = false;
            try {
                outcomes[i] = process_image(image, config, provider, model_version, cache ? &*cache : nullptr, hit);
                hits[i] = hit;
                const auto& r = std::get<ProviderResult>(outcomes[i]);
                say(image.image_id + ": " + std::to_string(r.detections.size()) + " detections" +
                    (hit ? " (cached)" : ""));
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Transport) {
                    outcomes[i] = Abort{e.what()};
                    abort.store(true);
                } else {
                    outcomes[i] = Failure{std::string(to_string(e.kind())) + ": " + e.what()};
                }
                say(image.image_id + ": " + e.what());
            } catch (const std::exception& e) {
                outcomes[i] = Failure{e.what()};
                say(image.image_id + ": " + e.what());
            }
        }
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.request_parallelism), n);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < n; ++i) {
        const std::string& id = manifest.images[i].image_id;
        if (auto* r = std::get_if<ProviderResult>(&outcomes[i])) {
            run.predictions.images.emplace(id, ImagePredictions{std::move(r->detections), std::move(r->masks)});
            ++run.completed;
            run.cache_hits += hits[i] ? 1 : 0;
        } else if (auto* f = std::get_if<Failure>(&outcomes[i])) {
            run.predictions.failures.emplace(id, f->message);
            ++run.failed;
        } else if (auto* a = std::get_if<Abort>(&outcomes[i])) {
            if (!run.aborted) run.abort_reason = a->message;
            run.aborted = true;
        }
    }
    if (run.aborted)
        say("aborted after " + std::to_string(run.completed) + " of " + std::to_string(n) +
            " images: " + run.abort_reason);
    return run;
}

std::unique_ptr<PredictionProvider> make_provider(const std::string& descriptor, const DatasetManifest& manifest,
                                                  const LogSink& log) {
    if (descriptor.starts_with("file:")) return std::make_unique<FileProvider>(descriptor.substr(5), manifest);
    if (descriptor.empty()) throw Error(ErrorKind::Configuration, "no provider configured");
    RemoteOptions options;
    options.base_url = descriptor;
    options.log = log;
    return std::make_unique<RemoteProvider>(std::move(options));
}

} // namespace colony
