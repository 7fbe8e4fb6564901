#pragma once

#include "colony/detection_metrics.hpp"
#include "colony/geometry.hpp"
#include "colony/ingest.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace colony {

/// Receives one human-readable line. Must be callable from worker threads.
using LogSink = std::function<void(std::string_view)>;

inline constexpr int kMaxParallelism = 32;

struct PipelineConfig {
    std::string prompt_text = "bacterial colony";
    double confidence_floor = 0.0;
    double iou_threshold = kDefaultIouThreshold;
    double box_threshold = 0.3;
    double text_threshold = 0.25;
    int request_parallelism = 1;
    std::optional<std::filesystem::path> cache_dir;

    /// Throws ErrorKind::Configuration on out-of-range values.
    void validate() const;
    PredictionParams params() const;
};

struct DetectParams {
    std::string prompt;
    double box_threshold = 0.3;
    double text_threshold = 0.25;
};

struct ProviderResult {
    std::string image_id;
    std::vector<Detection> detections;
    std::optional<std::vector<InstanceMask>> masks;
    double provider_latency_ms = 0.0;
    std::string model_version;
};

/// Source of detections and box-prompted masks. Implementations must be
/// safe to call concurrently for distinct images.
class PredictionProvider {
  public:
    virtual ~PredictionProvider() = default;

    virtual std::string source() const = 0;
    /// May contact the provider; throws ErrorKind::Transport when it cannot.
    virtual std::string model_version() = 0;
    /// Remote providers need the encoded image; they are also the only
    /// providers whose results are worth caching.
    virtual bool needs_image_bytes() const = 0;
    virtual bool provides_masks() const = 0;

    virtual std::vector<Detection> detect(const ImageRecord& image, std::string_view image_bytes,
                                          const DetectParams& params) = 0;
    /// Index-aligned masks, or nullopt when the provider has none.
    virtual std::optional<std::vector<InstanceMask>> segment(const ImageRecord& image, std::string_view image_bytes,
                                                             std::span<const BoundingBox> boxes) = 0;
};

/// Replays a saved prediction set.
class FileProvider final : public PredictionProvider {
  public:
    FileProvider(const std::filesystem::path& file, const DatasetManifest& manifest);
    explicit FileProvider(PredictionSet set) : set_(std::move(set)) {}

    std::string source() const override { return set_.source; }
    std::string model_version() override { return set_.model_version; }
    bool needs_image_bytes() const override { return false; }
    bool provides_masks() const override;

    std::vector<Detection> detect(const ImageRecord& image, std::string_view, const DetectParams&) override;
    std::optional<std::vector<InstanceMask>> segment(const ImageRecord& image, std::string_view,
                                                     std::span<const BoundingBox> boxes) override;

  private:
    PredictionSet set_;
};

struct RemoteOptions {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    int max_attempts = 3;
    std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
    std::chrono::seconds timeout{120};
    LogSink log;
};

/// Client for the v1 detect/segment HTTP contract.
///
/// Transport failures are retried with exponential backoff and surface as
/// ErrorKind::Transport once attempts run out. Non-2xx answers raise
/// RemoteError, contract violations ErrorKind::Protocol; neither is retried.
class RemoteProvider final : public PredictionProvider {
  public:
    explicit RemoteProvider(RemoteOptions options);

    std::string source() const override { return "remote:" + options_.base_url; }
    std::string model_version() override;
    bool needs_image_bytes() const override { return true; }
    bool provides_masks() const override { return true; }

    /// Boxes overshooting the frame are clipped with a warning; boxes with
    /// nothing left inside the frame are dropped with a warning.
    std::vector<Detection> detect(const ImageRecord& image, std::string_view image_bytes,
                                  const DetectParams& params) override;
    std::optional<std::vector<InstanceMask>> segment(const ImageRecord& image, std::string_view image_bytes,
                                                     std::span<const BoundingBox> boxes) override;

    std::size_t requests_sent() const noexcept { return requests_.load(); }

  private:
    std::string post_json(const std::string& path, const std::string& body);
    std::string get(const std::string& path);
    void warn(const std::string& message) const;

    RemoteOptions options_;
    std::atomic<std::size_t> requests_{0};
    std::mutex version_mutex_;
    std::optional<std::string> model_version_;
};

/// On-disk cache of post-filter provider results, one JSON file per key.
class ResultCache {
  public:
    explicit ResultCache(std::filesystem::path dir);

    /// Key over image content, prompt, thresholds and model version.
    static std::string fingerprint(std::string_view image_bytes, const PipelineConfig& config,
                                   std::string_view model_version);

    /// Corrupt or mismatched entries count as a miss.
    std::optional<ProviderResult> lookup(const std::string& key, const ImageRecord& image) const;
    void store(const std::string& key, const ProviderResult& result) const;

    std::filesystem::path entry_path(const std::string& key) const;

  private:
    std::filesystem::path dir_;
};

struct PipelineRun {
    PredictionSet predictions;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::size_t cache_hits = 0;
    bool aborted = false;
    std::string abort_reason;
};

/// Detect, drop detections below the confidence floor, then request one
/// mask per surviving box, for every image of the manifest. Per-image
/// failures are recorded and the run continues; an unreachable provider
/// aborts the run, returning what was completed.
PipelineRun run_pipeline(const DatasetManifest& manifest, const PipelineConfig& config,
                         PredictionProvider& provider, const LogSink& log = {});

/// "file:PATH" selects a FileProvider; anything else is a base URL.
std::unique_ptr<PredictionProvider> make_provider(const std::string& descriptor, const DatasetManifest& manifest,
                                                  const LogSink& log = {});

} // namespace colony
