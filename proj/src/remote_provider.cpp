#include "colony/digest.hpp"
#include "colony/errors.hpp"
#include "colony/pipeline.hpp"

#include "httplib.h"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

using nlohmann::json;

namespace colony {

namespace {

[[noreturn]] void protocol_error(const std::string& what) { throw Error(ErrorKind::Protocol, what); }

json parse_body(const std::string& body, const std::string& endpoint) {
    try {
        return json::parse(body);
    } catch (const json::parse_error& e) {
        protocol_error(endpoint + ": response is not JSON: " + e.what());
    }
}

double number_field(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number())
        protocol_error(context + ": missing numeric \"" + key + "\"");
    const double v = j[key].get<double>();
    if (!std::isfinite(v)) protocol_error(context + ": non-finite \"" + key + "\"");
    return v;
}

std::string string_field(const json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_string())
        protocol_error(context + ": missing string \"" + key + "\"");
    return j[key].get<std::string>();
}

} // namespace

RemoteProvider::RemoteProvider(RemoteOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw Error(ErrorKind::Configuration, "remote provider needs a base URL");
    if (options_.max_attempts < 1) throw Error(ErrorKind::Configuration, "max_attempts must be at least 1");
    while (options_.base_url.ends_with('/')) options_.base_url.pop_back();
}

void RemoteProvider::warn(const std::string& message) const {
    if (options_.log) options_.log("warning: " + message);
}

namespace {

template <class Send>
std::string with_retries(const RemoteOptions& options, const std::string& what, std::atomic<std::size_t>& counter,
                         Send send) {
    auto delay = options.backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        ++counter;
        httplib::Result res = send();
        if (res) {
            if (res->status >= 200 && res->status < 300) return res->body;
            std::string message = what + " returned HTTP " + std::to_string(res->status);
            try {
                const json j = json::parse(res->body);
                if (j.is_object() && j.contains("error") && j["error"].is_string())
                    message += ": " + j["error"].get<std::string>();
            } catch (const json::exception&) {
            }
            throw RemoteError(res->status, message);
        }
        last_error = httplib::to_string(res.error());
        if (attempt < options.max_attempts) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
    throw Error(ErrorKind::Transport, what + " failed after " + std::to_string(options.max_attempts) +
                                          " attempts: " + last_error);
}

httplib::Client make_client(const RemoteOptions& options) {
    httplib::Client client(options.base_url);
    const auto t = std::chrono::duration_cast<std::chrono::seconds>(options.timeout).count();
    client.set_connection_timeout(std::min<long>(t, 10), 0);
    client.set_read_timeout(t, 0);
    client.set_write_timeout(t, 0);
    return client;
}

} // namespace

std::string RemoteProvider::post_json(const std::string& path, const std::string& body) {
    return with_retries(options_, "POST " + path, requests_, [&] {
        auto client = make_client(options_);
        return client.Post(path, body, "application/json");
    });
}

std::string RemoteProvider::get(const std::string& path) {
    return with_retries(options_, "GET " + path, requests_, [&] {
        auto client = make_client(options_);
        return client.Get(path);
    });
}

std::string RemoteProvider::model_version() {
    std::lock_guard lock(version_mutex_);
    if (model_version_) return *model_version_;
    const json j = parse_body(get("/v1/health"), "/v1/health");
    if (string_field(j, "status", "/v1/health") != "ok")
        throw RemoteError(200, "/v1/health reports status \"" + j["status"].get<std::string>() + "\"");
    if (!j.contains("models") || !j["models"].is_object()) protocol_error("/v1/health: missing \"models\"");
    model_version_ = string_field(j["models"], "detector", "/v1/health.models") + "+" +
                     string_field(j["models"], "segmenter", "/v1/health.models");
    return *model_version_;
}

std::vector<Detection> RemoteProvider::detect(const ImageRecord& image, std::string_view image_bytes,
                                              const DetectParams& params) {
    const json request{{"image", base64_encode(image_bytes)},
                       {"prompt", params.prompt},
                       {"box_threshold", params.box_threshold},
                       {"text_threshold", params.text_threshold}};
    const json j = parse_body(post_json("/v1/detect", request.dump()), "/v1/detect");
    const std::string ctx = "/v1/detect for \"" + image.image_id + "\"";
    string_field(j, "model_version", ctx);
    if (!j.contains("detections") || !j["detections"].is_array()) protocol_error(ctx + ": missing \"detections\"");

    const double w = image.dims.width, h = image.dims.height;
    std::vector<Detection> out;
    for (const auto& jd : j["detections"]) {
        if (!jd.is_object() || !jd.contains("box") || !jd["box"].is_array() || jd["box"].size() != 4)
            protocol_error(ctx + ": detection without a 4-number box");
        std::array<double, 4> c{};
        for (std::size_t k = 0; k < 4; ++k) {
            if (!jd["box"][k].is_number()) protocol_error(ctx + ": non-numeric box coordinate");
            c[k] = jd["box"][k].get<double>();
            if (!std::isfinite(c[k])) protocol_error(ctx + ": non-finite box coordinate");
        }
        const double score = number_field(jd, "score", ctx);
        if (score < 0.0 || score > 1.0) protocol_error(ctx + ": score outside [0, 1]");
        std::optional<std::string> phrase;
        if (jd.contains("phrase") && jd["phrase"].is_string()) phrase = jd["phrase"].get<std::string>();

        const std::array<double, 4> clipped{std::clamp(c[0], 0.0, w), std::clamp(c[1], 0.0, h),
                                            std::clamp(c[2], 0.0, w), std::clamp(c[3], 0.0, h)};
        std::ostringstream box_text;
        box_text << "[" << c[0] << ", " << c[1] << ", " << c[2] << ", " << c[3] << "]";
        if (!(clipped[0] < clipped[2] && clipped[1] < clipped[3])) {
            warn(ctx + ": dropped box " + box_text.str() + " with no area inside the frame");
            continue;
        }
        if (clipped != c) warn(ctx + ": clipped box " + box_text.str() + " to the image frame");
        out.push_back({BoundingBox(clipped[0], clipped[1], clipped[2], clipped[3]), score, std::move(phrase)});
    }
    return out;
}

std::optional<std::vector<InstanceMask>> RemoteProvider::segment(const ImageRecord& image,
                                                                 std::string_view image_bytes,
                                                                 std::span<const BoundingBox> boxes) {
    if (boxes.empty()) return std::vector<InstanceMask>{};
    json request{{"image", base64_encode(image_bytes)}, {"boxes", json::array()}};
    for (const auto& b : boxes) request["boxes"].push_back(box_to_json(b));
    const json j = parse_body(post_json("/v1/segment", request.dump()), "/v1/segment");
    const std::string ctx = "/v1/segment for \"" + image.image_id + "\"";
    string_field(j, "model_version", ctx);
    if (!j.contains("masks") || !j["masks"].is_array()) protocol_error(ctx + ": missing \"masks\"");
    if (j["masks"].size() != boxes.size())
        protocol_error(ctx + ": sent " + std::to_string(boxes.size()) + " boxes, received " +
                       std::to_string(j["masks"].size()) + " masks");
    std::vector<InstanceMask> masks;
    masks.reserve(boxes.size());
    for (const auto& jm : j["masks"]) {
        try {
            masks.push_back(mask_from_json(jm));
        } catch (const Error& e) {
            protocol_error(ctx + ": " + e.what());
        }
        if (masks.back().dims() != image.dims)
            protocol_error(ctx + ": mask is " + std::to_string(masks.back().dims().width) + "x" +
                           std::to_string(masks.back().dims().height) + ", image is " +
                           std::to_string(image.dims.width) + "x" + std::to_string(image.dims.height));
    }
    return masks;
}

} // namespace colony
