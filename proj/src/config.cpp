#include "colony/config.hpp"

#include "colony/digest.hpp"
#include "colony/errors.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace colony {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Configuration, what); }

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || errno != 0) config_error(key + ": \"" + v + "\" is not a number");
    return d;
}

int to_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const long n = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size() || errno != 0 || n < INT32_MIN || n > INT32_MAX)
        config_error(key + ": \"" + v + "\" is not an integer");
    return static_cast<int>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    config_error(key + ": expected true or false, got \"" + v + "\"");
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> kKeys{
        "manifest",       "predictions",      "provider", "prompt",       "confidence_floor",
        "iou_threshold",  "box_threshold",    "text_threshold", "jobs",   "out",
        "cache_dir",      "stroke_width",     "draw_labels",
    };
    return kKeys;
}

ConfigLayer parse_config_text(std::string_view text) {
    ConfigLayer layer;
    const auto& keys = known_config_keys();
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = "config line " + std::to_string(line_no);
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) config_error(where + ": expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        std::string rest = trim(std::string_view(line).substr(eq + 1));

        std::string value;
        if (!rest.empty() && rest[0] == '"') {
            std::size_t i = 1;
            bool closed = false;
            for (; i < rest.size(); ++i) {
                if (rest[i] == '\\' && i + 1 < rest.size()) {
                    value += rest[++i];
                } else if (rest[i] == '"') {
                    closed = true;
                    ++i;
                    break;
                } else {
                    value += rest[i];
                }
            }
            if (!closed) config_error(where + ": unterminated string");
            const std::string tail = trim(std::string_view(rest).substr(i));
            if (!tail.empty() && tail[0] != '#') config_error(where + ": unexpected text after value");
        } else {
            value = trim(std::string_view(rest).substr(0, rest.find('#')));
        }

        if (std::find(keys.begin(), keys.end(), key) == keys.end()) config_error(where + ": unknown key \"" + key + "\"");
        if (!layer.emplace(key, value).second) config_error(where + ": key \"" + key + "\" set twice");
    }
    return layer;
}

ConfigLayer load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const Error& e) {
        config_error(path.string() + ": " + e.what());
    }
}

RunConfig RunConfig::resolve(const ConfigLayer& file, const ConfigLayer& flags,
                             const std::optional<std::string>& env_provider) {
    const auto& keys = known_config_keys();
    for (const auto* layer : {&file, &flags})
        for (const auto& [k, _] : *layer)
            if (std::find(keys.begin(), keys.end(), k) == keys.end()) config_error("unknown key \"" + k + "\"");

    auto pick = [&](const std::string& key) -> std::optional<std::string> {
        if (const auto it = flags.find(key); it != flags.end()) return it->second;
        if (const auto it = file.find(key); it != file.end()) return it->second;
        return std::nullopt;
    };

    RunConfig c;
    c.manifest = pick("manifest");
    c.predictions = pick("predictions");
    c.provider = pick("provider");
    if (!c.provider && env_provider && !env_provider->empty()) c.provider = env_provider;
    if (auto v = pick("out")) c.out = *v;
    if (auto v = pick("prompt")) c.pipeline.prompt_text = *v;
    if (auto v = pick("confidence_floor")) c.pipeline.confidence_floor = to_double("confidence_floor", *v);
    if (auto v = pick("iou_threshold")) c.pipeline.iou_threshold = to_double("iou_threshold", *v);
    if (auto v = pick("box_threshold")) c.pipeline.box_threshold = to_double("box_threshold", *v);
    if (auto v = pick("text_threshold")) c.pipeline.text_threshold = to_double("text_threshold", *v);
    if (auto v = pick("jobs")) c.pipeline.request_parallelism = to_int("jobs", *v);
    if (auto v = pick("cache_dir"); v && !v->empty()) c.pipeline.cache_dir = *v;
    if (auto v = pick("stroke_width")) c.stroke_width = to_int("stroke_width", *v);
    if (auto v = pick("draw_labels")) c.draw_labels = to_bool("draw_labels", *v);

    c.pipeline.validate();
    if (c.stroke_width < 1) config_error("stroke_width must be at least 1");
    return c;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    if (manifest) os << "manifest = " << quoted(*manifest) << '\n';
    if (predictions) os << "predictions = " << quoted(*predictions) << '\n';
    if (provider) os << "provider = " << quoted(*provider) << '\n';
    os << "prompt = " << quoted(pipeline.prompt_text) << '\n'
       << "confidence_floor = " << exact(pipeline.confidence_floor) << '\n'
       << "iou_threshold = " << exact(pipeline.iou_threshold) << '\n'
       << "box_threshold = " << exact(pipeline.box_threshold) << '\n'
       << "text_threshold = " << exact(pipeline.text_threshold) << '\n'
       << "jobs = " << pipeline.request_parallelism << '\n'
       << "out = " << quoted(out) << '\n';
    if (pipeline.cache_dir) os << "cache_dir = " << quoted(pipeline.cache_dir->string()) << '\n';
    os << "stroke_width = " << stroke_width << '\n' << "draw_labels = " << (draw_labels ? "true" : "false") << '\n';
    return os.str();
}

std::string RunConfig::fingerprint() const {
    std::ostringstream os;
    os << provider.value_or("") << '\n'
       << pipeline.prompt_text << '\n'
       << exact(pipeline.confidence_floor) << '\n'
       << exact(pipeline.iou_threshold) << '\n'
       << exact(pipeline.box_threshold) << '\n'
       << exact(pipeline.text_threshold);
    return sha256_hex(os.str()).substr(0, 16);
}

} // namespace colony
