#pragma once

#include "colony/pipeline.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace colony {

/// Raw key/value settings from one source (file or command line).
using ConfigLayer = std::map<std::string, std::string>;

/// Parses `key = value` lines. Values may be bare or double-quoted; `#`
/// starts a comment outside quotes. Unknown or repeated keys are rejected
/// with ErrorKind::Configuration.
ConfigLayer parse_config_text(std::string_view text);
ConfigLayer load_config_file(const std::filesystem::path& path);

/// Every key a config file or flag may set.
const std::vector<std::string>& known_config_keys();

/// Fully resolved settings for one command. Precedence, highest first:
/// command line, config file, COLONY_PROVIDER_URL (provider only), defaults.
struct RunConfig {
    std::optional<std::string> manifest;
    std::optional<std::string> predictions;
    std::optional<std::string> provider;
    std::string out = "out";
    PipelineConfig pipeline;
    int stroke_width = 2;
    bool draw_labels = false;

    static RunConfig resolve(const ConfigLayer& file, const ConfigLayer& flags,
                             const std::optional<std::string>& env_provider);

    /// Canonical config-file rendering; parse_config_text(to_text()) resolves
    /// back to the same RunConfig.
    std::string to_text() const;

    /// Short hash over the settings that influence results.
    std::string fingerprint() const;
};

} // namespace colony
