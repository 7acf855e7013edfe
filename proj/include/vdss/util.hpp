#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace vdss {

/// Parses a JSON document from disk. Throws ConfigError naming the file.
nlohmann::json read_json_file(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);

/// SplitMix64 step; used to derive independent deterministic sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Stable 64-bit FNV-1a of a string, for deriving seeds from identifiers.
std::uint64_t hash64(std::string_view s);

/// Default configuration directory (overridable with VDSS_CONFIG_DIR).
std::filesystem::path default_config_dir();

/// Prompt template directory (overridable with VDSS_PROMPT_DIR).
std::filesystem::path default_prompt_dir();

}  // namespace vdss
