#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>

namespace talift {

/// Root of the shipped prompt/fixture assets. TALIFT_ASSETS overrides the
/// compiled-in default.
std::filesystem::path asset_dir();

std::string read_file(const std::filesystem::path& p);

/// Writes via a temporary sibling file and rename so readers never observe a
/// partial file.
void write_file_atomic(const std::filesystem::path& p, std::string_view content);

std::string sha256_hex(std::string_view data);

/// Uniform integer in [lo, hi] by rejection sampling, so results do not depend
/// on the standard library's distribution implementation.
std::int64_t uniform_int(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi);

std::string trim(std::string_view s);

}  // namespace talift
