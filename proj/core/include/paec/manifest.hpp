#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "paec/scene.hpp"

namespace paec {

inline constexpr int kManifestFormatVersion = 1;

std::string scene_to_json_line(const SceneSpec& spec);
SceneSpec scene_from_json_line(const std::string& line);

// n scenes drawn with per-scene seeds derived from `seed`. Every referenced
// pool file is opened once so unreadable sources fail here, not at render.
std::vector<SceneSpec> build_scenes(std::size_t n, Scenario scenario, const SourcePool& pool,
                                    std::uint64_t seed, const SamplerOptions& options = {});

void write_manifest(const std::filesystem::path& path, const std::vector<SceneSpec>& scenes);
std::vector<SceneSpec> read_manifest(const std::filesystem::path& path);

void build_manifest(const std::filesystem::path& path, std::size_t n, Scenario scenario,
                    const SourcePool& pool, std::uint64_t seed, const SamplerOptions& options = {});

}  // namespace paec
