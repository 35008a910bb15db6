#include "paec/manifest.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"
#include "paec/random.hpp"

namespace paec {
namespace {

using Json = nlohmann::ordered_json;

Json ratio_json(double v) {
  if (std::isinf(v) && v > 0) return "inf";
  return v;
}

double ratio_from(const Json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return kInf;
    throw Error("manifest: invalid ratio string '" + j.get<std::string>() + "'");
  }
  return j.get<double>();
}

Json source_json(const SourceRef& s) { return Json{{"speaker", s.speaker}, {"path", s.path}}; }

SourceRef source_from(const Json& j) {
  return {j.at("speaker").get<std::string>(), j.at("path").get<std::string>()};
}

Json vec3(const std::array<double, 3>& v) { return Json::array({v[0], v[1], v[2]}); }

std::array<double, 3> vec3_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("manifest: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string scene_to_json_line(const SceneSpec& spec) {
  Json j;
  j["format_version"] = kManifestFormatVersion;
  j["scene_id"] = spec.scene_id;
  j["scenario"] = to_string(spec.scenario);
  j["condition"] = to_string(spec.condition);
  j["sir_db"] = ratio_json(spec.sir);
  j["ser_db"] = ratio_json(spec.ser);
  j["snr_db"] = ratio_json(spec.snr);
  j["echo_delay_ms"] = spec.echo_delay_ms;
  j["duration_s"] = spec.duration_s;
  j["seed"] = spec.seed;
  j["room"] = Json{{"width", spec.room.width},
                   {"height", spec.room.height},
                   {"depth", spec.room.depth},
                   {"rt60", spec.room.rt60},
                   {"source_pos", vec3(spec.room.source_pos)},
                   {"mic_pos", vec3(spec.room.mic_pos)},
                   {"seed", spec.room.seed}};
  j["near_end"] = source_json(spec.near_end);
  j["far_end"] = source_json(spec.far_end);
  j["interferer"] = spec.interferer ? source_json(*spec.interferer) : Json(nullptr);
  j["noise"] = spec.noise ? source_json(*spec.noise) : Json(nullptr);
  return j.dump();
}

SceneSpec scene_from_json_line(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::exception& e) {
    throw Error(std::string("manifest: malformed JSON line: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kManifestFormatVersion) {
      throw Error("manifest: unsupported format_version " + std::to_string(version));
    }
    SceneSpec spec;
    spec.scene_id = j.at("scene_id").get<std::string>();
    spec.scenario = parse_scenario(j.at("scenario").get<std::string>());
    spec.condition = parse_condition(j.at("condition").get<std::string>());
    spec.sir = ratio_from(j.at("sir_db"));
    spec.ser = ratio_from(j.at("ser_db"));
    spec.snr = ratio_from(j.at("snr_db"));
    spec.echo_delay_ms = j.at("echo_delay_ms").get<double>();
    spec.duration_s = j.at("duration_s").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    const auto& r = j.at("room");
    spec.room.width = r.at("width").get<double>();
    spec.room.height = r.at("height").get<double>();
    spec.room.depth = r.at("depth").get<double>();
    spec.room.rt60 = r.at("rt60").get<double>();
    spec.room.source_pos = vec3_from(r.at("source_pos"));
    spec.room.mic_pos = vec3_from(r.at("mic_pos"));
    spec.room.seed = r.at("seed").get<std::uint64_t>();
    spec.near_end = source_from(j.at("near_end"));
    spec.far_end = source_from(j.at("far_end"));
    if (!j.at("interferer").is_null()) spec.interferer = source_from(j.at("interferer"));
    if (!j.at("noise").is_null()) spec.noise = source_from(j.at("noise"));
    return spec;
  } catch (const Json::exception& e) {
    throw Error(std::string("manifest: missing or invalid field: ") + e.what());
  }
}

std::vector<SceneSpec> build_scenes(std::size_t n, Scenario scenario, const SourcePool& pool,
                                    std::uint64_t seed, const SamplerOptions& options) {
  std::vector<SceneSpec> scenes;
  if (n == 0) return scenes;
  std::set<std::string> used;
  scenes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec spec = sample_scene(scenario, pool, splitmix64(seed * 0x100000001B3ull + i), options);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05zu", i);
    spec.scene_id = id;
    for (const auto* src : {&spec.near_end, &spec.far_end}) used.insert(src->path);
    if (spec.interferer) used.insert(spec.interferer->path);
    if (spec.noise) used.insert(spec.noise->path);
    scenes.push_back(std::move(spec));
  }
  for (const auto& path : used) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error("unreadable pool file: " + path);
  }
  return scenes;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SceneSpec>& scenes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write manifest: " + path.string());
  for (const auto& s : scenes) out << scene_to_json_line(s) << '\n';
  if (!out) throw Error("failed writing manifest: " + path.string());
}

std::vector<SceneSpec> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<SceneSpec> scenes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    scenes.push_back(scene_from_json_line(line));
  }
  return scenes;
}

void build_manifest(const std::filesystem::path& path, std::size_t n, Scenario scenario,
                    const SourcePool& pool, std::uint64_t seed, const SamplerOptions& options) {
  write_manifest(path, build_scenes(n, scenario, pool, seed, options));
}

}  // namespace paec
