#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "paec/gtcnn.hpp"

namespace paec {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// File layout (all integers little-endian u32):
//   "PAECCKPT" | version | header length | header JSON
//   | tensor count | per tensor: name length, name, rank, dims..., float32 values
// The header carries the model config and a free-form "meta" object.
std::vector<std::uint8_t> serialize_checkpoint(const GtcnnModel<float>& model,
                                               const std::string& meta_json = "{}");

struct LoadedCheckpoint {
  std::unique_ptr<GtcnnModel<float>> model;
  std::string meta_json;
};

// Throws paec::Error on a bad magic, unknown version, truncated data, or a
// parameter list that does not match the stored config. When `expected` is
// given the stored selection mode must equal it.
LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                        std::optional<Selection> expected = std::nullopt);

void save_checkpoint(const std::filesystem::path& path, const GtcnnModel<float>& model,
                     const std::string& meta_json = "{}");
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<Selection> expected = std::nullopt);

}  // namespace paec
