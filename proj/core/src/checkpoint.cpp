#include "paec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace paec {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'E', 'C', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw Error(std::string("checkpoint: ") + what + " too large");
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  const std::uint8_t* take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw Error("checkpoint: truncated file");
    const auto* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }
  std::string str(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const GtcnnModel<float>& model,
                                               const std::string& meta_json) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["model"] = nlohmann::ordered_json::parse(model.config().to_json());
  try {
    header["meta"] = nlohmann::ordered_json::parse(meta_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  put_bytes(out, kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointFormatVersion);
  put_u32(out, checked_u32(text.size(), "header"));
  put_bytes(out, text.data(), text.size());
  const auto& items = model.params().items();
  put_u32(out, checked_u32(items.size(), "tensor count"));
  for (const auto& p : items) {
    put_u32(out, checked_u32(p.name.size(), "name"));
    put_bytes(out, p.name.data(), p.name.size());
    const auto& shape = p.tensor.shape();
    put_u32(out, checked_u32(shape.size(), "rank"));
    for (auto d : shape) put_u32(out, checked_u32(d, "dimension"));
    const auto values = p.tensor.data();
    put_bytes(out, values.data(), values.size() * sizeof(float));
  }
  return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                        std::optional<Selection> expected) {
  Reader r(bytes);
  if (bytes.size() < sizeof(kMagic) || std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw Error("checkpoint: bad magic, not a checkpoint file");
  }
  const auto version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::string text = r.str(r.u32());
  ModelConfig config;
  LoadedCheckpoint result;
  try {
    const auto header = nlohmann::ordered_json::parse(text);
    if (header.at("format_version").get<std::uint32_t>() != kCheckpointFormatVersion) {
      throw Error("checkpoint: header format version mismatch");
    }
    config = ModelConfig::from_json(header.at("model").dump());
    result.meta_json = header.contains("meta") ? header["meta"].dump() : "{}";
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (expected && *expected != config.selection) {
    throw Error("checkpoint: selection mode " + to_string(config.selection) +
                " does not match the requested " + to_string(*expected));
  }

  result.model = std::make_unique<GtcnnModel<float>>(config);
  auto& items = result.model->params().items();
  const auto count = r.u32();
  if (count != items.size()) {
    throw Error("checkpoint: " + std::to_string(count) + " tensors stored, config implies " +
                std::to_string(items.size()));
  }
  for (auto& p : items) {
    const std::string name = r.str(r.u32());
    if (name != p.name) throw Error("checkpoint: expected tensor " + p.name + ", found " + name);
    const auto rank = r.u32();
    ag::Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape != p.tensor.shape()) {
      throw Error("checkpoint: tensor " + name + " has shape " + ag::shape_string(shape) +
                  ", expected " + ag::shape_string(p.tensor.shape()));
    }
    auto values = p.tensor.data();
    std::memcpy(values.data(), r.take(values.size() * sizeof(float)), values.size() * sizeof(float));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes after the last tensor");
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const GtcnnModel<float>& model,
                     const std::string& meta_json) {
  const auto bytes = serialize_checkpoint(model, meta_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<Selection> expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace paec
