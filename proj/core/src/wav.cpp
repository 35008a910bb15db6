#include "paec/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace paec {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

void require_finite(std::span<const double> x, const std::string& what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(what + ": non-finite sample");
  }
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open WAV file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw Error("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const auto len = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (len < 16 || body + len > buf.size()) throw Error("truncated fmt chunk: " + path.string());
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible && len >= 26) format = read_le<std::uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_pos = body;
      data_len = std::min<std::size_t>(len, buf.size() - body);
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data_pos == 0) throw Error("missing fmt or data chunk: " + path.string());
  if (channels != 1) throw Error("only mono WAV is supported: " + path.string());
  if (rate != static_cast<std::uint32_t>(kSampleRate)) {
    throw Error("unsupported sample rate " + std::to_string(rate) + " (expected 16000): " +
                path.string());
  }

  Waveform w;
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w.samples[i] = read_le<std::int16_t>(buf, data_pos + 2 * i) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w.samples[i] = static_cast<double>(read_le<float>(buf, data_pos + 4 * i));
    }
  } else {
    throw Error("unsupported WAV encoding (need 16-bit PCM or 32-bit float): " + path.string());
  }
  require_finite(w.samples, path.string());
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavFormat format) {
  if (w.sample_rate != kSampleRate) throw Error("write_wav: sample rate must be 16000");
  require_finite(w.samples, "write_wav");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write WAV file: " + path.string());

  const bool is_float = format == WavFormat::kFloat32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const std::uint16_t block_align = bits / 8;
  const auto data_len = static_cast<std::uint32_t>(w.size() * block_align);

  out.write("RIFF", 4);
  put_le<std::uint32_t>(out, 36 + data_len);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, is_float ? kFormatFloat : kFormatPcm);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, kSampleRate);
  put_le<std::uint32_t>(out, kSampleRate * block_align);
  put_le<std::uint16_t>(out, block_align);
  put_le<std::uint16_t>(out, bits);
  out.write("data", 4);
  put_le<std::uint32_t>(out, data_len);
  for (double v : w.samples) {
    if (is_float) {
      put_le<float>(out, static_cast<float>(v));
    } else {
      const double scaled = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(scaled));
    }
  }
  if (!out) throw Error("failed writing WAV file: " + path.string());
}

}  // namespace paec
