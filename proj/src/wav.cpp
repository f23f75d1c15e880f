#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "voclab/audio.hpp"
#include "voclab/error.hpp"

namespace voclab {

namespace {

std::uint32_t le32(const std::uint8_t* p) noexcept {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const std::uint8_t* p) noexcept {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

RawAudio parse_wav(std::span<const std::uint8_t> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw ParseError(0, "not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const std::uint8_t* chunk = b.data() + pos;
    std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > b.size()) size = b.size() - body;  // tolerate truncated final chunk
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw ParseError(0, "wave fmt chunk too short");
      format = le16(b.data() + body);
      channels = le16(b.data() + body + 2);
      rate = le32(b.data() + body + 4);
      bits = le16(b.data() + body + 14);
      if (format == kFormatExtensible) {
        if (size < 26) throw ParseError(0, "extensible fmt chunk too short");
        format = le16(b.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = b.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || rate == 0) throw ParseError(0, "wave file has no usable fmt chunk");
  if (!data) throw ParseError(0, "wave file has no data chunk");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool pcm24 = format == kFormatPcm && bits == 24;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !pcm24 && !f32) {
    throw ParseError(0, "unsupported wave encoding (format " + std::to_string(format) + ", " +
                            std::to_string(bits) + " bits)");
  }
  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  RawAudio out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.channels.assign(channels, std::vector<float>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + (i * channels + c) * width;
      float v;
      if (pcm16) {
        v = static_cast<float>(static_cast<std::int16_t>(le16(p))) / 32768.0f;
      } else if (pcm24) {
        std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
        if (s & 0x800000) s -= 0x1000000;
        v = static_cast<float>(s) / 8388608.0f;
      } else {
        v = std::bit_cast<float>(le32(p));
      }
      out.channels[c][i] = v;
    }
  }
  return out;
}

RawAudio read_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open audio " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const ParseError& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const RawAudio& a) {
  if (a.channels.empty()) throw ValidationError("write_wav: no channels");
  const auto channels = static_cast<std::uint32_t>(a.channels.size());
  const std::size_t frames = a.frames();
  const auto data_bytes = static_cast<std::uint32_t>(frames * channels * 2);
  std::string out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
  };
  out += "RIFF";
  u32(36 + data_bytes);
  out += "WAVEfmt ";
  u32(16);
  u16(kFormatPcm);
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(a.sample_rate_hz));
  u32(static_cast<std::uint32_t>(a.sample_rate_hz) * channels * 2);
  u16(static_cast<std::uint16_t>(channels * 2));
  u16(16);
  out += "data";
  u32(data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : a.channels) {
      const float v = std::clamp(ch[i], -1.0f, 1.0f);
      u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * 32767.0f))));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace voclab
