#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace voclab {

inline constexpr int kTargetSampleRate = 16000;
inline constexpr std::size_t kClipLength = 9217;

/// Multi-channel audio; every channel has the same length.
struct RawAudio {
  std::vector<std::vector<float>> channels;
  int sample_rate_hz = kTargetSampleRate;

  std::size_t frames() const noexcept { return channels.empty() ? 0 : channels.front().size(); }
};

/// Fixed-length 16 kHz mono model input.
class AudioClip {
 public:
  /// Throws ValidationError unless length is kClipLength and every sample
  /// is finite with magnitude at most 1 + 1e-6.
  explicit AudioClip(std::vector<float> samples);

  std::span<const float> samples() const noexcept { return samples_; }

 private:
  std::vector<float> samples_;
};

/// Per-sample mean over channels.
RawAudio to_mono(const RawAudio& a);

/// Polyphase windowed-sinc rate converter for an exact rational ratio.
/// The Kaiser-windowed kernel has 64 zero crossings per side and a
/// passband edge at 0.95 of the lower Nyquist frequency. The phase table is
/// immutable after construction and safe to share across threads.
class Resampler {
 public:
  Resampler(int source_rate_hz, int target_rate_hz);
  ~Resampler();
  Resampler(Resampler&&) noexcept;
  Resampler& operator=(Resampler&&) noexcept;

  /// Output length is round(n * target / source).
  std::vector<float> process(std::span<const float> input) const;

  std::size_t output_length(std::size_t input_length) const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline constexpr int kMinSourceRate = 8000;
inline constexpr int kMaxSourceRate = 192000;
inline constexpr double kKaiserBeta = 6.0;
inline constexpr int kZeroCrossings = 64;
inline constexpr double kPassbandFraction = 0.95;

/// Mono input at any supported rate -> mono 16 kHz. Identity at 16 kHz.
RawAudio resample_to_16k(const RawAudio& a);

enum class OverflowPolicy : std::uint8_t { Error, Crop };

/// Zero-pads around the center: floor((target - n) / 2) zeros on the left.
/// Inputs longer than `target` throw unless policy is Crop, which keeps the
/// centered window with the same floor-left convention.
std::vector<float> pad_center(std::span<const float> samples, std::size_t target = kClipLength,
                              OverflowPolicy policy = OverflowPolicy::Error);

AudioClip pad_center_clip(const RawAudio& mono16k, OverflowPolicy policy = OverflowPolicy::Error);

/// Full normalization: mixdown, resample to 16 kHz, center pad.
AudioClip prepare_clip(const RawAudio& a, OverflowPolicy policy = OverflowPolicy::Error);

// PCM wave I/O: reads 16-bit integer and 32-bit float (plain or extensible
// format headers); writes 16-bit integer.
RawAudio read_wav(const std::filesystem::path& path);
RawAudio parse_wav(std::span<const std::uint8_t> bytes);
void write_wav(const std::filesystem::path& path, const RawAudio& a);

// Clip-tensor file: "VCLP" magic, u32 version, u32 count, u32 length, then
// per record a u32-length-prefixed clip_id and `length` little-endian f32.

inline constexpr std::uint32_t kClipTensorVersion = 1;

struct ClipTensor {
  std::string clip_id;
  AudioClip clip;
};

void write_clip_tensors(const std::filesystem::path& path, std::span<const ClipTensor> clips);
std::vector<ClipTensor> read_clip_tensors(const std::filesystem::path& path);

}  // namespace voclab
