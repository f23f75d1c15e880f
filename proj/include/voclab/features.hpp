#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voclab/audio.hpp"

namespace voclab {

enum class FeatureKind : std::uint8_t { LogMelStats = 0, ImportedEmbedding = 1 };

std::string_view to_string(FeatureKind k) noexcept;

struct FeatureConfig {
  FeatureKind kind = FeatureKind::LogMelStats;
  int n_mels = 40;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double fmin_hz = 20.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-6;
};

/// Throws ValidationError for n_mels < 1, fmax above Nyquist, fmin >= fmax.
void check_feature_config(const FeatureConfig& cfg, int sample_rate_hz = kTargetSampleRate);

struct FeatureVector {
  std::string clip_id;
  std::vector<double> values;
};

/// Log-mel summary features: Hann-windowed magnitude spectra, triangular
/// HTK-mel filterbank, log(x + floor), then per-band time mean followed by
/// per-band population standard deviation (D = 2 * n_mels).
///
/// Holds an FFT plan and scratch buffers; one instance per thread.
class LogMelExtractor {
 public:
  explicit LogMelExtractor(const FeatureConfig& cfg);
  ~LogMelExtractor();
  LogMelExtractor(const LogMelExtractor&) = delete;
  LogMelExtractor& operator=(const LogMelExtractor&) = delete;

  FeatureVector extract(std::string clip_id, const AudioClip& clip);

  /// Per-frame log-mel energies, frames x n_mels row-major.
  std::vector<double> log_mel_frames(const AudioClip& clip);

  std::size_t frame_count() const noexcept;
  std::size_t dimension() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

FeatureVector extract_features(const AudioClip& clip, const FeatureConfig& cfg, std::string clip_id = {});

// Embedding file: header "clip_id,dim=D", then "clip_id,v1,...,vD" rows.

std::vector<FeatureVector> parse_embeddings(std::istream& in);
std::vector<FeatureVector> import_embeddings(const std::filesystem::path& path);
std::string serialize_embeddings(std::span<const FeatureVector> vectors);

}  // namespace voclab
