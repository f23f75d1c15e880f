#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace voclab::synth {

// Synthetic corpus: class-dependent tones and noise written as WAV files at
// mixed sample rates, a manifest with noisy annotations, and a gold
// manifest for the qualification gate.
struct SynthConfig {
  int children = 50;
  int clips_per_child = 50;
  int annotator_pool = 30;
  int min_annotations = 3;
  int max_annotations = 5;
  double annotator_accuracy = 0.8;
  int gold_clips = 20;
  std::uint64_t seed = 1;
};

struct SynthCorpus {
  std::filesystem::path manifest;
  std::filesystem::path gold_manifest;
  std::size_t clips = 0;
  std::size_t annotations = 0;
};

SynthCorpus generate(const std::filesystem::path& dir, const SynthConfig& cfg);

}  // namespace voclab::synth
