#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voclab/corpus.hpp"
#include "voclab/fraction.hpp"
#include "voclab/labels.hpp"

namespace voclab {

enum class TiePolicy : std::uint8_t { Exclude, FixedPriority };

std::string_view to_string(TiePolicy p) noexcept;
TiePolicy tie_policy_from_string(std::string_view s);

struct AggregationConfig {
  Fraction strong_majority_threshold{2, 3};
  int min_annotations = 3;
  TiePolicy tie_policy = TiePolicy::Exclude;
};

/// Throws ValidationError unless the threshold lies in (0, 1] and
/// min_annotations >= 1.
void check_aggregation_config(const AggregationConfig& cfg);

/// Consensus outcome for one clip. `label` is empty when unresolved (tie
/// under TiePolicy::Exclude).
struct AggregatedLabel {
  std::string clip_id;
  std::optional<LabelClass> label;
  int n_annotations = 0;
  int top_count = 0;
  bool in_cleaned = false;
  bool in_uncleaned = false;

  Fraction agreement_fraction() const noexcept { return {top_count, n_annotations}; }
};

/// Plurality label with tier flags. Throws ValidationError on empty input
/// or mixed clip ids.
AggregatedLabel aggregate_clip(std::span<const Annotation> annotations, const AggregationConfig& cfg);

struct LabeledClip {
  ClipRecord clip;
  LabelClass label;
};

struct Tiers {
  std::vector<LabeledClip> cleaned;
  std::vector<LabeledClip> uncleaned;
  std::vector<std::string> dropped;
  /// Every annotated clip, in manifest clip order.
  std::vector<AggregatedLabel> per_clip;
};

Tiers build_tiers(const Manifest& m, const AggregationConfig& cfg);

enum class Tier : std::uint8_t { Cleaned, Uncleaned };
std::string_view to_string(Tier t) noexcept;
Tier tier_from_string(std::string_view s);

// Tier file: one JSON object per line,
//   {"clip_id":..,"label":..|null,"n_annotations":..,"top_count":..,"tier_flags":[..]}

std::string serialize_tier_file(std::span<const AggregatedLabel> labels);
std::vector<AggregatedLabel> parse_tier_file(std::istream& in);
std::vector<AggregatedLabel> read_tier_file(const std::filesystem::path& path);

/// Clips of the manifest that carry `tier` in the given tier file, with
/// their consensus labels, in tier-file order. Throws if a clip is unknown.
std::vector<LabeledClip> select_tier(const Manifest& m, std::span<const AggregatedLabel> labels, Tier tier);

}  // namespace voclab
