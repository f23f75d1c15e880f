#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "voclab/aggregation.hpp"
#include "voclab/corpus.hpp"
#include "voclab/fraction.hpp"

namespace voclab {

struct SamplingConfig {
  LabelClass anchor_class = LabelClass::Laughing;
  Fraction multiplier{3, 1};
  std::uint64_t seed = 0;
};

/// Caps every non-anchor class at ceil(multiplier * |anchor|), sampling
/// uniformly without replacement. Output is sorted by clip_id.
std::vector<LabeledClip> downsample(std::span<const LabeledClip> labeled, const SamplingConfig& cfg);

struct SplitConfig {
  std::array<Fraction, 3> ratios{Fraction{80, 100}, Fraction{10, 100}, Fraction{10, 100}};
  std::uint64_t seed = 0;
  int age_bucket_months = 12;
  bool stratify_by_age = true;
  bool stratify_by_language = true;
};

/// Throws ValidationError unless ratios are non-negative and sum to exactly 1.
void check_ratios(const std::array<Fraction, 3>& ratios);

struct SplitAssignment {
  std::map<std::string, Fold> child_fold;
  std::map<std::string, Fold> clip_fold;
  /// Clip-count share per fold (train, dev, test).
  std::array<double, 3> achieved{};
  /// Child-disjunctness problems found when applying a fixed split.
  std::vector<std::string> violations;
};

/// Child-disjunct stratified assignment. Throws ValidationError with fewer
/// than three children.
SplitAssignment split_children(std::span<const ClipRecord> clips, const SplitConfig& cfg);
SplitAssignment split_children(std::span<const LabeledClip> labeled, const SplitConfig& cfg);

/// Takes the manifest's split records verbatim. `clip_ids` restricts the
/// clips that must be covered (all manifest clips when empty). Children
/// whose clips disagree on fold are reported in `violations`.
SplitAssignment apply_split_hint(const Manifest& m, std::span<const std::string> clip_ids = {});

// Split file: {"kind":"child","child_id":..,"fold":..} lines followed by
// {"kind":"clip","clip_id":..,"fold":..} lines.
std::string serialize_split_file(const SplitAssignment& a);
SplitAssignment read_split_file(const std::filesystem::path& path);
SplitAssignment parse_split_file(std::istream& in);

}  // namespace voclab
