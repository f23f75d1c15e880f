#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "voclab/labels.hpp"

namespace voclab {

enum class Environment : std::uint8_t { Urban, Rural };
enum class Fold : std::uint8_t { Train = 0, Dev, Test };

std::string_view to_string(Environment e) noexcept;
std::string_view to_string(Fold f) noexcept;
Environment environment_from_string(std::string_view s);
Fold fold_from_string(std::string_view s);

using Timestamp = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DDTHH:MM:SSZ". Throws ValidationError on anything else.
Timestamp parse_timestamp(std::string_view s);
std::string format_timestamp(Timestamp t);

inline constexpr std::int64_t kMaxAgeMonths = 120;

// Each record keeps the JSON object it was parsed from (`source`) so that
// unknown fields and key order survive a load/write round trip. Records
// built in code leave it null and serialize canonically.

struct ClipRecord {
  std::string clip_id;
  std::string child_id;
  std::string corpus_id;
  std::string language;
  Environment environment = Environment::Urban;
  std::int64_t age_months = 0;
  std::string audio_uri;
  std::int64_t duration_ms = 1;
  nlohmann::ordered_json source;
};

struct Annotation {
  std::string clip_id;
  std::string annotator_id;
  LabelClass label = LabelClass::Junk;
  Timestamp submitted_at{};
  nlohmann::ordered_json source;
};

struct SplitRecord {
  std::string clip_id;
  Fold fold = Fold::Train;
  nlohmann::ordered_json source;
};

struct Manifest {
  enum class Kind : std::uint8_t { Clip, Annotation, Split };
  struct RecordRef {
    Kind kind;
    std::size_t index;
  };

  std::vector<ClipRecord> clips;
  std::vector<Annotation> annotations;
  std::vector<SplitRecord> splits;
  /// Original interleaving of records; empty means clips, annotations, splits.
  std::vector<RecordRef> order;

  /// Position of a clip by id, or nullptr. Requires reindex() after mutation.
  const ClipRecord* find_clip(std::string_view clip_id) const;
  void reindex();

 private:
  std::unordered_map<std::string, std::size_t> clip_pos_;
};

/// One violated invariant: which record and which rule.
struct Violation {
  std::string record;
  std::string rule;
  std::string describe() const { return record + ": " + rule; }
};

/// Reads a line-delimited manifest, then validates it. Throws ParseError
/// (with line number) for malformed records or duplicate (clip, annotator)
/// pairs, and ValidationError for dangling references and other invariant
/// violations.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(std::istream& in);

/// Appends annotation records from an annotation log (same record format)
/// to an already-loaded manifest and revalidates.
void merge_annotation_log(Manifest& m, const std::filesystem::path& path);

std::vector<Violation> validate_manifest(const Manifest& m);

std::string serialize_manifest(const Manifest& m);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

nlohmann::ordered_json to_json(const ClipRecord& c);
nlohmann::ordered_json to_json(const Annotation& a);
nlohmann::ordered_json to_json(const SplitRecord& s);
ClipRecord clip_from_json(const nlohmann::ordered_json& j);
Annotation annotation_from_json(const nlohmann::ordered_json& j);

}  // namespace voclab
