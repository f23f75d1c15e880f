#include "voclab/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "voclab/error.hpp"
#include "voclab/util.hpp"

namespace voclab {

using json = nlohmann::ordered_json;

std::string_view to_string(Environment e) noexcept { return e == Environment::Urban ? "urban" : "rural"; }

std::string_view to_string(Fold f) noexcept {
  switch (f) {
    case Fold::Train: return "train";
    case Fold::Dev: return "dev";
    case Fold::Test: return "test";
  }
  return "train";
}

Environment environment_from_string(std::string_view s) {
  if (s == "urban") return Environment::Urban;
  if (s == "rural") return Environment::Rural;
  throw ValidationError("unknown environment \"" + std::string(s) + "\"");
}

Fold fold_from_string(std::string_view s) {
  if (s == "train") return Fold::Train;
  if (s == "dev") return Fold::Dev;
  if (s == "test") return Fold::Test;
  throw ValidationError("unknown fold \"" + std::string(s) + "\"");
}

Timestamp parse_timestamp(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char tail = 0;
  const std::string str(s);
  if (s.size() != 20 ||
      std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &sec, &tail) != 7 || tail != 'Z' ||
      s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':') {
    throw ValidationError("timestamp \"" + str + "\" is not YYYY-MM-DDTHH:MM:SSZ");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) throw ValidationError("timestamp \"" + str + "\" out of range");
  return std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{sec};
}

std::string format_timestamp(Timestamp t) {
  const auto days = std::chrono::floor<std::chrono::days>(t);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{t - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

const ClipRecord* Manifest::find_clip(std::string_view clip_id) const {
  auto it = clip_pos_.find(std::string(clip_id));
  return it == clip_pos_.end() ? nullptr : &clips[it->second];
}

void Manifest::reindex() {
  clip_pos_.clear();
  for (std::size_t i = 0; i < clips.size(); ++i) clip_pos_.emplace(clips[i].clip_id, i);
}

namespace {

const json& field(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(std::string("missing field \"") + name + "\"");
  return *it;
}

std::string string_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_string()) throw ValidationError(std::string("field \"") + name + "\" must be a string");
  return v.get<std::string>();
}

std::int64_t int_field(const json& j, const char* name) {
  const json& v = field(j, name);
  if (!v.is_number_integer()) throw ValidationError(std::string("field \"") + name + "\" must be an integer");
  return v.get<std::int64_t>();
}

SplitRecord split_from_json(const json& j) {
  SplitRecord s;
  s.clip_id = string_field(j, "clip_id");
  s.fold = fold_from_string(string_field(j, "fold"));
  s.source = j;
  return s;
}

}  // namespace

ClipRecord clip_from_json(const json& j) {
  ClipRecord c;
  c.clip_id = string_field(j, "clip_id");
  c.child_id = string_field(j, "child_id");
  c.corpus_id = string_field(j, "corpus_id");
  c.language = string_field(j, "language");
  c.environment = environment_from_string(string_field(j, "environment"));
  c.age_months = int_field(j, "age_months");
  c.audio_uri = string_field(j, "audio_uri");
  c.duration_ms = int_field(j, "duration_ms");
  c.source = j;
  return c;
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.clip_id = string_field(j, "clip_id");
  a.annotator_id = string_field(j, "annotator_id");
  a.label = label_from_string(string_field(j, "label"));
  a.submitted_at = parse_timestamp(string_field(j, "submitted_at"));
  a.source = j;
  return a;
}

json to_json(const ClipRecord& c) {
  json j = c.source.is_object() ? c.source : json::object();
  j["kind"] = "clip";
  j["clip_id"] = c.clip_id;
  j["child_id"] = c.child_id;
  j["corpus_id"] = c.corpus_id;
  j["language"] = c.language;
  j["environment"] = to_string(c.environment);
  j["age_months"] = c.age_months;
  j["audio_uri"] = c.audio_uri;
  j["duration_ms"] = c.duration_ms;
  return j;
}

json to_json(const Annotation& a) {
  json j = a.source.is_object() ? a.source : json::object();
  j["kind"] = "annotation";
  j["clip_id"] = a.clip_id;
  j["annotator_id"] = a.annotator_id;
  j["label"] = to_string(a.label);
  j["submitted_at"] = format_timestamp(a.submitted_at);
  return j;
}

json to_json(const SplitRecord& s) {
  json j = s.source.is_object() ? s.source : json::object();
  j["kind"] = "split";
  j["clip_id"] = s.clip_id;
  j["fold"] = to_string(s.fold);
  return j;
}

namespace {

struct LineTracker {
  std::vector<std::size_t> clip_lines, annotation_lines, split_lines;
};

void parse_into(std::istream& in, Manifest& m, LineTracker& lines, bool annotations_only) {
  std::set<std::string> clip_ids;
  for (const auto& c : m.clips) clip_ids.insert(c.clip_id);
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& a : m.annotations) pairs.emplace(a.clip_id, a.annotator_id);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed record: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(lineno, "record is not an object");
    try {
      const std::string kind = string_field(j, "kind");
      if (annotations_only && kind != "annotation") {
        throw ValidationError("annotation log may only contain annotation records, got \"" + kind + "\"");
      }
      if (kind == "clip") {
        ClipRecord c = clip_from_json(j);
        if (!clip_ids.insert(c.clip_id).second) throw ValidationError("duplicate clip_id \"" + c.clip_id + "\"");
        m.order.push_back({Manifest::Kind::Clip, m.clips.size()});
        m.clips.push_back(std::move(c));
        lines.clip_lines.push_back(lineno);
      } else if (kind == "annotation") {
        Annotation a = annotation_from_json(j);
        if (!pairs.emplace(a.clip_id, a.annotator_id).second) {
          throw ValidationError("duplicate annotation by \"" + a.annotator_id + "\" on clip \"" + a.clip_id + "\"");
        }
        m.order.push_back({Manifest::Kind::Annotation, m.annotations.size()});
        m.annotations.push_back(std::move(a));
        lines.annotation_lines.push_back(lineno);
      } else if (kind == "split") {
        m.order.push_back({Manifest::Kind::Split, m.splits.size()});
        m.splits.push_back(split_from_json(j));
        lines.split_lines.push_back(lineno);
      } else {
        throw ValidationError("unknown record kind \"" + kind + "\"");
      }
    } catch (const ValidationError& e) {
      throw ParseError(lineno, e.what());
    }
  }
}

void check_references(const Manifest& m, const LineTracker& lines) {
  for (std::size_t i = 0; i < m.annotations.size(); ++i) {
    if (!m.find_clip(m.annotations[i].clip_id)) {
      throw ParseError(lines.annotation_lines[i],
                       "annotation references unknown clip \"" + m.annotations[i].clip_id + "\"");
    }
  }
  for (std::size_t i = 0; i < m.splits.size(); ++i) {
    if (!m.find_clip(m.splits[i].clip_id)) {
      throw ParseError(lines.split_lines[i], "split record references unknown clip \"" + m.splits[i].clip_id + "\"");
    }
  }
}

void throw_if_invalid(const Manifest& m) {
  const auto violations = validate_manifest(m);
  if (violations.empty()) return;
  std::string msg = "manifest invalid:";
  for (const auto& v : violations) msg += "\n  " + v.describe();
  throw ValidationError(msg);
}

}  // namespace

Manifest parse_manifest(std::istream& in) {
  Manifest m;
  LineTracker lines;
  parse_into(in, m, lines, false);
  m.reindex();
  check_references(m, lines);
  throw_if_invalid(m);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  try {
    return parse_manifest(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

void merge_annotation_log(Manifest& m, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open annotation log " + path.string());
  LineTracker lines;
  const std::size_t first = m.annotations.size();
  if (m.order.empty()) {
    for (std::size_t i = 0; i < m.clips.size(); ++i) m.order.push_back({Manifest::Kind::Clip, i});
    for (std::size_t i = 0; i < first; ++i) m.order.push_back({Manifest::Kind::Annotation, i});
    for (std::size_t i = 0; i < m.splits.size(); ++i) m.order.push_back({Manifest::Kind::Split, i});
  }
  parse_into(in, m, lines, true);
  for (std::size_t i = first; i < m.annotations.size(); ++i) {
    if (!m.find_clip(m.annotations[i].clip_id)) {
      throw ParseError(lines.annotation_lines[i - first], path.string() + ": annotation references unknown clip \"" +
                                                              m.annotations[i].clip_id + "\"");
    }
  }
  throw_if_invalid(m);
}

std::vector<Violation> validate_manifest(const Manifest& m) {
  std::vector<Violation> out;
  std::map<std::string, std::size_t> clip_seen;
  for (const auto& c : m.clips) {
    const std::string rec = "clip \"" + c.clip_id + "\"";
    if (c.clip_id.empty()) out.push_back({rec, "clip_id must be non-empty"});
    if (++clip_seen[c.clip_id] == 2) out.push_back({rec, "clip_id must be unique"});
    if (c.child_id.empty()) out.push_back({rec, "child_id must be non-empty"});
    if (c.age_months < 0 || c.age_months > kMaxAgeMonths) {
      out.push_back({rec, "age_months must be within [0, " + std::to_string(kMaxAgeMonths) + "], got " +
                              std::to_string(c.age_months)});
    }
    if (c.duration_ms <= 0) out.push_back({rec, "duration_ms must be positive"});
  }
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& a : m.annotations) {
    const std::string rec = "annotation (clip \"" + a.clip_id + "\", annotator \"" + a.annotator_id + "\")";
    if (!clip_seen.count(a.clip_id)) out.push_back({rec, "clip_id does not resolve to a clip record"});
    if (a.annotator_id.empty()) out.push_back({rec, "annotator_id must be non-empty"});
    if (!pairs.emplace(a.clip_id, a.annotator_id).second) {
      out.push_back({rec, "duplicate (clip, annotator) pair"});
    }
  }
  std::set<std::string> split_seen;
  for (const auto& s : m.splits) {
    const std::string rec = "split (clip \"" + s.clip_id + "\")";
    if (!clip_seen.count(s.clip_id)) out.push_back({rec, "clip_id does not resolve to a clip record"});
    if (!split_seen.insert(s.clip_id).second) out.push_back({rec, "more than one split record for this clip"});
  }
  return out;
}

std::string serialize_manifest(const Manifest& m) {
  std::string out;
  auto emit = [&](const json& j) {
    out += j.dump();
    out += '\n';
  };
  if (m.order.empty()) {
    for (const auto& c : m.clips) emit(to_json(c));
    for (const auto& a : m.annotations) emit(to_json(a));
    for (const auto& s : m.splits) emit(to_json(s));
    return out;
  }
  for (const auto& ref : m.order) {
    switch (ref.kind) {
      case Manifest::Kind::Clip: emit(to_json(m.clips[ref.index])); break;
      case Manifest::Kind::Annotation: emit(to_json(m.annotations[ref.index])); break;
      case Manifest::Kind::Split: emit(to_json(m.splits[ref.index])); break;
    }
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file_atomic(path, serialize_manifest(m));
}

}  // namespace voclab
