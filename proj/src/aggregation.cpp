#include "voclab/aggregation.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "voclab/error.hpp"

namespace voclab {

using json = nlohmann::ordered_json;

std::string_view to_string(TiePolicy p) noexcept { return p == TiePolicy::Exclude ? "exclude" : "fixed_priority"; }

TiePolicy tie_policy_from_string(std::string_view s) {
  if (s == "exclude") return TiePolicy::Exclude;
  if (s == "fixed_priority") return TiePolicy::FixedPriority;
  throw ValidationError("unknown tie policy \"" + std::string(s) + "\"");
}

std::string_view to_string(Tier t) noexcept { return t == Tier::Cleaned ? "cleaned" : "uncleaned"; }

Tier tier_from_string(std::string_view s) {
  if (s == "cleaned") return Tier::Cleaned;
  if (s == "uncleaned") return Tier::Uncleaned;
  throw ValidationError("unknown tier \"" + std::string(s) + "\"");
}

void check_aggregation_config(const AggregationConfig& cfg) {
  const Fraction& t = cfg.strong_majority_threshold;
  if (t.den <= 0 || t <= Fraction{0, 1} || t > Fraction{1, 1}) {
    throw ValidationError("strong majority threshold must lie in (0, 1]");
  }
  if (cfg.min_annotations < 1) throw ValidationError("min_annotations must be at least 1");
}

AggregatedLabel aggregate_clip(std::span<const Annotation> annotations, const AggregationConfig& cfg) {
  check_aggregation_config(cfg);
  if (annotations.empty()) throw ValidationError("aggregate_clip: no annotations");
  AggregatedLabel out;
  out.clip_id = annotations.front().clip_id;
  std::array<int, kNumClasses> counts{};
  for (const auto& a : annotations) {
    if (a.clip_id != out.clip_id) {
      throw ValidationError("aggregate_clip: mixed clip ids \"" + out.clip_id + "\" and \"" + a.clip_id + "\"");
    }
    ++counts[index_of(a.label)];
  }
  out.n_annotations = static_cast<int>(annotations.size());

  int ties = 0;
  std::size_t first_max = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (counts[c] > out.top_count) {
      out.top_count = counts[c];
      first_max = c;
      ties = 1;
    } else if (counts[c] == out.top_count) {
      ++ties;
    }
  }
  if (ties == 1 || cfg.tie_policy == TiePolicy::FixedPriority) out.label = class_at(first_max);

  // Cleaned additionally requires the Uncleaned conditions so the tiers nest.
  out.in_uncleaned = out.label.has_value() && out.n_annotations >= cfg.min_annotations;
  out.in_cleaned = out.in_uncleaned && out.agreement_fraction() >= cfg.strong_majority_threshold;
  return out;
}

Tiers build_tiers(const Manifest& m, const AggregationConfig& cfg) {
  check_aggregation_config(cfg);
  std::unordered_map<std::string, std::vector<Annotation>> by_clip;
  for (const auto& a : m.annotations) by_clip[a.clip_id].push_back(a);

  Tiers t;
  for (const auto& clip : m.clips) {
    auto it = by_clip.find(clip.clip_id);
    if (it == by_clip.end()) continue;
    AggregatedLabel agg = aggregate_clip(it->second, cfg);
    if (agg.in_uncleaned) t.uncleaned.push_back({clip, *agg.label});
    if (agg.in_cleaned) t.cleaned.push_back({clip, *agg.label});
    if (!agg.in_uncleaned) t.dropped.push_back(clip.clip_id);
    t.per_clip.push_back(std::move(agg));
  }
  return t;
}

std::string serialize_tier_file(std::span<const AggregatedLabel> labels) {
  std::string out;
  for (const auto& l : labels) {
    json j;
    j["clip_id"] = l.clip_id;
    j["label"] = l.label ? json(to_string(*l.label)) : json(nullptr);
    j["n_annotations"] = l.n_annotations;
    j["top_count"] = l.top_count;
    json flags = json::array();
    if (l.in_cleaned) flags.push_back("cleaned");
    if (l.in_uncleaned) flags.push_back("uncleaned");
    j["tier_flags"] = std::move(flags);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<AggregatedLabel> parse_tier_file(std::istream& in) {
  std::vector<AggregatedLabel> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AggregatedLabel l;
      l.clip_id = j.at("clip_id").get<std::string>();
      if (!j.at("label").is_null()) l.label = label_from_string(j.at("label").get<std::string>());
      l.n_annotations = j.at("n_annotations").get<int>();
      l.top_count = j.at("top_count").get<int>();
      for (const auto& f : j.at("tier_flags")) {
        const Tier t = tier_from_string(f.get<std::string>());
        (t == Tier::Cleaned ? l.in_cleaned : l.in_uncleaned) = true;
      }
      if ((l.in_cleaned || l.in_uncleaned) && !l.label) throw ValidationError("tiered clip without a label");
      out.push_back(std::move(l));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("bad tier record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<AggregatedLabel> read_tier_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open tier file " + path.string());
  return parse_tier_file(in);
}

std::vector<LabeledClip> select_tier(const Manifest& m, std::span<const AggregatedLabel> labels, Tier tier) {
  std::vector<LabeledClip> out;
  for (const auto& l : labels) {
    if (!(tier == Tier::Cleaned ? l.in_cleaned : l.in_uncleaned)) continue;
    const ClipRecord* c = m.find_clip(l.clip_id);
    if (!c) throw ValidationError("tier file clip \"" + l.clip_id + "\" is not in the manifest");
    out.push_back({*c, *l.label});
  }
  return out;
}

}  // namespace voclab
