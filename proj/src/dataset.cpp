#include "voclab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "voclab/error.hpp"
#include "voclab/rng.hpp"

namespace voclab {

using json = nlohmann::ordered_json;

std::vector<LabeledClip> downsample(std::span<const LabeledClip> labeled, const SamplingConfig& cfg) {
  if (labeled.empty()) throw ValidationError("downsample: empty input");
  if (cfg.multiplier.num <= 0 || cfg.multiplier.den <= 0) throw ValidationError("downsample: multiplier must be > 0");

  std::array<std::vector<const LabeledClip*>, kNumClasses> by_class;
  for (const auto& lc : labeled) by_class[index_of(lc.label)].push_back(&lc);
  const auto anchor_count = static_cast<std::int64_t>(by_class[index_of(cfg.anchor_class)].size());
  if (anchor_count == 0) {
    throw ValidationError("downsample: anchor class \"" + std::string(to_string(cfg.anchor_class)) +
                          "\" is absent from the input");
  }
  const auto cap = static_cast<std::size_t>(ceil_mul(cfg.multiplier, anchor_count));

  Rng rng(cfg.seed);
  std::vector<LabeledClip> out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& items = by_class[c];
    std::sort(items.begin(), items.end(),
              [](const LabeledClip* a, const LabeledClip* b) { return a->clip.clip_id < b->clip.clip_id; });
    std::size_t keep = items.size();
    if (class_at(c) != cfg.anchor_class && items.size() > cap) {
      // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
      for (std::size_t i = 0; i < cap; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_below(items.size() - i));
        std::swap(items[i], items[j]);
      }
      keep = cap;
    }
    for (std::size_t i = 0; i < keep; ++i) out.push_back(*items[i]);
  }
  std::sort(out.begin(), out.end(),
            [](const LabeledClip& a, const LabeledClip& b) { return a.clip.clip_id < b.clip.clip_id; });
  return out;
}

void check_ratios(const std::array<Fraction, 3>& ratios) {
  std::int64_t num = 0;
  std::int64_t den = 1;
  for (const auto& r : ratios) {
    if (r.den <= 0 || r.num < 0) throw ValidationError("split ratios must be non-negative");
    num = num * r.den + r.num * den;
    den *= r.den;
  }
  if (num != den) throw ValidationError("split ratios must sum to exactly 1");
}

namespace {

struct ChildInfo {
  std::string child_id;
  std::size_t clips = 0;
  std::vector<std::int64_t> ages;
  std::string language;
};

std::array<double, 3> proportions(const std::map<std::string, Fold>& clip_fold) {
  std::array<double, 3> p{};
  if (clip_fold.empty()) return p;
  for (const auto& [_, f] : clip_fold) p[static_cast<std::size_t>(f)] += 1.0;
  for (auto& v : p) v /= static_cast<double>(clip_fold.size());
  return p;
}

constexpr std::size_t kStratumGuarantee = 10;

}  // namespace

SplitAssignment split_children(std::span<const ClipRecord> clips, const SplitConfig& cfg) {
  check_ratios(cfg.ratios);
  if (cfg.age_bucket_months <= 0) throw ValidationError("age_bucket_months must be positive");

  std::map<std::string, ChildInfo> children;
  for (const auto& c : clips) {
    if (c.child_id.empty()) throw ValidationError("clip \"" + c.clip_id + "\" has no child_id");
    auto& info = children[c.child_id];
    info.child_id = c.child_id;
    ++info.clips;
    info.ages.push_back(c.age_months);
    if (info.language.empty() || c.language < info.language) info.language = c.language;
  }
  if (children.size() < 3) {
    throw ValidationError("split_children: need at least 3 children, got " + std::to_string(children.size()));
  }

  // Stratum key per child: language and the bucket of the child's lower-median clip age.
  std::map<std::string, std::vector<const ChildInfo*>> strata;
  for (auto& [id, info] : children) {
    std::string key;
    if (cfg.stratify_by_language) key += info.language;
    key += '\x1f';
    if (cfg.stratify_by_age) {
      std::sort(info.ages.begin(), info.ages.end());
      key += std::to_string(info.ages[(info.ages.size() - 1) / 2] / cfg.age_bucket_months);
    }
    strata[key].push_back(&info);
  }

  const auto total = static_cast<double>(clips.size());
  std::array<double, 3> target{};
  std::array<bool, 3> active{};
  for (std::size_t f = 0; f < 3; ++f) {
    target[f] = static_cast<double>(cfg.ratios[f].num) * total / static_cast<double>(cfg.ratios[f].den);
    active[f] = cfg.ratios[f].num > 0;
  }
  std::array<double, 3> assigned{};
  std::array<std::size_t, 3> fold_children{};
  std::size_t children_left = children.size();

  Rng rng(cfg.seed);
  SplitAssignment out;
  for (auto& [key, members] : strata) {
    rng.shuffle(std::span<const ChildInfo*>(members));
    std::array<bool, 3> populated{};
    std::size_t stratum_left = members.size();
    for (const ChildInfo* child : members) {
      std::array<bool, 3> candidates = active;

      std::size_t globally_empty = 0;
      for (std::size_t f = 0; f < 3; ++f) globally_empty += (active[f] && fold_children[f] == 0) ? 1 : 0;
      const bool force_global = globally_empty > 0 && children_left <= globally_empty;

      std::size_t unpopulated = 0;
      for (std::size_t f = 0; f < 3; ++f) unpopulated += (active[f] && !populated[f]) ? 1 : 0;
      const bool force_stratum =
          members.size() >= kStratumGuarantee && unpopulated > 0 && stratum_left <= unpopulated;

      if (force_global) {
        for (std::size_t f = 0; f < 3; ++f) candidates[f] = active[f] && fold_children[f] == 0;
      }
      if (force_stratum) {
        std::array<bool, 3> narrowed{};
        bool any = false;
        for (std::size_t f = 0; f < 3; ++f) {
          narrowed[f] = candidates[f] && !populated[f];
          any = any || narrowed[f];
        }
        if (any) candidates = narrowed;
      }

      std::size_t best = 3;
      for (std::size_t f = 0; f < 3; ++f) {
        if (!candidates[f]) continue;
        if (best == 3 || target[f] - assigned[f] > target[best] - assigned[best]) best = f;
      }
      assigned[best] += static_cast<double>(child->clips);
      ++fold_children[best];
      populated[best] = true;
      --children_left;
      --stratum_left;
      out.child_fold[child->child_id] = static_cast<Fold>(best);
    }
  }

  for (const auto& c : clips) out.clip_fold[c.clip_id] = out.child_fold.at(c.child_id);
  out.achieved = proportions(out.clip_fold);
  return out;
}

SplitAssignment split_children(std::span<const LabeledClip> labeled, const SplitConfig& cfg) {
  std::vector<ClipRecord> clips;
  clips.reserve(labeled.size());
  for (const auto& lc : labeled) clips.push_back(lc.clip);
  return split_children(std::span<const ClipRecord>(clips), cfg);
}

SplitAssignment apply_split_hint(const Manifest& m, std::span<const std::string> clip_ids) {
  std::map<std::string, Fold> hinted;
  for (const auto& s : m.splits) hinted.emplace(s.clip_id, s.fold);

  std::vector<std::string> required;
  if (clip_ids.empty()) {
    for (const auto& c : m.clips) required.push_back(c.clip_id);
  } else {
    required.assign(clip_ids.begin(), clip_ids.end());
  }
  std::vector<std::string> missing;
  for (const auto& id : required) {
    if (!hinted.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string msg = "no split record for " + std::to_string(missing.size()) + " clip(s):";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    throw ValidationError(msg);
  }

  SplitAssignment out;
  std::map<std::string, std::set<Fold>> child_folds;
  for (const auto& c : m.clips) {
    auto it = hinted.find(c.clip_id);
    if (it == hinted.end()) continue;
    out.clip_fold[c.clip_id] = it->second;
    out.child_fold.emplace(c.child_id, it->second);
    child_folds[c.child_id].insert(it->second);
  }
  for (const auto& [child, folds] : child_folds) {
    if (folds.size() < 2) continue;
    std::string v = "child \"" + child + "\" has clips in folds";
    for (Fold f : folds) v += " " + std::string(to_string(f));
    out.violations.push_back(std::move(v));
  }
  out.achieved = proportions(out.clip_fold);
  return out;
}

std::string serialize_split_file(const SplitAssignment& a) {
  std::string out;
  for (const auto& [child, fold] : a.child_fold) {
    json j;
    j["kind"] = "child";
    j["child_id"] = child;
    j["fold"] = to_string(fold);
    out += j.dump() + '\n';
  }
  for (const auto& [clip, fold] : a.clip_fold) {
    json j;
    j["kind"] = "clip";
    j["clip_id"] = clip;
    j["fold"] = to_string(fold);
    out += j.dump() + '\n';
  }
  return out;
}

SplitAssignment parse_split_file(std::istream& in) {
  SplitAssignment a;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      const Fold fold = fold_from_string(j.at("fold").get<std::string>());
      if (kind == "child") {
        a.child_fold[j.at("child_id").get<std::string>()] = fold;
      } else if (kind == "clip") {
        a.clip_fold[j.at("clip_id").get<std::string>()] = fold;
      } else {
        throw ValidationError("unknown split record kind \"" + kind + "\"");
      }
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("bad split record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  a.achieved = proportions(a.clip_fold);
  return a;
}

SplitAssignment read_split_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path.string());
  return parse_split_file(in);
}

}  // namespace voclab
