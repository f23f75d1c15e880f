#include "voclab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "voclab/error.hpp"
#include "voclab/util.hpp"

namespace voclab {

using json = nlohmann::ordered_json;

namespace {

std::optional<double> kappa_or_nullopt(std::span<const LabelCounts> items, const WeightMatrix& w) {
  try {
    return weighted_fleiss_kappa(items, w).kappa;
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string stratum_value(const ClipRecord& c, const std::string& key, int age_bucket_months) {
  if (key == "environment") return std::string(to_string(c.environment));
  if (key == "language") return c.language;
  if (key == "corpus_id") return c.corpus_id;
  const std::int64_t lo = (c.age_months / age_bucket_months) * age_bucket_months;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%03lld-%03lld", static_cast<long long>(lo),
                static_cast<long long>(lo + age_bucket_months - 1));
  return buf;
}

json confusion_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return rows;
}

json class_names() {
  json names = json::array();
  for (LabelClass c : kAllClasses) names.push_back(to_string(c));
  return names;
}

json weights_json(const WeightMatrix& w) {
  json rows = json::array();
  for (const auto& row : w.d) rows.push_back(row);
  return json{{"classes", class_names()}, {"costs", std::move(rows)}};
}

json kappa_json(const KappaResult& k) {
  json j;
  j["method"] = to_string(k.method);
  j["kappa"] = k.kappa;
  j["ci_low"] = k.ci_low ? json(*k.ci_low) : json(nullptr);
  j["ci_high"] = k.ci_high ? json(*k.ci_high) : json(nullptr);
  j["sd"] = k.sd ? json(*k.sd) : json(nullptr);
  j["n_items"] = k.n_items;
  j["excluded_items"] = k.excluded_items;
  j["observed_disagreement"] = k.observed_disagreement;
  j["expected_disagreement"] = k.expected_disagreement;
  return j;
}

}  // namespace

AgreementReport compute_agreement(const Manifest& m, std::span<const std::string> clip_ids,
                                  std::span<const PredictionRecord> preds, const AgreementOptions& opts) {
  check_weights(opts.weights);
  const std::set<std::string> wanted(clip_ids.begin(), clip_ids.end());
  std::map<std::string, LabelCounts> by_clip;
  std::vector<Annotation> relevant;
  for (const auto& a : m.annotations) {
    if (!wanted.count(a.clip_id)) continue;
    ++by_clip[a.clip_id][index_of(a.label)];
    relevant.push_back(a);
  }
  std::vector<LabelCounts> items;
  items.reserve(by_clip.size());
  for (const auto& [_, counts] : by_clip) items.push_back(counts);

  AgreementReport out;
  std::vector<std::pair<std::string, std::optional<int>>> variants{{"all", std::nullopt}};
  for (int max : opts.max_annotators) variants.emplace_back("max_" + std::to_string(max) + "_annotators", max);

  for (std::size_t v = 0; v < variants.size(); ++v) {
    NamedKappa nk;
    nk.name = variants[v].first;
    nk.max_annotators = variants[v].second;
    const std::vector<LabelCounts> subset =
        nk.max_annotators ? filter_by_annotator_count(items, *nk.max_annotators) : items;
    try {
      KappaResult k = weighted_fleiss_kappa(subset, opts.weights);
      const std::function<std::optional<double>(std::span<const LabelCounts>)> stat =
          [&](std::span<const LabelCounts> s) { return kappa_or_nullopt(s, opts.weights); };
      try {
        const auto ci = bootstrap_ci<LabelCounts>(stat, subset, opts.resamples, 0.95, derive_seed(opts.seed, v));
        k.ci_low = ci.low;
        k.ci_high = ci.high;
        k.sd = ci.sd;
      } catch (const ValidationError& e) {
        nk.note = e.what();
      }
      nk.result = k;
    } catch (const Error& e) {
      nk.note = e.what();
    }
    out.fleiss.push_back(std::move(nk));
  }

  if (!preds.empty()) {
    std::vector<PredictionRecord> scoped;
    for (const auto& p : preds) {
      if (wanted.count(p.clip_id)) scoped.push_back(p);
    }
    try {
      out.model = model_vs_annotators(scoped, relevant, opts.weights, opts.min_pairs, opts.pooled);
    } catch (const Error& e) {
      out.model_note = e.what();
    }
  }
  return out;
}

EvaluationReport evaluate(std::span<const PredictionRecord> preds, std::span<const AggregatedLabel> gold,
                          const Manifest& m, const SplitAssignment* split, const EvaluateOptions& opts) {
  for (const auto& key : opts.strata_keys) {
    if (std::find(kStratumKeys.begin(), kStratumKeys.end(), key) == kStratumKeys.end()) {
      throw ValidationError("unknown stratum key \"" + key + "\"");
    }
  }
  if (opts.age_bucket_months <= 0) throw ValidationError("age_bucket_months must be positive");

  std::unordered_map<std::string, const PredictionRecord*> pred_by_clip;
  for (const auto& p : preds) pred_by_clip.emplace(p.clip_id, &p);

  struct Item {
    const ClipRecord* clip;
    LabelClass gold;
    const PredictionRecord* pred;
  };
  std::vector<Item> items;
  std::vector<std::string> tier_clip_ids;
  std::vector<std::string> missing;
  EnvironmentTable env_table;
  for (const auto& g : gold) {
    const bool in_tier = opts.tier == Tier::Cleaned ? g.in_cleaned : g.in_uncleaned;
    if (!in_tier) continue;
    const ClipRecord* clip = m.find_clip(g.clip_id);
    if (!clip) throw ValidationError("gold clip \"" + g.clip_id + "\" is not in the manifest");
    tier_clip_ids.push_back(g.clip_id);
    if (split) {
      auto it = split->clip_fold.find(g.clip_id);
      if (it == split->clip_fold.end()) throw ValidationError("gold clip \"" + g.clip_id + "\" has no fold");
      ++env_table.counts[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(clip->environment)];
      if (it->second != Fold::Test) continue;
    }
    auto p = pred_by_clip.find(g.clip_id);
    if (p == pred_by_clip.end()) {
      missing.push_back(g.clip_id);
      continue;
    }
    items.push_back({clip, *g.label, p->second});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " gold clip(s) without predictions:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw ValidationError(msg);
  }
  if (items.empty()) throw ValidationError("evaluate: no gold clips to score");

  EvaluationReport r;
  r.dataset_id = opts.dataset_id;
  r.finetune_set = opts.finetune_set;
  r.tier = opts.tier;
  r.clips = items.size();
  std::vector<LabelPair> pairs;
  pairs.reserve(items.size());
  for (const auto& it : items) pairs.push_back({it.gold, it.pred->predicted});
  r.confusion = confusion(pairs);
  r.overall = uar(r.confusion);

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<ScoredItem> scored;
    scored.reserve(items.size());
    for (const auto& it : items) scored.push_back({it.pred->scores[c], index_of(it.gold) == c});
    try {
      r.roc[c] = roc_auc(scored, class_at(c));
    } catch (const ValidationError&) {
      // One-vs-rest curve undefined without both classes present.
    }
  }

  const std::function<std::optional<double>(std::span<const LabelPair>)> uar_stat =
      [](std::span<const LabelPair> s) -> std::optional<double> { return uar(confusion(s)).uar; };
  std::uint64_t stream = 0;
  for (const auto& key : opts.strata_keys) {
    std::map<std::string, std::vector<LabelPair>> groups;
    for (const auto& it : items) {
      groups[stratum_value(*it.clip, key, opts.age_bucket_months)].push_back({it.gold, it.pred->predicted});
    }
    auto& results = r.strata[key];
    for (const auto& [value, group] : groups) {
      StratumResult s;
      s.value = value;
      s.clips = group.size();
      s.confusion = confusion(group);
      s.uar = uar(s.confusion);
      const auto boot =
          bootstrap_ci<LabelPair>(uar_stat, group, opts.resamples, 0.95, derive_seed(opts.seed, stream++));
      s.sd = boot.sd;
      results.push_back(std::move(s));
    }
  }
  if (split) r.environment_table = env_table;

  if (opts.include_agreement && !m.annotations.empty()) {
    AgreementOptions ao = opts.agreement;
    ao.seed = derive_seed(opts.seed, 0xA9EE);
    r.agreement = compute_agreement(m, tier_clip_ids, preds, ao);
  }

  json echo;
  echo["dataset_id"] = opts.dataset_id;
  echo["finetune_set"] = opts.finetune_set;
  echo["tier"] = to_string(opts.tier);
  echo["seed"] = opts.seed;
  echo["resamples"] = opts.resamples;
  echo["strata_keys"] = opts.strata_keys;
  echo["age_bucket_months"] = opts.age_bucket_months;
  echo["split_applied"] = split != nullptr;
  echo["sd_unit"] = "percentage points";
  echo["weights"] = weights_json(opts.agreement.weights);
  echo["min_pairs"] = opts.agreement.min_pairs;
  echo["pooled_model_agreement"] = opts.agreement.pooled;
  echo["max_annotators_filters"] = opts.agreement.max_annotators;
  for (const auto& [k, v] : opts.extra_echo.items()) echo[k] = v;
  r.config_echo = std::move(echo);
  return r;
}

json to_json(const AgreementReport& a, const WeightMatrix& w) {
  json j;
  j["weights"] = weights_json(w);
  json fleiss = json::array();
  for (const auto& nk : a.fleiss) {
    json e;
    e["name"] = nk.name;
    e["max_annotators"] = nk.max_annotators ? json(*nk.max_annotators) : json(nullptr);
    e["result"] = nk.result ? kappa_json(*nk.result) : json(nullptr);
    e["note"] = nk.note;
    fleiss.push_back(std::move(e));
  }
  j["fleiss"] = std::move(fleiss);
  if (a.model) {
    json mj;
    mj["mode"] = a.model->pooled ? "pooled" : "per_annotator";
    mj["mean_kappa"] = a.model->mean_kappa;
    mj["sd"] = a.model->sd;
    mj["qualifying_annotators"] = a.model->qualifying;
    json per = json::array();
    for (const auto& ak : a.model->per_annotator) {
      per.push_back(json{{"annotator_id", ak.annotator_id},
                         {"n_pairs", ak.n_pairs},
                         {"kappa", ak.kappa ? json(*ak.kappa) : json(nullptr)},
                         {"status", ak.status}});
    }
    mj["per_annotator"] = std::move(per);
    j["model_vs_annotators"] = std::move(mj);
  } else {
    j["model_vs_annotators"] = nullptr;
  }
  j["model_note"] = a.model_note;
  return j;
}

json to_json(const EvaluationReport& r) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["dataset_id"] = r.dataset_id;
  j["finetune_set"] = r.finetune_set;
  j["tier"] = to_string(r.tier);
  j["clips"] = r.clips;

  json overall;
  overall["uar"] = r.overall.uar;
  json recall, auc, roc;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::string name(to_string(class_at(c)));
    recall[name] = r.overall.recall[c] ? json(*r.overall.recall[c]) : json(nullptr);
    auc[name] = r.roc[c] ? json(r.roc[c]->auc) : json(nullptr);
    json pts = json::array();
    if (r.roc[c]) {
      for (const auto& [fpr, tpr] : r.roc[c]->points) pts.push_back(json::array({fpr, tpr}));
    }
    roc[name] = std::move(pts);
  }
  overall["per_class_recall"] = std::move(recall);
  json zs = json::array();
  for (LabelClass c : r.overall.zero_support) zs.push_back(to_string(c));
  overall["zero_support_classes"] = std::move(zs);
  overall["confusion"] = json{{"classes", class_names()}, {"rows", "reference"}, {"counts", confusion_json(r.confusion)}};
  overall["auc"] = std::move(auc);
  overall["roc_points"] = std::move(roc);
  j["overall"] = std::move(overall);

  json strata = json::object();
  for (const auto& [key, results] : r.strata) {
    json arr = json::array();
    for (const auto& s : results) {
      json e;
      e["value"] = s.value;
      e["clips"] = s.clips;
      e["uar"] = s.uar.uar;
      e["sd_pp"] = s.sd ? json(*s.sd) : json(nullptr);
      json zsv = json::array();
      for (LabelClass c : s.uar.zero_support) zsv.push_back(to_string(c));
      e["zero_support_classes"] = std::move(zsv);
      e["confusion"] = confusion_json(s.confusion);
      arr.push_back(std::move(e));
    }
    strata[key] = std::move(arr);
  }
  j["strata"] = std::move(strata);

  if (r.environment_table) {
    json t;
    const char* folds[] = {"train", "dev", "test"};
    for (std::size_t f = 0; f < 3; ++f) {
      t[folds[f]] = json{{"urban", r.environment_table->counts[f][0]}, {"rural", r.environment_table->counts[f][1]}};
    }
    j["environment_table"] = std::move(t);
  } else {
    j["environment_table"] = nullptr;
  }
  const WeightMatrix* w = nullptr;
  WeightMatrix echoed;
  if (r.config_echo.contains("weights")) {
    const auto& costs = r.config_echo["weights"]["costs"];
    for (std::size_t a = 0; a < kNumClasses; ++a) {
      for (std::size_t b = 0; b < kNumClasses; ++b) echoed.d[a][b] = costs[a][b].get<double>();
    }
    w = &echoed;
  }
  j["agreement"] = r.agreement ? to_json(*r.agreement, w ? *w : WeightMatrix::hierarchical_default()) : json(nullptr);
  j["config_echo"] = r.config_echo;
  return j;
}

namespace {

std::string render_agreement_section(const AgreementReport& a) {
  std::string out = "| Agreement | kappa | 95% CI | SD | items |\n|---|---|---|---|---|\n";
  for (const auto& nk : a.fleiss) {
    out += "| Fleiss (weighted), " + nk.name + " | ";
    if (nk.result) {
      const auto& k = *nk.result;
      out += fixed(k.kappa, 3) + " | " +
             (k.ci_low ? fixed(*k.ci_low, 3) + " to " + fixed(*k.ci_high, 3) : std::string("-")) + " | " +
             (k.sd ? fixed(*k.sd, 3) : std::string("-")) + " | " + std::to_string(k.n_items) + " |\n";
    } else {
      out += "undefined | - | - | - |\n";
    }
  }
  if (a.model) {
    out += "| Model vs. annotators (weighted Cohen, " + std::string(a.model->pooled ? "pooled" : "mean over annotators") +
           ") | " + fixed(a.model->mean_kappa, 3) + " | - | " + fixed(a.model->sd, 3) + " | " +
           std::to_string(a.model->qualifying) + " annotators |\n";
  }
  std::string notes;
  for (const auto& nk : a.fleiss) {
    if (!nk.note.empty()) notes += "- " + nk.name + ": " + nk.note + "\n";
  }
  if (!a.model_note.empty()) notes += "- model vs. annotators: " + a.model_note + "\n";
  if (!notes.empty()) out += "\n" + notes;
  return out;
}

}  // namespace

std::string render_markdown(const AgreementReport& a) { return "# Agreement\n\n" + render_agreement_section(a); }

std::string render_markdown(const EvaluationReport& r) {
  std::string out = "# Evaluation: " + r.dataset_id + " (" + std::string(to_string(r.tier)) + " tier)\n\n";
  out += "Clips scored: " + std::to_string(r.clips) + "  \nUAR: " + fixed(r.overall.uar, 1) + "%\n\n";
  if (!r.overall.zero_support.empty()) {
    out += "Classes without reference support (excluded from UAR):";
    for (LabelClass c : r.overall.zero_support) out += " " + std::string(to_string(c));
    out += "\n\n";
  }

  out += "## Per-class results\n\n| Class | Support | Recall (%) | AUC |\n|---|---|---|---|\n";
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out += "| " + std::string(to_string(class_at(c))) + " | " + std::to_string(r.confusion.support(class_at(c))) +
           " | " + (r.overall.recall[c] ? fixed(100.0 * *r.overall.recall[c], 1) : std::string("-")) + " | " +
           (r.roc[c] ? fixed(r.roc[c]->auc, 3) : std::string("-")) + " |\n";
  }

  out += "\n## Confusion matrix (rows: reference, columns: predicted)\n\n|  |";
  for (LabelClass c : kAllClasses) out += " " + std::string(to_string(c)) + " |";
  out += "\n|---|---|---|---|---|---|\n";
  for (std::size_t row = 0; row < kNumClasses; ++row) {
    out += "| " + std::string(to_string(class_at(row))) + " |";
    for (std::size_t col = 0; col < kNumClasses; ++col) out += " " + std::to_string(r.confusion.counts[row][col]) + " |";
    out += "\n";
  }

  const ComparisonEntry entry{r.finetune_set.empty() ? "(unspecified)" : r.finetune_set, r.dataset_id, r.overall.uar};
  out += "\n## UAR (%) by fine-tuning set (rows) and test set (columns)\n\n";
  out += render_comparison(compare_matrix(std::span<const ComparisonEntry>(&entry, 1)));

  for (const auto& [key, results] : r.strata) {
    out += "\n## UAR by " + key + "\n\nSD is the bootstrap standard deviation in percentage points.\n\n";
    out += "| " + key + " | Clips | UAR (%) | SD (pp) |\n|---|---|---|---|\n";
    for (const auto& s : results) {
      out += "| " + s.value + " | " + std::to_string(s.clips) + " | " + fixed(s.uar.uar, 1) + " | " +
             (s.sd ? fixed(*s.sd, 2) : std::string("-")) + " |\n";
    }
  }

  if (r.environment_table) {
    const auto& t = r.environment_table->counts;
    out += "\n## Distribution and performance by language environment\n\n";
    out += "| Split / Metric | Urban | Rural | Total |\n|---|---|---|---|\n";
    const char* names[] = {"Train Clips", "Dev Clips", "Test Clips"};
    std::array<std::size_t, 2> totals{};
    for (std::size_t f = 0; f < 3; ++f) {
      out += std::string("| ") + names[f] + " | " + std::to_string(t[f][0]) + " | " + std::to_string(t[f][1]) + " | " +
             std::to_string(t[f][0] + t[f][1]) + " |\n";
      totals[0] += t[f][0];
      totals[1] += t[f][1];
    }
    out += "| Total Clips | " + std::to_string(totals[0]) + " | " + std::to_string(totals[1]) + " | " +
           std::to_string(totals[0] + totals[1]) + " |\n";
    std::array<std::string, 2> cell{"-", "-"};
    if (auto it = r.strata.find("environment"); it != r.strata.end()) {
      for (const auto& s : it->second) {
        const std::size_t e = s.value == "urban" ? 0 : 1;
        cell[e] = fixed(s.uar.uar, 1) + " (" + (s.sd ? fixed(*s.sd, 2) : std::string("-")) + ")";
      }
    }
    out += "| UAR (SD) | " + cell[0] + " | " + cell[1] + " | - |\n";
  }

  if (r.agreement) out += "\n## Agreement\n\n" + render_agreement_section(*r.agreement);
  return out;
}

ComparisonTable compare_matrix(std::span<const ComparisonEntry> entries) {
  if (entries.empty()) throw ValidationError("compare_matrix: no reports");
  ComparisonTable t;
  for (const auto& e : entries) {
    if (!t.cells.emplace(std::make_pair(e.finetune_set, e.test_set), e.uar).second) {
      throw ValidationError("compare_matrix: duplicate report for (" + e.finetune_set + ", " + e.test_set + ")");
    }
    if (std::find(t.rows.begin(), t.rows.end(), e.finetune_set) == t.rows.end()) t.rows.push_back(e.finetune_set);
    if (std::find(t.columns.begin(), t.columns.end(), e.test_set) == t.columns.end()) t.columns.push_back(e.test_set);
  }
  for (const auto& row : t.rows) {
    for (const auto& col : t.columns) {
      if (!t.cells.count({row, col})) t.missing.emplace_back(row, col);
    }
  }
  return t;
}

ComparisonEntry comparison_entry(const json& report) {
  try {
    ComparisonEntry e;
    e.finetune_set = report.at("finetune_set").get<std::string>();
    if (e.finetune_set.empty()) e.finetune_set = "(unspecified)";
    e.test_set = report.at("dataset_id").get<std::string>();
    e.uar = report.at("overall").at("uar").get<double>();
    return e;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("not an evaluation report: ") + ex.what());
  }
}

std::string render_comparison(const ComparisonTable& t) {
  std::string out = "| Fine-tuning \\ Test |";
  std::string rule = "|---|";
  for (const auto& c : t.columns) {
    out += " " + c + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& row : t.rows) {
    out += "| " + row + " |";
    for (const auto& col : t.columns) {
      auto it = t.cells.find({row, col});
      out += " " + (it == t.cells.end() ? std::string("—") : fixed(it->second, 1)) + " |";
    }
    out += "\n";
  }
  if (t.missing.empty()) {
    out += "\nAll " + std::to_string(t.rows.size() * t.columns.size()) + " cells populated.\n";
  } else {
    out += "\nMissing cells (" + std::to_string(t.missing.size()) + "):";
    for (const auto& [r, c] : t.missing) out += " (" + r + ", " + c + ")";
    out += "\n";
  }
  return out;
}

}  // namespace voclab
