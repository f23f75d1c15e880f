#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "voclab/aggregation.hpp"
#include "voclab/classifier.hpp"
#include "voclab/corpus.hpp"
#include "voclab/dataset.hpp"
#include "voclab/metrics.hpp"

namespace voclab {

inline constexpr int kReportSchemaVersion = 1;

struct StratumResult {
  std::string value;
  std::size_t clips = 0;
  ConfusionMatrix confusion;
  UarResult uar;
  /// Bootstrap standard deviation of the stratum UAR, percentage points.
  std::optional<double> sd;
};

/// One named inter-annotator or model agreement figure. `result` is empty
/// when the statistic was undefined; `note` then says why.
struct NamedKappa {
  std::string name;
  std::optional<int> max_annotators;
  std::optional<KappaResult> result;
  std::string note;
};

struct AgreementReport {
  std::vector<NamedKappa> fleiss;
  std::optional<ModelAgreement> model;
  std::string model_note;
};

struct AgreementOptions {
  WeightMatrix weights = WeightMatrix::hierarchical_default();
  std::size_t resamples = 1000;
  std::uint64_t seed = 0;
  int min_pairs = 20;
  bool pooled = false;
  /// Annotator-count filters; each yields one Fleiss figure besides "all".
  std::vector<int> max_annotators{5, 3};
};

/// Weighted Fleiss kappa (with bootstrap CI over clips) on the annotations
/// of the given clips, and model-vs-annotator Cohen kappa when predictions
/// are supplied.
AgreementReport compute_agreement(const Manifest& m, std::span<const std::string> clip_ids,
                                  std::span<const PredictionRecord> preds, const AgreementOptions& opts);

struct EnvironmentTable {
  /// [fold][environment] clip counts; fold order train, dev, test.
  std::array<std::array<std::size_t, 2>, 3> counts{};
};

struct EvaluateOptions {
  std::string dataset_id = "dataset";
  std::string finetune_set;
  Tier tier = Tier::Cleaned;
  std::vector<std::string> strata_keys{"environment"};
  int age_bucket_months = 12;
  std::uint64_t seed = 0;
  std::size_t resamples = 1000;
  bool include_agreement = true;
  AgreementOptions agreement;
  /// Free-form provenance merged into config_echo (e.g. model path, split seed).
  nlohmann::ordered_json extra_echo = nlohmann::ordered_json::object();
};

struct EvaluationReport {
  std::string dataset_id;
  std::string finetune_set;
  Tier tier = Tier::Cleaned;
  std::size_t clips = 0;
  ConfusionMatrix confusion;
  UarResult overall;
  std::array<std::optional<RocCurve>, kNumClasses> roc;
  /// stratum key -> results ordered by stratum value.
  std::map<std::string, std::vector<StratumResult>> strata;
  std::optional<EnvironmentTable> environment_table;
  std::optional<AgreementReport> agreement;
  nlohmann::ordered_json config_echo;
};

inline const std::vector<std::string> kStratumKeys{"environment", "language", "corpus_id", "age_bucket"};

/// Scores the predictions against the tier's gold labels (clips of that
/// tier that have a prediction; with a split, only the test fold). Throws
/// ValidationError listing gold clips without predictions, or for an
/// unknown stratum key.
EvaluationReport evaluate(std::span<const PredictionRecord> preds, std::span<const AggregatedLabel> gold,
                          const Manifest& m, const SplitAssignment* split, const EvaluateOptions& opts);

nlohmann::ordered_json to_json(const EvaluationReport& r);
nlohmann::ordered_json to_json(const AgreementReport& r, const WeightMatrix& w);
std::string render_markdown(const EvaluationReport& r);
std::string render_markdown(const AgreementReport& r);

struct ComparisonEntry {
  std::string finetune_set;
  std::string test_set;
  double uar = 0.0;
};

struct ComparisonTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::map<std::pair<std::string, std::string>, double> cells;
  std::vector<std::pair<std::string, std::string>> missing;
};

/// Grid of UARs keyed by (finetune_set, test_set), rows and columns in
/// first-appearance order. Throws ValidationError on duplicate keys or
/// empty input.
ComparisonTable compare_matrix(std::span<const ComparisonEntry> entries);
ComparisonEntry comparison_entry(const nlohmann::ordered_json& report);
std::string render_comparison(const ComparisonTable& t);

}  // namespace voclab
