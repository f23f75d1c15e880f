#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "voclab/classifier.hpp"
#include "voclab/corpus.hpp"
#include "voclab/error.hpp"
#include "voclab/labels.hpp"
#include "voclab/rng.hpp"

namespace voclab {

/// Rows are reference classes, columns predicted classes.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  std::int64_t total() const noexcept;
  std::int64_t support(LabelClass reference) const noexcept;
  ConfusionMatrix& operator+=(const ConfusionMatrix& other) noexcept;
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct LabelPair {
  LabelClass reference;
  LabelClass predicted;
};

ConfusionMatrix confusion(std::span<const LabelPair> pairs);

struct UarResult {
  /// Percent.
  double uar = 0.0;
  /// Empty for classes without reference support.
  std::array<std::optional<double>, kNumClasses> recall{};
  std::vector<LabelClass> zero_support;
};

/// Mean recall over classes with support. Throws ValidationError for an
/// all-zero matrix.
UarResult uar(const ConfusionMatrix& cm);

/// Disagreement costs, symmetric with a zero diagonal.
struct WeightMatrix {
  std::array<std::array<double, kNumClasses>, kNumClasses> d{};

  double operator()(LabelClass a, LabelClass b) const noexcept { return d[index_of(a)][index_of(b)]; }

  /// Canonical/non-canonical 1.0; speech-like vs. cry/laugh/junk 0.75;
  /// within cry/laugh/junk 0.5.
  static WeightMatrix hierarchical_default();
  /// 1 off the diagonal.
  static WeightMatrix uniform();
  WeightMatrix scaled(double factor) const;
};

/// Throws ValidationError if not symmetric, diagonal non-zero, or an
/// off-diagonal entry outside (0, 1].
void check_weights(const WeightMatrix& w);

/// Override file: header line naming the class order, then five rows of
/// five comma-separated costs.
WeightMatrix read_weight_matrix(const std::filesystem::path& path);
WeightMatrix parse_weight_matrix(std::string_view text);
std::string serialize_weight_matrix(const WeightMatrix& w);

enum class KappaMethod : std::uint8_t { FleissWeighted, CohenWeighted };
std::string_view to_string(KappaMethod m) noexcept;

struct KappaResult {
  double kappa = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::optional<double> sd;
  std::size_t n_items = 0;
  KappaMethod method = KappaMethod::FleissWeighted;
  double observed_disagreement = 0.0;
  double expected_disagreement = 0.0;
  /// Items dropped for having fewer than two annotations.
  std::size_t excluded_items = 0;
};

/// Annotation counts per class for one item.
using LabelCounts = std::array<int, kNumClasses>;

LabelCounts count_labels(std::span<const LabelClass> labels) noexcept;

/// kappa = 1 - D_o / D_e with per-item mean pairwise disagreement and the
/// pooled label distribution. Throws UndefinedStatistic when D_e == 0.
KappaResult weighted_fleiss_kappa(std::span<const LabelCounts> items, const WeightMatrix& w);

struct CohenPair {
  LabelClass a;
  LabelClass b;
};

/// Throws ValidationError on empty input, UndefinedStatistic when the
/// expected disagreement is 0.
KappaResult weighted_cohen_kappa(std::span<const CohenPair> pairs, const WeightMatrix& w);

/// Items whose annotation count does not exceed max_annotators.
std::vector<LabelCounts> filter_by_annotator_count(std::span<const LabelCounts> items, int max_annotators);

struct AnnotatorKappa {
  std::string annotator_id;
  std::size_t n_pairs = 0;
  std::optional<double> kappa;
  /// "ok", "too_few_pairs" or "undefined".
  std::string status;
};

struct ModelAgreement {
  double mean_kappa = 0.0;
  double sd = 0.0;
  std::size_t qualifying = 0;
  std::vector<AnnotatorKappa> per_annotator;
  bool pooled = false;
};

/// Weighted Cohen's kappa between model predictions and each annotator
/// with at least min_pairs annotated clips in the prediction set; mean and
/// sample standard deviation across qualifying annotators. With pooled =
/// true all (prediction, annotation) pairs form a single kappa instead.
/// Throws ValidationError when no annotator qualifies.
ModelAgreement model_vs_annotators(std::span<const PredictionRecord> preds, std::span<const Annotation> annotations,
                                   const WeightMatrix& w, int min_pairs = 20, bool pooled = false);

struct RocCurve {
  LabelClass positive_class = LabelClass::Crying;
  /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
  std::vector<std::pair<double, double>> points;
  double auc = 0.0;
};

struct ScoredItem {
  double score;
  bool positive;
};

/// Threshold sweep over distinct scores, descending, with ties grouped;
/// trapezoidal AUC. Throws ValidationError without both classes present.
RocCurve roc_auc(std::span<const ScoredItem> scored, LabelClass positive_class = LabelClass::Crying);

struct BootstrapResult {
  double low = 0.0;
  double high = 0.0;
  double sd = 0.0;
  std::size_t resamples = 0;
  std::size_t undefined = 0;
};

/// Linear-interpolation quantile of sorted values, q in [0, 1].
double quantile_sorted(std::span<const double> sorted, double q);

/// Percentile interval and sd of resample statistics.
BootstrapResult summarize_bootstrap(std::vector<double> stats, double level, std::size_t resamples,
                                    std::size_t undefined);

/// Percentile bootstrap over items. Resample r draws from the substream
/// derive_seed(seed, r). A statistic returning nullopt marks the resample
/// undefined; more than half undefined throws ValidationError.
template <typename T>
BootstrapResult bootstrap_ci(const std::function<std::optional<double>(std::span<const T>)>& statistic,
                             std::span<const T> items, std::size_t resamples = 1000, double level = 0.95,
                             std::uint64_t seed = 0) {
  if (items.empty()) throw ValidationError("bootstrap_ci: no items");
  if (resamples == 0) throw ValidationError("bootstrap_ci: resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("bootstrap_ci: level must be in (0, 1)");
  std::vector<double> stats;
  stats.reserve(resamples);
  std::vector<T> sample(items.size());
  std::size_t undefined = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    Rng rng(derive_seed(seed, r));
    for (auto& s : sample) s = items[static_cast<std::size_t>(rng.uniform_below(items.size()))];
    const std::optional<double> v = statistic(std::span<const T>(sample));
    if (v && std::isfinite(*v)) {
      stats.push_back(*v);
    } else {
      ++undefined;
    }
  }
  if (undefined * 2 > resamples) {
    throw ValidationError("bootstrap_ci: " + std::to_string(undefined) + " of " + std::to_string(resamples) +
                          " resamples undefined");
  }
  return summarize_bootstrap(std::move(stats), level, resamples, undefined);
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_sd(std::span<const double> values) noexcept;

}  // namespace voclab
