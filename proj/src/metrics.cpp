#include "voclab/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "voclab/util.hpp"

namespace voclab {

std::int64_t ConfusionMatrix::total() const noexcept {
  std::int64_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::int64_t ConfusionMatrix::support(LabelClass reference) const noexcept {
  const auto& row = counts[index_of(reference)];
  return std::accumulate(row.begin(), row.end(), std::int64_t{0});
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) noexcept {
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    for (std::size_t c = 0; c < kNumClasses; ++c) counts[r][c] += other.counts[r][c];
  }
  return *this;
}

ConfusionMatrix confusion(std::span<const LabelPair> pairs) {
  ConfusionMatrix cm;
  for (const auto& p : pairs) ++cm.counts[index_of(p.reference)][index_of(p.predicted)];
  return cm;
}

UarResult uar(const ConfusionMatrix& cm) {
  UarResult out;
  double sum = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::int64_t support = cm.support(class_at(c));
    if (support == 0) {
      out.zero_support.push_back(class_at(c));
      continue;
    }
    const double recall = static_cast<double>(cm.counts[c][c]) / static_cast<double>(support);
    out.recall[c] = recall;
    sum += recall;
    ++supported;
  }
  if (supported == 0) throw ValidationError("uar: confusion matrix is empty");
  out.uar = 100.0 * sum / static_cast<double>(supported);
  return out;
}

WeightMatrix WeightMatrix::hierarchical_default() {
  WeightMatrix w;
  const auto speech_like = [](std::size_t c) {
    return class_at(c) == LabelClass::Canonical || class_at(c) == LabelClass::NonCanonical;
  };
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    for (std::size_t b = 0; b < kNumClasses; ++b) {
      if (a == b) {
        w.d[a][b] = 0.0;
      } else if (speech_like(a) && speech_like(b)) {
        w.d[a][b] = 1.0;
      } else if (speech_like(a) != speech_like(b)) {
        w.d[a][b] = 0.75;
      } else {
        w.d[a][b] = 0.5;
      }
    }
  }
  return w;
}

WeightMatrix WeightMatrix::uniform() {
  WeightMatrix w;
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    for (std::size_t b = 0; b < kNumClasses; ++b) w.d[a][b] = a == b ? 0.0 : 1.0;
  }
  return w;
}

WeightMatrix WeightMatrix::scaled(double factor) const {
  WeightMatrix w = *this;
  for (auto& row : w.d) {
    for (double& v : row) v *= factor;
  }
  return w;
}

void check_weights(const WeightMatrix& w) {
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    if (w.d[a][a] != 0.0) throw ValidationError("weight matrix diagonal must be 0");
    for (std::size_t b = 0; b < kNumClasses; ++b) {
      if (w.d[a][b] != w.d[b][a]) throw ValidationError("weight matrix must be symmetric");
      if (a != b && !(w.d[a][b] > 0.0 && w.d[a][b] <= 1.0)) {
        throw ValidationError("off-diagonal weights must lie in (0, 1]");
      }
    }
  }
}

WeightMatrix parse_weight_matrix(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "weight file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() != kNumClasses) throw ParseError(1, "weight header must name the 5 classes");
  std::array<std::size_t, kNumClasses> col_class{};
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const auto c = parse_label(header[i]);
    if (!c) throw ParseError(1, "unknown class \"" + header[i] + "\" in weight header");
    col_class[i] = index_of(*c);
  }
  WeightMatrix w;
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    if (!std::getline(in, line)) throw ParseError(r + 2, "weight file needs 5 rows");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto cells = split(line, ',');
    if (cells.size() != kNumClasses) throw ParseError(r + 2, "weight row needs 5 values");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      double v = 0.0;
      const auto& t = cells[c];
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc{} || p != t.data() + t.size()) throw ParseError(r + 2, "bad weight \"" + t + "\"");
      w.d[col_class[r]][col_class[c]] = v;
    }
  }
  check_weights(w);
  return w;
}

WeightMatrix read_weight_matrix(const std::filesystem::path& path) { return parse_weight_matrix(read_file(path)); }

std::string serialize_weight_matrix(const WeightMatrix& w) {
  std::string out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (c) out += ',';
    out += to_string(class_at(c));
  }
  out += '\n';
  for (const auto& row : w.d) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (c) out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

std::string_view to_string(KappaMethod m) noexcept {
  return m == KappaMethod::FleissWeighted ? "fleiss_weighted" : "cohen_weighted";
}

LabelCounts count_labels(std::span<const LabelClass> labels) noexcept {
  LabelCounts c{};
  for (LabelClass l : labels) ++c[index_of(l)];
  return c;
}

KappaResult weighted_fleiss_kappa(std::span<const LabelCounts> items, const WeightMatrix& w) {
  KappaResult r;
  r.method = KappaMethod::FleissWeighted;
  std::array<double, kNumClasses> pooled{};
  double pooled_total = 0.0;
  double observed_sum = 0.0;
  for (const auto& item : items) {
    const int n = std::accumulate(item.begin(), item.end(), 0);
    if (n < 2) {
      ++r.excluded_items;
      continue;
    }
    // Sum over unordered annotator pairs of d = (n' D n) / 2 with a zero diagonal.
    double pair_cost = 0.0;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      for (std::size_t k = 0; k < kNumClasses; ++k) pair_cost += item[j] * item[k] * w.d[j][k];
    }
    pair_cost /= 2.0;
    const double pairs = n * (n - 1) / 2.0;
    observed_sum += pair_cost / pairs;
    for (std::size_t j = 0; j < kNumClasses; ++j) pooled[j] += item[j];
    pooled_total += n;
    ++r.n_items;
  }
  if (r.n_items == 0) throw ValidationError("weighted_fleiss_kappa: no item has two or more annotations");
  r.observed_disagreement = observed_sum / static_cast<double>(r.n_items);
  double expected = 0.0;
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      expected += (pooled[j] / pooled_total) * (pooled[k] / pooled_total) * w.d[j][k];
    }
  }
  r.expected_disagreement = expected;
  if (expected == 0.0) {
    throw UndefinedStatistic("weighted Fleiss kappa undefined: expected disagreement is 0 (observed " +
                                 format_double(r.observed_disagreement) + ")",
                             r.observed_disagreement);
  }
  r.kappa = 1.0 - r.observed_disagreement / expected;
  return r;
}

KappaResult weighted_cohen_kappa(std::span<const CohenPair> pairs, const WeightMatrix& w) {
  if (pairs.empty()) throw ValidationError("weighted_cohen_kappa: no pairs");
  KappaResult r;
  r.method = KappaMethod::CohenWeighted;
  r.n_items = pairs.size();
  std::array<std::array<double, kNumClasses>, kNumClasses> freq{};
  std::array<double, kNumClasses> ma{}, mb{};
  for (const auto& p : pairs) {
    freq[index_of(p.a)][index_of(p.b)] += 1.0;
    ma[index_of(p.a)] += 1.0;
    mb[index_of(p.b)] += 1.0;
  }
  const auto n = static_cast<double>(pairs.size());
  double observed = 0.0, expected = 0.0;
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      observed += freq[j][k] / n * w.d[j][k];
      expected += (ma[j] / n) * (mb[k] / n) * w.d[j][k];
    }
  }
  r.observed_disagreement = observed;
  r.expected_disagreement = expected;
  if (expected == 0.0) {
    throw UndefinedStatistic("weighted Cohen kappa undefined: expected disagreement is 0 (observed " +
                                 format_double(observed) + ")",
                             observed);
  }
  r.kappa = 1.0 - observed / expected;
  return r;
}

std::vector<LabelCounts> filter_by_annotator_count(std::span<const LabelCounts> items, int max_annotators) {
  std::vector<LabelCounts> out;
  for (const auto& item : items) {
    if (std::accumulate(item.begin(), item.end(), 0) <= max_annotators) out.push_back(item);
  }
  return out;
}

double sample_sd(std::span<const double> values) noexcept {
  if (values.size() < 2) return 0.0;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

ModelAgreement model_vs_annotators(std::span<const PredictionRecord> preds, std::span<const Annotation> annotations,
                                   const WeightMatrix& w, int min_pairs, bool pooled) {
  std::unordered_map<std::string, LabelClass> predicted;
  for (const auto& p : preds) predicted.emplace(p.clip_id, p.predicted);

  std::map<std::string, std::vector<CohenPair>> by_annotator;
  std::vector<CohenPair> all;
  for (const auto& a : annotations) {
    auto it = predicted.find(a.clip_id);
    if (it == predicted.end()) continue;
    by_annotator[a.annotator_id].push_back({it->second, a.label});
    all.push_back({it->second, a.label});
  }

  ModelAgreement out;
  out.pooled = pooled;
  if (pooled) {
    if (all.empty()) throw ValidationError("model_vs_annotators: no annotated clips in the prediction set");
    out.mean_kappa = weighted_cohen_kappa(all, w).kappa;
    out.qualifying = by_annotator.size();
    return out;
  }
  std::vector<double> kappas;
  for (const auto& [annotator, pairs] : by_annotator) {
    AnnotatorKappa ak;
    ak.annotator_id = annotator;
    ak.n_pairs = pairs.size();
    if (static_cast<int>(pairs.size()) < min_pairs) {
      ak.status = "too_few_pairs";
    } else {
      try {
        ak.kappa = weighted_cohen_kappa(pairs, w).kappa;
        ak.status = "ok";
        kappas.push_back(*ak.kappa);
      } catch (const UndefinedStatistic&) {
        ak.status = "undefined";
      }
    }
    out.per_annotator.push_back(std::move(ak));
  }
  if (kappas.empty()) {
    throw ValidationError("model_vs_annotators: no annotator has at least " + std::to_string(min_pairs) +
                          " annotated clips in the prediction set");
  }
  out.qualifying = kappas.size();
  out.mean_kappa = std::accumulate(kappas.begin(), kappas.end(), 0.0) / static_cast<double>(kappas.size());
  out.sd = sample_sd(kappas);
  return out;
}

RocCurve roc_auc(std::span<const ScoredItem> scored, LabelClass positive_class) {
  std::size_t positives = 0;
  for (const auto& s : scored) positives += s.positive ? 1 : 0;
  const std::size_t negatives = scored.size() - positives;
  if (positives == 0 || negatives == 0) throw ValidationError("roc_auc: need at least one positive and one negative");

  std::vector<ScoredItem> sorted(scored.begin(), scored.end());
  std::sort(sorted.begin(), sorted.end(), [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; });

  RocCurve roc;
  roc.positive_class = positive_class;
  roc.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double threshold = sorted[i].score;
    const std::size_t tp_before = tp, fp_before = fp;
    for (; i < sorted.size() && sorted[i].score == threshold; ++i) (sorted[i].positive ? tp : fp) += 1;
    // Trapezoid between consecutive steps; ties get half credit.
    auc += static_cast<double>(fp - fp_before) * static_cast<double>(tp + tp_before) / 2.0;
    roc.points.emplace_back(static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives));
  }
  roc.auc = auc / (static_cast<double>(positives) * static_cast<double>(negatives));
  return roc;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ValidationError("quantile of empty set");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BootstrapResult summarize_bootstrap(std::vector<double> stats, double level, std::size_t resamples,
                                    std::size_t undefined) {
  std::sort(stats.begin(), stats.end());
  BootstrapResult r;
  r.resamples = resamples;
  r.undefined = undefined;
  const double alpha = (1.0 - level) / 2.0;
  r.low = quantile_sorted(stats, alpha);
  r.high = quantile_sorted(stats, 1.0 - alpha);
  r.sd = sample_sd(stats);
  return r;
}

}  // namespace voclab
