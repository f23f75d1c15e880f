#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "support.hpp"
#include "voclab/error.hpp"
#include "voclab/metrics.hpp"
#include "voclab/rng.hpp"

using namespace voclab;

namespace {

constexpr auto Cry = LabelClass::Crying;
constexpr auto Laugh = LabelClass::Laughing;
constexpr auto Canon = LabelClass::Canonical;
constexpr auto Junk = LabelClass::Junk;

oracle::Weights to_oracle(const WeightMatrix& w) {
  oracle::Weights o{};
  for (std::size_t j = 0; j < 5; ++j) {
    for (std::size_t k = 0; k < 5; ++k) o[j][k] = w.d[j][k];
  }
  return o;
}

LabelClass random_label(Rng& rng) { return class_at(static_cast<std::size_t>(rng.uniform_below(5))); }

std::vector<std::vector<int>> random_items(Rng& rng, std::size_t n, int min_k, int max_k, bool skewed) {
  std::vector<std::vector<int>> items(n);
  for (auto& item : items) {
    const int k = min_k + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(max_k - min_k + 1)));
    const int base = static_cast<int>(rng.uniform_below(5));
    for (int a = 0; a < k; ++a) {
      item.push_back(skewed && rng.uniform01() < 0.6 ? base : static_cast<int>(rng.uniform_below(5)));
    }
  }
  return items;
}

std::vector<LabelCounts> to_counts(const std::vector<std::vector<int>>& items) {
  std::vector<LabelCounts> out;
  for (const auto& item : items) {
    LabelCounts c{};
    for (int l : item) ++c[static_cast<std::size_t>(l)];
    out.push_back(c);
  }
  return out;
}

ConfusionMatrix matrix(std::array<std::array<std::int64_t, 5>, 5> rows) {
  ConfusionMatrix cm;
  cm.counts = rows;
  return cm;
}

}  // namespace

TEST_CASE("confusion counts") {
  std::vector<LabelPair> same(10, LabelPair{Canon, Canon});
  const auto a = confusion(same);
  CHECK(a.counts[2][2] == 10);
  CHECK(a.total() == 10);

  const std::vector<LabelPair> three{{Cry, Cry}, {Cry, Laugh}, {Laugh, Laugh}};
  const auto b = confusion(three);
  CHECK(b.counts[0][0] == 1);
  CHECK(b.counts[0][1] == 1);
  CHECK(b.counts[1][1] == 1);
  CHECK(b.total() == 3);

  Rng rng(3);
  std::vector<LabelPair> pairs;
  std::array<std::int64_t, 5> hist{};
  for (int i = 0; i < 1000; ++i) {
    pairs.push_back({random_label(rng), random_label(rng)});
    ++hist[index_of(pairs.back().reference)];
  }
  const auto c = confusion(pairs);
  CHECK(c.total() == 1000);
  for (std::size_t r = 0; r < 5; ++r) {
    CHECK(c.support(class_at(r)) == hist[r]);
    CHECK(std::accumulate(c.counts[r].begin(), c.counts[r].end(), std::int64_t{0}) == hist[r]);
  }
}

TEST_CASE("unweighted average recall") {
  CHECK(uar(matrix({{{10, 0, 0, 0, 0}, {0, 10, 0, 0, 0}, {0, 0, 10, 0, 0}, {0, 0, 0, 10, 0}, {0, 0, 0, 0, 10}}})).uar ==
        100.0);

  // recalls 1, 1/2, 1/2, 0, 1/2
  const auto r = uar(matrix({{{4, 0, 0, 0, 0}, {1, 1, 0, 0, 0}, {0, 3, 3, 0, 0}, {0, 0, 2, 0, 0}, {5, 0, 0, 0, 5}}}));
  CHECK(r.uar == doctest::Approx((1.0 + 0.5 + 0.5 + 0.0 + 0.5) / 5 * 100).epsilon(1e-12));
  CHECK(*r.recall[3] == 0.0);

  const auto z = uar(matrix({{{7, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, {0, 0, 3, 0, 0}, {0, 0, 0, 2, 0}, {0, 0, 0, 0, 9}}}));
  CHECK(z.uar == 100.0);
  REQUIRE(z.zero_support.size() == 1);
  CHECK(z.zero_support[0] == Laugh);
  CHECK_FALSE(z.recall[1].has_value());

  CHECK_THROWS_AS(uar(ConfusionMatrix{}), ValidationError);
}

TEST_CASE("uar is invariant under a joint relabeling") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    ConfusionMatrix cm;
    for (auto& row : cm.counts) {
      for (auto& v : row) v = static_cast<std::int64_t>(rng.uniform_below(20));
    }
    std::array<std::size_t, 5> perm{0, 1, 2, 3, 4};
    rng.shuffle(std::span<std::size_t>(perm));
    ConfusionMatrix moved;
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 5; ++c) moved.counts[perm[r]][perm[c]] = cm.counts[r][c];
    }
    CHECK(uar(moved).uar == doctest::Approx(uar(cm).uar).epsilon(1e-12));
  }
}

TEST_CASE("roc and auc") {
  const std::vector<ScoredItem> hand{{0.9, true}, {0.8, false}, {0.4, true}, {0.3, false}};
  const auto r = roc_auc(hand);
  CHECK(r.auc == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(r.points.front() == std::pair{0.0, 0.0});
  CHECK(r.points.back() == std::pair{1.0, 1.0});

  const std::vector<ScoredItem> sep{{0.9, true}, {0.7, true}, {0.2, false}, {0.1, false}};
  CHECK(roc_auc(sep).auc == 1.0);

  Rng rng(8);
  std::vector<ScoredItem> noise;
  for (int i = 0; i < 10000; ++i) noise.push_back({rng.uniform01(), rng.uniform01() < 0.5});
  CHECK(std::abs(roc_auc(noise).auc - 0.5) <= 0.02);

  CHECK_THROWS_AS(roc_auc(std::vector<ScoredItem>{{0.5, true}, {0.2, true}}), ValidationError);
}

TEST_CASE("auc equals the exhaustive pair count on small inputs") {
  Rng rng(13);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.uniform_below(199);
    std::vector<ScoredItem> items;
    std::vector<std::pair<double, bool>> plain;
    for (std::size_t i = 0; i < n; ++i) {
      // coarse scores force plenty of ties
      const double s = static_cast<double>(rng.uniform_below(t % 2 ? 7 : 1000)) / 10.0;
      const bool pos = i == 0 ? true : i == 1 ? false : rng.uniform01() < 0.4;
      items.push_back({s, pos});
      plain.emplace_back(s, pos);
    }
    const auto r = roc_auc(items);
    CHECK(r.auc == doctest::Approx(oracle::auc_by_pairs(plain)).epsilon(1e-12));
    for (std::size_t i = 1; i < r.points.size(); ++i) {
      CHECK(r.points[i].first >= r.points[i - 1].first);
      CHECK(r.points[i].second >= r.points[i - 1].second);
    }
  }
}

TEST_CASE("weighted fleiss kappa against pair enumeration") {
  Rng rng(21);
  for (const auto& w : {WeightMatrix::hierarchical_default(), WeightMatrix::uniform()}) {
    for (int t = 0; t < 100; ++t) {
      const auto items = random_items(rng, 30, 1, 6, true);
      bool any = false;
      for (const auto& i : items) any = any || i.size() >= 2;
      if (!any) continue;
      const auto k = weighted_fleiss_kappa(to_counts(items), w);
      CHECK(std::abs(k.kappa - oracle::fleiss_by_pairs(items, to_oracle(w))) <= 1e-12);
    }
  }
}

TEST_CASE("uniform weights reduce to the classic statistic") {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const auto items = random_items(rng, 40, 2, 5, true);
    const auto k = weighted_fleiss_kappa(to_counts(items), WeightMatrix::uniform());
    CHECK(std::abs(k.kappa - oracle::fleiss_classic(items)) <= 1e-12);
  }
}

TEST_CASE("fleiss kappa edge cases") {
  SUBCASE("unanimous items") {
    std::vector<LabelCounts> items{{3, 0, 0, 0, 0}, {0, 0, 4, 0, 0}, {0, 2, 0, 0, 0}};
    CHECK(weighted_fleiss_kappa(items, WeightMatrix::hierarchical_default()).kappa == 1.0);
  }
  SUBCASE("chance agreement") {
    Rng rng(30);
    const auto items = random_items(rng, 10000, 3, 3, false);
    CHECK(std::abs(weighted_fleiss_kappa(to_counts(items), WeightMatrix::uniform()).kappa) <= 0.05);
  }
  SUBCASE("single class is undefined") {
    std::vector<LabelCounts> items{{3, 0, 0, 0, 0}, {2, 0, 0, 0, 0}};
    CHECK_THROWS_AS(weighted_fleiss_kappa(items, WeightMatrix::uniform()), UndefinedStatistic);
  }
  SUBCASE("single-annotation items are excluded and counted") {
    std::vector<LabelCounts> items{{1, 1, 0, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 2, 1, 0}};
    const auto k = weighted_fleiss_kappa(items, WeightMatrix::uniform());
    CHECK(k.excluded_items == 1);
    CHECK(k.n_items == 2);
    CHECK(k.kappa == doctest::Approx(oracle::fleiss_by_pairs({{0, 1}, {2, 2, 3}}, to_oracle(WeightMatrix::uniform())))
                         .epsilon(1e-12));
  }
}

TEST_CASE("weighted cohen kappa") {
  const auto u = WeightMatrix::uniform();
  std::vector<CohenPair> same{{Cry, Cry}, {Junk, Junk}, {Canon, Canon}};
  CHECK(weighted_cohen_kappa(same, u).kappa == 1.0);

  const std::vector<CohenPair> hand{{Cry, Cry}, {Cry, Laugh}, {Laugh, Laugh}, {Junk, Junk}};
  // observed 1/4; marginals a = (1/2, 1/4, 0, 0, 1/4), b = (1/4, 1/2, 0, 0, 1/4)
  const double expected = 1.0 - (0.5 * 0.25 + 0.25 * 0.5 + 0.25 * 0.25);
  const double closed = 1.0 - 0.25 / expected;
  const auto k = weighted_cohen_kappa(hand, u);
  CHECK(k.kappa == doctest::Approx(closed).epsilon(1e-12));
  CHECK(k.kappa == doctest::Approx(oracle::cohen_by_table({{0, 0}, {0, 1}, {1, 1}, {4, 4}}, to_oracle(u))).epsilon(1e-12));

  Rng rng(40);
  std::vector<CohenPair> noise;
  std::vector<std::pair<int, int>> plain;
  for (int i = 0; i < 10000; ++i) {
    noise.push_back({random_label(rng), random_label(rng)});
    plain.emplace_back(static_cast<int>(index_of(noise.back().a)), static_cast<int>(index_of(noise.back().b)));
  }
  const auto kn = weighted_cohen_kappa(noise, WeightMatrix::hierarchical_default());
  CHECK(std::abs(kn.kappa) <= 0.05);
  CHECK(kn.kappa == doctest::Approx(oracle::cohen_by_table(plain, to_oracle(WeightMatrix::hierarchical_default())))
                        .epsilon(1e-12));

  CHECK_THROWS_AS(weighted_cohen_kappa(std::vector<CohenPair>{}, u), ValidationError);
  CHECK_THROWS_AS(weighted_cohen_kappa(std::vector<CohenPair>{{Cry, Cry}, {Cry, Cry}}, u), UndefinedStatistic);
}

TEST_CASE("scaling the costs leaves both kappas unchanged") {
  Rng rng(50);
  const auto w = WeightMatrix::hierarchical_default();
  for (double lambda : {0.3, 0.77, 1.0}) {
    const auto items = to_counts(random_items(rng, 60, 2, 5, true));
    CHECK(std::abs(weighted_fleiss_kappa(items, w).kappa - weighted_fleiss_kappa(items, w.scaled(lambda)).kappa) <=
          1e-12);
    std::vector<CohenPair> pairs;
    for (int i = 0; i < 200; ++i) pairs.push_back({random_label(rng), random_label(rng)});
    CHECK(std::abs(weighted_cohen_kappa(pairs, w).kappa - weighted_cohen_kappa(pairs, w.scaled(lambda)).kappa) <=
          1e-12);
  }
}

TEST_CASE("weight matrices") {
  const auto h = WeightMatrix::hierarchical_default();
  CHECK(h(Canon, LabelClass::NonCanonical) == 1.0);
  CHECK(h(Cry, Canon) == 0.75);
  CHECK(h(Junk, LabelClass::NonCanonical) == 0.75);
  CHECK(h(Cry, Laugh) == 0.5);
  CHECK(h(Junk, Junk) == 0.0);
  CHECK_NOTHROW(check_weights(h));

  auto bad = h;
  bad.d[0][1] = 0.4;
  CHECK_THROWS_AS(check_weights(bad), ValidationError);
  bad = h;
  bad.d[2][2] = 0.1;
  CHECK_THROWS_AS(check_weights(bad), ValidationError);

  const auto text = serialize_weight_matrix(h);
  CHECK(parse_weight_matrix(text).d == h.d);
  CHECK_THROWS_AS(parse_weight_matrix("crying,laughing\n0,1\n"), ParseError);
}

TEST_CASE("model against annotators") {
  const auto w = WeightMatrix::hierarchical_default();
  Rng rng(60);
  std::vector<PredictionRecord> preds;
  std::vector<Annotation> exact, mixed;
  std::vector<std::pair<int, int>> random_pairs;
  for (int i = 0; i < 4000; ++i) {
    PredictionRecord p;
    p.clip_id = "c" + std::to_string(i);
    p.predicted = random_label(rng);
    preds.push_back(p);
    exact.push_back(testing::ann(p.clip_id, "a1", p.predicted));
    exact.push_back(testing::ann(p.clip_id, "a2", p.predicted));
    mixed.push_back(testing::ann(p.clip_id, "match", p.predicted));
    const auto r = random_label(rng);
    mixed.push_back(testing::ann(p.clip_id, "noise", r));
    random_pairs.emplace_back(static_cast<int>(index_of(p.predicted)), static_cast<int>(index_of(r)));
  }

  const auto e = model_vs_annotators(preds, exact, w);
  CHECK(e.mean_kappa == 1.0);
  CHECK(e.sd == 0.0);
  CHECK(e.qualifying == 2);

  const auto m = model_vs_annotators(preds, mixed, w);
  const double k_noise = oracle::cohen_by_table(random_pairs, to_oracle(w));
  const double mean = (1.0 + k_noise) / 2.0;
  const double sd = std::sqrt(((1.0 - mean) * (1.0 - mean) + (k_noise - mean) * (k_noise - mean)) / 1.0);
  CHECK(m.mean_kappa == doctest::Approx(mean).epsilon(1e-12));
  CHECK(m.sd == doctest::Approx(sd).epsilon(1e-9));
  CHECK(std::abs(m.mean_kappa - 0.5) < 0.03);
  CHECK(std::abs(m.sd - std::sqrt(0.5)) < 0.05);

  auto few = exact;
  for (int i = 0; i < 5; ++i) few.push_back(testing::ann(preds[static_cast<std::size_t>(i)].clip_id, "rare", Junk));
  const auto f = model_vs_annotators(preds, few, w, 20);
  CHECK(f.qualifying == 2);
  const auto rare = std::find_if(f.per_annotator.begin(), f.per_annotator.end(),
                                 [](const AnnotatorKappa& k) { return k.annotator_id == "rare"; });
  REQUIRE(rare != f.per_annotator.end());
  CHECK(rare->status == "too_few_pairs");
  CHECK(rare->n_pairs == 5);
  CHECK_FALSE(rare->kappa.has_value());

  std::vector<Annotation> lonely{testing::ann("c0", "x", Cry)};
  CHECK_THROWS_AS(model_vs_annotators(preds, lonely, w, 20), ValidationError);

  const auto pooled = model_vs_annotators(preds, mixed, w, 20, true);
  CHECK(pooled.pooled);
  CHECK(pooled.mean_kappa > k_noise);
  CHECK(pooled.mean_kappa < 1.0);
}

TEST_CASE("bootstrap intervals") {
  std::vector<double> xs(200, 3.5);
  const std::function<std::optional<double>(std::span<const double>)> first = [](std::span<const double> s) {
    return std::optional<double>(s[0]);
  };
  const auto c = bootstrap_ci(first, std::span<const double>(xs), 300, 0.95, 1);
  CHECK(c.low == 3.5);
  CHECK(c.high == 3.5);
  CHECK(c.sd == 0.0);

  Rng rng(70);
  std::vector<double> normal(1000);
  for (auto& v : normal) v = rng.normal();
  const std::function<std::optional<double>(std::span<const double>)> mean = [](std::span<const double> s) {
    return std::optional<double>(std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size()));
  };
  const auto b = bootstrap_ci(mean, std::span<const double>(normal), 1000, 0.95, 9);
  const double theory = 2 * 1.96 / std::sqrt(1000.0);
  CHECK(std::abs((b.high - b.low) - theory) <= 0.2 * theory);
  CHECK(b.low <= b.high);
  const auto again = bootstrap_ci(mean, std::span<const double>(normal), 1000, 0.95, 9);
  CHECK(again.low == b.low);
  CHECK(again.high == b.high);
  CHECK(again.sd == b.sd);

  const std::function<std::optional<double>(std::span<const double>)> never = [](std::span<const double>) {
    return std::optional<double>();
  };
  CHECK_THROWS_AS(bootstrap_ci(never, std::span<const double>(xs), 10), ValidationError);
}

TEST_CASE("sample standard deviation and quantiles") {
  CHECK(sample_sd(std::vector<double>{2.0}) == 0.0);
  CHECK(sample_sd(std::vector<double>{1.0, 3.0}) == doctest::Approx(std::sqrt(2.0)));
  const std::vector<double> s{0.0, 10.0, 20.0, 30.0, 40.0};
  CHECK(quantile_sorted(s, 0.0) == 0.0);
  CHECK(quantile_sorted(s, 1.0) == 40.0);
  CHECK(quantile_sorted(s, 0.375) == doctest::Approx(15.0));
}

TEST_CASE("filtering items by annotator count") {
  const std::vector<LabelCounts> items{{3, 0, 0, 0, 0}, {2, 2, 0, 0, 0}, {1, 1, 1, 1, 2}};
  const auto kept = filter_by_annotator_count(items, 5);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == items[0]);
  CHECK(kept[1] == items[1]);
  CHECK(filter_by_annotator_count(items, 0).empty());

  Rng rng(80);
  const auto many = to_counts(random_items(rng, 500, 1, 9, false));
  const int max = 4;
  const auto sum = [](const LabelCounts& c) { return std::accumulate(c.begin(), c.end(), 0); };
  const auto f = filter_by_annotator_count(many, max);
  for (const auto& c : f) CHECK(sum(c) <= max);
  const auto dropped = std::count_if(many.begin(), many.end(), [&](const LabelCounts& c) { return sum(c) > max; });
  CHECK(static_cast<std::size_t>(dropped) + f.size() == many.size());
}
