#include "synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "voclab/audio.hpp"
#include "voclab/corpus.hpp"
#include "voclab/labels.hpp"
#include "voclab/rng.hpp"
#include "voclab/util.hpp"

namespace voclab::synth {

namespace {

using json = nlohmann::ordered_json;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Cumulative class priors: crying, laughing, canonical, non_canonical, junk.
constexpr std::array<double, kNumClasses> kPriorCdf{0.15, 0.20, 0.40, 0.80, 1.00};
constexpr std::array<int, 4> kRates{16000, 22050, 44100, 48000};
const std::array<std::string, 3> kLanguages{"en", "es", "tsz"};
const std::array<std::string, 2> kCorpora{"corpus_a", "corpus_b"};

LabelClass draw_class(Rng& rng) {
  const double u = rng.uniform01();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (u < kPriorCdf[c]) return class_at(c);
  }
  return LabelClass::Junk;
}

std::vector<float> render(LabelClass cls, int rate, std::size_t n, Rng& rng) {
  std::vector<float> x(n);
  const double jitter = rng.uniform(0.9, 1.1);
  const double phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    switch (cls) {
      case LabelClass::Crying: {
        const double f0 = 450.0 * jitter * (1.0 + 0.03 * std::sin(kTwoPi * 6.0 * t));
        v = 0.45 * std::sin(kTwoPi * f0 * t + phase) + 0.2 * std::sin(kTwoPi * 2 * f0 * t) +
            0.1 * std::sin(kTwoPi * 3 * f0 * t);
        break;
      }
      case LabelClass::Laughing: {
        const double gate = std::sin(kTwoPi * 5.0 * jitter * t) > 0.0 ? 1.0 : 0.1;
        v = gate * (0.3 * std::sin(kTwoPi * 320.0 * jitter * t + phase) + 0.15 * rng.normal());
        break;
      }
      case LabelClass::Canonical: {
        const double env = 0.5 * (1.0 - std::cos(kTwoPi * 3.0 * jitter * t));
        v = env * (0.35 * std::sin(kTwoPi * 280.0 * jitter * t + phase) + 0.2 * std::sin(kTwoPi * 1200.0 * t));
        break;
      }
      case LabelClass::NonCanonical:
        v = 0.4 * std::sin(kTwoPi * 300.0 * jitter * t + phase) + 0.1 * std::sin(kTwoPi * 700.0 * jitter * t);
        break;
      case LabelClass::Junk:
        v = 0.25 * rng.normal() + 0.1 * std::sin(kTwoPi * 60.0 * t);
        break;
    }
    x[i] = static_cast<float>(std::clamp(v + 0.02 * rng.normal(), -1.0, 1.0));
  }
  return x;
}

RawAudio make_audio(LabelClass cls, Rng& rng) {
  RawAudio a;
  a.sample_rate_hz = kRates[rng.uniform_below(kRates.size())];
  const double seconds = rng.uniform(0.30, 0.55);
  const auto n = static_cast<std::size_t>(seconds * a.sample_rate_hz);
  a.channels.push_back(render(cls, a.sample_rate_hz, n, rng));
  if (rng.uniform01() < 0.2) a.channels.push_back(a.channels.front());
  return a;
}

std::string padded(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(width > static_cast<int>(s.size()) ? width - s.size() : 0, '0') + s;
}

}  // namespace

SynthCorpus generate(const std::filesystem::path& dir, const SynthConfig& cfg) {
  std::filesystem::create_directories(dir / "audio");
  Rng rng(cfg.seed);

  struct Child {
    std::string id, language, corpus;
    Environment env;
    int age;
  };
  std::vector<Child> children;
  for (int c = 0; c < cfg.children; ++c) {
    Child ch;
    ch.id = "child_" + padded(static_cast<std::size_t>(c), 3);
    ch.language = kLanguages[rng.uniform_below(kLanguages.size())];
    ch.corpus = kCorpora[rng.uniform_below(kCorpora.size())];
    ch.env = rng.uniform01() < 0.5 ? Environment::Urban : Environment::Rural;
    ch.age = 3 + static_cast<int>(rng.uniform_below(18));
    children.push_back(ch);
  }

  const std::size_t total = static_cast<std::size_t>(cfg.children) * static_cast<std::size_t>(cfg.clips_per_child);
  std::vector<LabelClass> truth(total);
  for (auto& t : truth) t = draw_class(rng);

  std::vector<std::uint32_t> durations(total);
  parallel_for(total, [&](std::size_t i) {
    Rng local(derive_seed(cfg.seed, 1000 + i));
    const RawAudio a = make_audio(truth[i], local);
    durations[i] = static_cast<std::uint32_t>(1000.0 * static_cast<double>(a.frames()) / a.sample_rate_hz);
    write_wav(dir / "audio" / ("clip_" + padded(i, 5) + ".wav"), a);
  });

  std::ostringstream manifest;
  std::size_t n_ann = 0;
  const auto base = Timestamp{std::chrono::seconds{1'700'000'000}};
  for (std::size_t i = 0; i < total; ++i) {
    const Child& ch = children[i / static_cast<std::size_t>(cfg.clips_per_child)];
    const std::string id = "clip_" + padded(i, 5);
    json clip{{"kind", "clip"},
              {"clip_id", id},
              {"child_id", ch.id},
              {"corpus_id", ch.corpus},
              {"language", ch.language},
              {"environment", to_string(ch.env)},
              {"age_months", ch.age},
              {"audio_uri", "audio/" + id + ".wav"},
              {"duration_ms", std::max<std::uint32_t>(1, durations[i])}};
    manifest << clip.dump() << "\n";

    std::vector<int> pool(static_cast<std::size_t>(cfg.annotator_pool));
    for (int a = 0; a < cfg.annotator_pool; ++a) pool[static_cast<std::size_t>(a)] = a;
    const int k = cfg.min_annotations +
                  static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(cfg.max_annotations - cfg.min_annotations + 1)));
    for (int j = 0; j < k; ++j) {
      const auto pick = static_cast<std::size_t>(j) + rng.uniform_below(pool.size() - static_cast<std::size_t>(j));
      std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
      LabelClass label = truth[i];
      if (rng.uniform01() >= cfg.annotator_accuracy) {
        label = class_at((index_of(truth[i]) + 1 + rng.uniform_below(kNumClasses - 1)) % kNumClasses);
      }
      json ann{{"kind", "annotation"},
               {"clip_id", id},
               {"annotator_id", "ann_" + padded(static_cast<std::size_t>(pool[static_cast<std::size_t>(j)]), 2)},
               {"label", to_string(label)},
               {"submitted_at", format_timestamp(base + std::chrono::seconds{static_cast<long>(n_ann)})}};
      manifest << ann.dump() << "\n";
      ++n_ann;
    }
  }

  std::ostringstream gold;
  for (int g = 0; g < cfg.gold_clips; ++g) {
    const std::string id = "gold_" + padded(static_cast<std::size_t>(g), 3);
    const LabelClass cls = class_at(static_cast<std::size_t>(g) % kNumClasses);
    Rng local(derive_seed(cfg.seed, 900'000 + static_cast<std::uint64_t>(g)));
    write_wav(dir / "audio" / (id + ".wav"), make_audio(cls, local));
    json clip{{"kind", "clip"},         {"clip_id", id},         {"child_id", "gold"},
              {"corpus_id", "gold"},    {"language", "en"},      {"environment", "urban"},
              {"age_months", 12},       {"audio_uri", "audio/" + id + ".wav"},
              {"duration_ms", 400},     {"gold_label", to_string(cls)}};
    gold << clip.dump() << "\n";
  }

  SynthCorpus out;
  out.manifest = dir / "manifest.jsonl";
  out.gold_manifest = dir / "gold.jsonl";
  write_file_atomic(out.manifest, manifest.str());
  write_file_atomic(out.gold_manifest, gold.str());
  out.clips = total;
  out.annotations = n_ann;
  return out;
}

}  // namespace voclab::synth
