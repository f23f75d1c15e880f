#include "voclab/features.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>

#include <fftw3.h>

#include "voclab/error.hpp"
#include "voclab/util.hpp"

namespace voclab {

std::string_view to_string(FeatureKind k) noexcept {
  return k == FeatureKind::LogMelStats ? "logmel_stats" : "imported_embedding";
}

void check_feature_config(const FeatureConfig& cfg, int sample_rate_hz) {
  if (cfg.n_mels < 1) throw ValidationError("n_mels must be >= 1");
  if (cfg.fmax_hz > sample_rate_hz / 2.0) throw ValidationError("fmax_hz exceeds the Nyquist frequency");
  if (cfg.fmin_hz < 0.0 || cfg.fmin_hz >= cfg.fmax_hz) throw ValidationError("need 0 <= fmin_hz < fmax_hz");
  if (cfg.window_ms <= 0.0 || cfg.hop_ms <= 0.0) throw ValidationError("window and hop must be positive");
  if (!(cfg.log_floor > 0.0)) throw ValidationError("log_floor must be positive");
}

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

struct LogMelExtractor::Impl {
  FeatureConfig cfg;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t fft_len = 0;
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> window;
  std::vector<double> filters;  // n_mels x bins
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (plan) fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

LogMelExtractor::LogMelExtractor(const FeatureConfig& cfg) : impl_(std::make_unique<Impl>()) {
  if (cfg.kind != FeatureKind::LogMelStats) throw ValidationError("LogMelExtractor requires kind logmel_stats");
  check_feature_config(cfg);
  Impl& im = *impl_;
  im.cfg = cfg;
  im.frame_len = static_cast<std::size_t>(std::lround(cfg.window_ms * kTargetSampleRate / 1000.0));
  im.hop = static_cast<std::size_t>(std::lround(cfg.hop_ms * kTargetSampleRate / 1000.0));
  if (im.frame_len > kClipLength || im.hop == 0) throw ValidationError("window does not fit the clip");
  im.fft_len = std::bit_ceil(im.frame_len);
  im.bins = im.fft_len / 2 + 1;
  im.frames = 1 + (kClipLength - im.frame_len) / im.hop;

  im.window.resize(im.frame_len);
  for (std::size_t n = 0; n < im.frame_len; ++n) {
    im.window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / im.frame_len);
  }

  const auto n_mels = static_cast<std::size_t>(cfg.n_mels);
  std::vector<double> edges(n_mels + 2);
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  im.filters.assign(n_mels * im.bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < im.bins; ++k) {
      const double f = static_cast<double>(k) * kTargetSampleRate / static_cast<double>(im.fft_len);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      im.filters[m * im.bins + k] = w;
    }
  }

  std::lock_guard lock(planner_mutex());
  im.in = fftw_alloc_real(im.fft_len);
  im.out = fftw_alloc_complex(im.bins);
  im.plan = fftw_plan_dft_r2c_1d(static_cast<int>(im.fft_len), im.in, im.out, FFTW_ESTIMATE);
  if (!im.plan) throw Error("FFT plan creation failed");
}

LogMelExtractor::~LogMelExtractor() = default;

std::size_t LogMelExtractor::frame_count() const noexcept { return impl_->frames; }
std::size_t LogMelExtractor::dimension() const noexcept { return 2 * static_cast<std::size_t>(impl_->cfg.n_mels); }

std::vector<double> LogMelExtractor::log_mel_frames(const AudioClip& clip) {
  Impl& im = *impl_;
  const auto n_mels = static_cast<std::size_t>(im.cfg.n_mels);
  const auto samples = clip.samples();
  std::vector<double> out(im.frames * n_mels);
  std::vector<double> magnitude(im.bins);
  for (std::size_t t = 0; t < im.frames; ++t) {
    const std::size_t start = t * im.hop;
    for (std::size_t n = 0; n < im.fft_len; ++n) {
      im.in[n] = n < im.frame_len ? samples[start + n] * im.window[n] : 0.0;
    }
    fftw_execute(im.plan);
    for (std::size_t k = 0; k < im.bins; ++k) magnitude[k] = std::hypot(im.out[k][0], im.out[k][1]);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double* w = im.filters.data() + m * im.bins;
      double e = 0.0;
      for (std::size_t k = 0; k < im.bins; ++k) e += w[k] * magnitude[k];
      out[t * n_mels + m] = std::log(e + im.cfg.log_floor);
    }
  }
  return out;
}

FeatureVector LogMelExtractor::extract(std::string clip_id, const AudioClip& clip) {
  const auto n_mels = static_cast<std::size_t>(impl_->cfg.n_mels);
  const std::size_t frames = impl_->frames;
  const std::vector<double> lm = log_mel_frames(clip);
  FeatureVector fv{std::move(clip_id), std::vector<double>(2 * n_mels)};
  for (std::size_t m = 0; m < n_mels; ++m) {
    // shifted by the first frame so a constant band gives exactly zero spread
    const double x0 = lm[m];
    double shift = 0.0;
    for (std::size_t t = 0; t < frames; ++t) shift += lm[t * n_mels + m] - x0;
    const double mean = x0 + shift / static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = lm[t * n_mels + m] - mean;
      var += d * d;
    }
    fv.values[m] = mean;
    fv.values[n_mels + m] = std::sqrt(var / static_cast<double>(frames));
  }
  return fv;
}

FeatureVector extract_features(const AudioClip& clip, const FeatureConfig& cfg, std::string clip_id) {
  LogMelExtractor ex(cfg);
  return ex.extract(std::move(clip_id), clip);
}

std::vector<FeatureVector> parse_embeddings(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "embedding file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string prefix = "clip_id,dim=";
  if (line.rfind(prefix, 0) != 0) throw ParseError(1, "embedding header must be \"clip_id,dim=D\"");
  std::size_t dim = 0;
  {
    const std::string_view d = std::string_view(line).substr(prefix.size());
    auto [p, ec] = std::from_chars(d.data(), d.data() + d.size(), dim);
    if (ec != std::errc{} || p != d.data() + d.size() || dim == 0) throw ParseError(1, "bad embedding dimension");
  }
  std::vector<FeatureVector> out;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    FeatureVector fv;
    fv.clip_id = cells.front();
    if (fv.clip_id.empty()) throw ParseError(lineno, "empty clip_id");
    if (cells.size() - 1 != dim) {
      throw ParseError(lineno, "ragged dimension for clip \"" + fv.clip_id + "\": expected " + std::to_string(dim) +
                                   ", got " + std::to_string(cells.size() - 1));
    }
    fv.values.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      const std::string& tok = cells[i + 1];
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || p != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError(lineno, "non-finite or malformed value \"" + tok + "\" for clip \"" + fv.clip_id + "\"");
      }
      fv.values[i] = v;
    }
    if (!seen.insert(fv.clip_id).second) throw ParseError(lineno, "duplicate clip_id \"" + fv.clip_id + "\"");
    out.push_back(std::move(fv));
  }
  return out;
}

std::vector<FeatureVector> import_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path.string());
  return parse_embeddings(in);
}

std::string serialize_embeddings(std::span<const FeatureVector> vectors) {
  if (vectors.empty()) throw ValidationError("no feature vectors to write");
  const std::size_t dim = vectors.front().values.size();
  std::string out = "clip_id,dim=" + std::to_string(dim) + "\n";
  for (const auto& fv : vectors) {
    if (fv.values.size() != dim) throw ValidationError("ragged feature dimension for \"" + fv.clip_id + "\"");
    out += fv.clip_id;
    for (double v : fv.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace voclab
