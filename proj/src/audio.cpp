#include "voclab/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

#include "voclab/error.hpp"

namespace voclab {

AudioClip::AudioClip(std::vector<float> samples) : samples_(std::move(samples)) {
  if (samples_.size() != kClipLength) {
    throw ValidationError("audio clip must have " + std::to_string(kClipLength) + " samples, got " +
                          std::to_string(samples_.size()));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const float v = samples_[i];
    if (!std::isfinite(v) || std::fabs(v) > 1.0f + 1e-6f) {
      throw ValidationError("audio sample " + std::to_string(i) + " out of range");
    }
  }
}

RawAudio to_mono(const RawAudio& a) {
  if (a.channels.empty()) throw ValidationError("to_mono: audio has no channels");
  const std::size_t n = a.frames();
  if (n == 0) throw ValidationError("to_mono: audio is empty");
  for (const auto& ch : a.channels) {
    if (ch.size() != n) throw ValidationError("to_mono: channels differ in length");
  }
  if (a.channels.size() == 1) return a;
  RawAudio out;
  out.sample_rate_hz = a.sample_rate_hz;
  out.channels.assign(1, std::vector<float>(n));
  const double inv = 1.0 / static_cast<double>(a.channels.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const auto& ch : a.channels) sum += ch[i];
    out.channels[0][i] = static_cast<float>(sum * inv);
  }
  return out;
}

struct Resampler::Impl {
  std::int64_t up = 1;    // L
  std::int64_t down = 1;  // M
  double cutoff = 1.0;    // relative to the input Nyquist frequency
  double half_width = 0.0;
  std::int64_t reach = 0;  // K: taps span offsets [-K, K + 1]
  double kaiser_norm = 1.0;
  std::vector<double> table;  // up x (2K + 2) when precomputed

  std::size_t taps() const noexcept { return static_cast<std::size_t>(2 * reach + 2); }

  double kernel(double tau) const noexcept {
    const double x = tau / half_width;
    if (std::fabs(x) >= 1.0) return 0.0;
    const double arg = std::numbers::pi * cutoff * tau;
    const double sinc = tau == 0.0 ? 1.0 : std::sin(arg) / arg;
    const double window = std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - x * x)) / kaiser_norm;
    return cutoff * sinc * window;
  }

  void fill_phase(std::int64_t phase, double* out) const noexcept {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    for (std::int64_t j = -reach; j <= reach + 1; ++j) out[j + reach] = kernel(frac - static_cast<double>(j));
  }
};

namespace {
constexpr std::int64_t kMaxTablePhases = 4096;
}

Resampler::Resampler(int source_rate_hz, int target_rate_hz) : impl_(std::make_unique<Impl>()) {
  if (source_rate_hz <= 0 || target_rate_hz <= 0) throw ValidationError("sample rates must be positive");
  const std::int64_t g = std::gcd(source_rate_hz, target_rate_hz);
  impl_->up = target_rate_hz / g;
  impl_->down = source_rate_hz / g;
  const double ratio = std::min(1.0, static_cast<double>(target_rate_hz) / source_rate_hz);
  impl_->cutoff = kPassbandFraction * ratio;
  impl_->half_width = kZeroCrossings / impl_->cutoff;
  impl_->reach = static_cast<std::int64_t>(std::ceil(impl_->half_width));
  impl_->kaiser_norm = std::cyl_bessel_i(0.0, kKaiserBeta);
  if (impl_->up <= kMaxTablePhases) {
    impl_->table.resize(static_cast<std::size_t>(impl_->up) * impl_->taps());
    for (std::int64_t p = 0; p < impl_->up; ++p) {
      impl_->fill_phase(p, impl_->table.data() + static_cast<std::size_t>(p) * impl_->taps());
    }
  }
}

Resampler::~Resampler() = default;
Resampler::Resampler(Resampler&&) noexcept = default;
Resampler& Resampler::operator=(Resampler&&) noexcept = default;

std::size_t Resampler::output_length(std::size_t input_length) const noexcept {
  const auto n = static_cast<std::int64_t>(input_length);
  return static_cast<std::size_t>((2 * n * impl_->up + impl_->down) / (2 * impl_->down));
}

std::vector<float> Resampler::process(std::span<const float> input) const {
  const Impl& im = *impl_;
  const std::size_t n_out = output_length(input.size());
  std::vector<float> out(n_out);
  const auto n_in = static_cast<std::int64_t>(input.size());
  std::vector<double> scratch(im.table.empty() ? im.taps() : 0);
  for (std::size_t n = 0; n < n_out; ++n) {
    const std::int64_t pos = static_cast<std::int64_t>(n) * im.down;
    const std::int64_t base = pos / im.up;
    const std::int64_t phase = pos % im.up;
    const double* h;
    if (im.table.empty()) {
      im.fill_phase(phase, scratch.data());
      h = scratch.data();
    } else {
      h = im.table.data() + static_cast<std::size_t>(phase) * im.taps();
    }
    const std::int64_t k_lo = std::max<std::int64_t>(0, base - im.reach);
    const std::int64_t k_hi = std::min<std::int64_t>(n_in - 1, base + im.reach + 1);
    double acc = 0.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) acc += input[static_cast<std::size_t>(k)] * h[k - base + im.reach];
    out[n] = static_cast<float>(acc);
  }
  return out;
}

RawAudio resample_to_16k(const RawAudio& a) {
  if (a.channels.size() != 1) throw ValidationError("resample_to_16k: input must be mono");
  if (a.sample_rate_hz < kMinSourceRate || a.sample_rate_hz > kMaxSourceRate) {
    throw ValidationError("resample_to_16k: unsupported source rate " + std::to_string(a.sample_rate_hz));
  }
  if (a.sample_rate_hz == kTargetSampleRate) return a;
  RawAudio out;
  out.sample_rate_hz = kTargetSampleRate;
  // Filter tables are costly to build; keep one per source rate.
  static std::mutex cache_mu;
  static std::map<int, std::shared_ptr<const Resampler>> cache;
  std::shared_ptr<const Resampler> r;
  {
    std::lock_guard lock(cache_mu);
    auto& slot = cache[a.sample_rate_hz];
    if (!slot) slot = std::make_shared<const Resampler>(a.sample_rate_hz, kTargetSampleRate);
    r = slot;
  }
  out.channels.push_back(r->process(a.channels.front()));
  return out;
}

std::vector<float> pad_center(std::span<const float> samples, std::size_t target, OverflowPolicy policy) {
  if (samples.size() > target) {
    if (policy == OverflowPolicy::Error) {
      throw ValidationError("clip has " + std::to_string(samples.size()) + " samples, longer than " +
                            std::to_string(target));
    }
    const std::size_t start = (samples.size() - target) / 2;
    return {samples.begin() + static_cast<std::ptrdiff_t>(start),
            samples.begin() + static_cast<std::ptrdiff_t>(start + target)};
  }
  std::vector<float> out(target, 0.0f);
  const std::size_t left = (target - samples.size()) / 2;
  std::copy(samples.begin(), samples.end(), out.begin() + static_cast<std::ptrdiff_t>(left));
  return out;
}

AudioClip pad_center_clip(const RawAudio& mono16k, OverflowPolicy policy) {
  if (mono16k.channels.size() != 1 || mono16k.sample_rate_hz != kTargetSampleRate) {
    throw ValidationError("pad_center: expected mono 16 kHz audio");
  }
  return AudioClip(pad_center(mono16k.channels.front(), kClipLength, policy));
}

AudioClip prepare_clip(const RawAudio& a, OverflowPolicy policy) {
  RawAudio mono = resample_to_16k(to_mono(a));
  // Band-limited interpolation can overshoot full-scale input slightly.
  for (float& v : mono.channels.front()) v = std::clamp(v, -1.0f, 1.0f);
  return pad_center_clip(mono, policy);
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw ParseError(0, "clip-tensor file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

constexpr char kClipMagic[4] = {'V', 'C', 'L', 'P'};

}  // namespace

void write_clip_tensors(const std::filesystem::path& path, std::span<const ClipTensor> clips) {
  std::string out(kClipMagic, 4);
  put_u32(out, kClipTensorVersion);
  put_u32(out, static_cast<std::uint32_t>(clips.size()));
  put_u32(out, static_cast<std::uint32_t>(kClipLength));
  for (const auto& c : clips) {
    put_u32(out, static_cast<std::uint32_t>(c.clip_id.size()));
    out += c.clip_id;
    for (float v : c.clip.samples()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ClipTensor> read_clip_tensors(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (in.size() < 16 || in.compare(0, 4, kClipMagic, 4) != 0) throw ParseError(0, path.string() + ": not a clip-tensor file");
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(in, pos);
  if (version != kClipTensorVersion) throw ParseError(0, "unsupported clip-tensor version " + std::to_string(version));
  const std::uint32_t count = get_u32(in, pos);
  const std::uint32_t length = get_u32(in, pos);
  if (length != kClipLength) throw ParseError(0, "clip-tensor length " + std::to_string(length) + " != 9217");
  std::vector<ClipTensor> out;
  out.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::uint32_t id_len = get_u32(in, pos);
    if (pos + id_len > in.size()) throw ParseError(0, "clip-tensor file truncated");
    std::string id = in.substr(pos, id_len);
    pos += id_len;
    std::vector<float> samples(length);
    for (auto& s : samples) s = std::bit_cast<float>(get_u32(in, pos));
    out.push_back({std::move(id), AudioClip(std::move(samples))});
  }
  if (pos != in.size()) throw ParseError(0, "trailing bytes in clip-tensor file");
  return out;
}

}  // namespace voclab
