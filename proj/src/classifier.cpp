#include "voclab/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "voclab/error.hpp"
#include "voclab/metrics.hpp"
#include "voclab/rng.hpp"

namespace voclab {

std::string_view to_string(Optimizer o) noexcept {
  return o == Optimizer::SgdMomentum ? "sgd_momentum" : "adaptive_moments";
}

Optimizer optimizer_from_string(std::string_view s) {
  if (s == "sgd_momentum" || s == "sgd") return Optimizer::SgdMomentum;
  if (s == "adaptive_moments" || s == "adam") return Optimizer::AdaptiveMoments;
  throw ValidationError("unknown optimizer \"" + std::string(s) + "\"");
}

Parameters Parameters::zeros(std::size_t input_dim, std::size_t hidden) {
  Parameters p;
  p.input_dim = input_dim;
  p.hidden = hidden;
  if (hidden > 0) {
    p.w1.assign(input_dim * hidden, 0.0);
    p.b1.assign(hidden, 0.0);
  }
  p.w2.assign(p.head_inputs() * kNumClasses, 0.0);
  p.b2.assign(kNumClasses, 0.0);
  return p;
}

namespace {

// Writes hidden activations into `h` (size hidden) when hidden > 0.
Logits forward_into(const Parameters& p, std::span<const double> x, std::vector<double>& h) {
  std::span<const double> head_in = x;
  if (p.hidden > 0) {
    h.assign(p.b1.begin(), p.b1.end());
    for (std::size_t i = 0; i < p.input_dim; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* row = p.w1.data() + i * p.hidden;
      for (std::size_t j = 0; j < p.hidden; ++j) h[j] += xi * row[j];
    }
    for (double& v : h) v = v > 0.0 ? v : 0.0;
    head_in = h;
  }
  Logits z;
  std::copy(p.b2.begin(), p.b2.end(), z.begin());
  for (std::size_t j = 0; j < head_in.size(); ++j) {
    const double hj = head_in[j];
    if (hj == 0.0) continue;
    const double* row = p.w2.data() + j * kNumClasses;
    for (std::size_t c = 0; c < kNumClasses; ++c) z[c] += hj * row[c];
  }
  return z;
}

double log_sum_exp(const Logits& z) noexcept {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

Logits forward(const Parameters& p, std::span<const double> x) {
  std::vector<double> h;
  return forward_into(p, x, h);
}

Logits softmax(const Logits& logits) noexcept {
  const double m = *std::max_element(logits.begin(), logits.end());
  Logits out;
  double sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    out[c] = std::exp(logits[c] - m);
    sum += out[c];
  }
  for (double& v : out) v /= sum;
  return out;
}

LabelClass argmax(const Logits& scores) noexcept {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return class_at(best);
}

double loss_and_gradient(const Parameters& p, std::span<const double> x, std::span<const LabelClass> y,
                         Parameters* grad) {
  const std::size_t n = y.size();
  if (n == 0 || x.size() != n * p.input_dim) throw ValidationError("loss_and_gradient: batch shape mismatch");
  if (grad) *grad = Parameters::zeros(p.input_dim, p.hidden);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> h;
  std::vector<double> dh(p.hidden);
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto xs = x.subspan(s * p.input_dim, p.input_dim);
    const Logits z = forward_into(p, xs, h);
    const std::size_t target = index_of(y[s]);
    loss += log_sum_exp(z) - z[target];
    if (!grad) continue;

    Logits dz = softmax(z);
    dz[target] -= 1.0;
    for (double& v : dz) v *= inv_n;
    for (std::size_t c = 0; c < kNumClasses; ++c) grad->b2[c] += dz[c];
    const std::span<const double> head_in = p.hidden > 0 ? std::span<const double>(h) : xs;
    for (std::size_t j = 0; j < head_in.size(); ++j) {
      double* row = grad->w2.data() + j * kNumClasses;
      for (std::size_t c = 0; c < kNumClasses; ++c) row[c] += head_in[j] * dz[c];
    }
    if (p.hidden == 0) continue;
    for (std::size_t j = 0; j < p.hidden; ++j) {
      if (h[j] <= 0.0) {
        dh[j] = 0.0;
        continue;
      }
      const double* row = p.w2.data() + j * kNumClasses;
      double acc = 0.0;
      for (std::size_t c = 0; c < kNumClasses; ++c) acc += row[c] * dz[c];
      dh[j] = acc;
      grad->b1[j] += acc;
    }
    for (std::size_t i = 0; i < p.input_dim; ++i) {
      const double xi = xs[i];
      if (xi == 0.0) continue;
      double* row = grad->w1.data() + i * p.hidden;
      for (std::size_t j = 0; j < p.hidden; ++j) row[j] += xi * dh[j];
    }
  }
  return loss * inv_n;
}

Logits ClassifierModel::logits(std::span<const double> raw) const {
  if (raw.size() != params.input_dim) {
    throw ValidationError("feature dimension " + std::to_string(raw.size()) + " does not match model dimension " +
                          std::to_string(params.input_dim));
  }
  std::vector<double> x(raw.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (raw[i] - input_mean[i]) / input_scale[i];
  return forward(params, x);
}

namespace {

struct Dataset {
  std::vector<double> x;
  std::vector<LabelClass> y;
};

Dataset standardized(std::span<const LabeledFeatures> set, const std::vector<double>& mean,
                     const std::vector<double>& scale) {
  const std::size_t d = mean.size();
  Dataset ds;
  ds.x.resize(set.size() * d);
  ds.y.reserve(set.size());
  for (std::size_t s = 0; s < set.size(); ++s) {
    const auto& v = set[s].features.values;
    for (std::size_t i = 0; i < d; ++i) ds.x[s * d + i] = (v[i] - mean[i]) / scale[i];
    ds.y.push_back(set[s].label);
  }
  return ds;
}

double dev_uar(const Parameters& p, const Dataset& dev) {
  const std::size_t d = p.input_dim;
  std::vector<LabelPair> pairs;
  pairs.reserve(dev.y.size());
  std::vector<double> h;
  for (std::size_t s = 0; s < dev.y.size(); ++s) {
    const Logits z = forward_into(p, std::span<const double>(dev.x).subspan(s * d, d), h);
    pairs.push_back({dev.y[s], argmax(z)});
  }
  return uar(confusion(pairs)).uar;
}

class OptimizerState {
 public:
  OptimizerState(const TrainConfig& cfg, const Parameters& shape)
      : cfg_(cfg), first_(Parameters::zeros(shape.input_dim, shape.hidden)),
        second_(Parameters::zeros(shape.input_dim, shape.hidden)) {}

  void step(Parameters& p, const Parameters& g) {
    ++t_;
    auto pb = p.blocks();
    const auto gb = g.blocks();
    auto mb = first_.blocks();
    auto vb = second_.blocks();
    if (cfg_.optimizer == Optimizer::SgdMomentum) {
      for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t i = 0; i < pb[b].size(); ++i) {
          mb[b][i] = cfg_.momentum * mb[b][i] - cfg_.learning_rate * gb[b][i];
          pb[b][i] += mb[b][i];
        }
      }
      return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t i = 0; i < pb[b].size(); ++i) {
        const double gi = gb[b][i];
        mb[b][i] = beta1 * mb[b][i] + (1.0 - beta1) * gi;
        vb[b][i] = beta2 * vb[b][i] + (1.0 - beta2) * gi * gi;
        pb[b][i] -= cfg_.learning_rate * (mb[b][i] / c1) / (std::sqrt(vb[b][i] / c2) + eps);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  Parameters first_;
  Parameters second_;
  std::uint64_t t_ = 0;
};

void check_set(std::span<const LabeledFeatures> set, std::size_t dim, const char* name) {
  for (const auto& lf : set) {
    if (lf.features.values.size() != dim) {
      throw ValidationError(std::string(name) + " clip \"" + lf.features.clip_id + "\" has dimension " +
                            std::to_string(lf.features.values.size()) + ", expected " + std::to_string(dim));
    }
    for (double v : lf.features.values) {
      if (!std::isfinite(v)) throw ValidationError(std::string(name) + " clip \"" + lf.features.clip_id + "\" has non-finite features");
    }
  }
}

}  // namespace

ClassifierModel train(std::span<const LabeledFeatures> train_set, std::span<const LabeledFeatures> dev_set,
                      const TrainConfig& cfg, const FeatureConfig& feature_config) {
  if (train_set.empty() || dev_set.empty()) throw ValidationError("train: train and dev sets must be non-empty");
  if (cfg.batch_size < 1 || cfg.epochs < 1 || !(cfg.learning_rate > 0.0)) {
    throw ValidationError("train: need batch_size >= 1, epochs >= 1, learning_rate > 0");
  }
  const std::size_t dim = train_set.front().features.values.size();
  if (dim == 0) throw ValidationError("train: zero-dimensional features");
  check_set(train_set, dim, "train");
  check_set(dev_set, dim, "dev");
  std::array<std::size_t, kNumClasses> present{};
  for (const auto& lf : train_set) ++present[index_of(lf.label)];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (present[c] == 0) {
      throw ValidationError("train: class \"" + std::string(to_string(class_at(c))) + "\" missing from train set");
    }
  }

  ClassifierModel model;
  model.feature_config = feature_config;
  model.input_mean.assign(dim, 0.0);
  model.input_scale.assign(dim, 1.0);
  if (cfg.standardize) {
    const auto n = static_cast<double>(train_set.size());
    for (const auto& lf : train_set) {
      for (std::size_t i = 0; i < dim; ++i) model.input_mean[i] += lf.features.values[i];
    }
    for (double& m : model.input_mean) m /= n;
    std::vector<double> var(dim, 0.0);
    for (const auto& lf : train_set) {
      for (std::size_t i = 0; i < dim; ++i) {
        const double d = lf.features.values[i] - model.input_mean[i];
        var[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < dim; ++i) {
      const double sd = std::sqrt(var[i] / n);
      model.input_scale[i] = sd > 0.0 ? sd : 1.0;
    }
  }
  const Dataset tr = standardized(train_set, model.input_mean, model.input_scale);
  const Dataset dv = standardized(dev_set, model.input_mean, model.input_scale);

  Rng rng(cfg.seed);
  Parameters p = Parameters::zeros(dim, cfg.hidden_units);
  auto init_uniform = [&](std::vector<double>& w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : w) v = rng.uniform(-bound, bound);
  };
  if (p.hidden > 0) init_uniform(p.w1, dim);
  init_uniform(p.w2, p.head_inputs());

  OptimizerState opt(cfg, p);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> bx;
  std::vector<LabelClass> by;
  Parameters grad;
  Parameters best = p;
  double best_uar = -1.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      bx.clear();
      by.clear();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t s = order[k];
        bx.insert(bx.end(), tr.x.begin() + static_cast<std::ptrdiff_t>(s * dim),
                  tr.x.begin() + static_cast<std::ptrdiff_t>((s + 1) * dim));
        by.push_back(tr.y[s]);
      }
      const double loss = loss_and_gradient(p, bx, by, &grad);
      if (!std::isfinite(loss)) {
        throw ValidationError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no));
      }
      opt.step(p, grad);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_and_gradient(p, tr.x, tr.y, nullptr);
    if (!std::isfinite(log.train_loss)) {
      throw ValidationError("train: non-finite loss after epoch " + std::to_string(epoch));
    }
    log.dev_uar = dev_uar(p, dv);
    model.training_log.push_back(log);
    if (log.dev_uar > best_uar) {
      best_uar = log.dev_uar;
      best = p;
      model.selected_epoch = epoch;
    }
  }
  model.params = std::move(best);
  return model;
}

std::vector<PredictionRecord> predict(const ClassifierModel& model, std::span<const FeatureVector> features) {
  std::vector<PredictionRecord> out;
  out.reserve(features.size());
  for (const auto& fv : features) {
    PredictionRecord r;
    r.clip_id = fv.clip_id;
    r.scores = softmax(model.logits(fv.values));
    r.predicted = argmax(r.scores);
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void bytes(std::string_view s) { buf_ += s; }
  const std::string& str() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : buf_(std::move(data)) {}
  std::uint64_t raw(int width) {
    if (pos_ + static_cast<std::size_t>(width) > buf_.size()) throw ParseError(0, "model file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  double f64() { return std::bit_cast<double>(raw(8)); }
  std::vector<double> f64s(std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::string_view bytes(std::size_t n) {
    if (pos_ + n > buf_.size()) throw ParseError(0, "model file truncated");
    std::string_view s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == buf_.size(); }

 private:
  std::string buf_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kModelMagic = "VCLM";

}  // namespace

void save_model(const std::filesystem::path& path, const ClassifierModel& m) {
  Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(m.feature_config.kind));
  w.u32(static_cast<std::uint32_t>(m.params.input_dim));
  w.u32(static_cast<std::uint32_t>(m.params.hidden));
  w.u32(static_cast<std::uint32_t>(m.feature_config.n_mels));
  w.f64(m.feature_config.window_ms);
  w.f64(m.feature_config.hop_ms);
  w.f64(m.feature_config.fmin_hz);
  w.f64(m.feature_config.fmax_hz);
  w.f64(m.feature_config.log_floor);
  w.f64s(m.input_mean);
  w.f64s(m.input_scale);
  for (const auto& block : m.params.blocks()) w.f64s(block);
  w.u32(static_cast<std::uint32_t>(m.training_log.size()));
  for (const auto& e : m.training_log) {
    w.u32(static_cast<std::uint32_t>(e.epoch));
    w.f64(e.train_loss);
    w.f64(e.dev_uar);
  }
  w.u32(static_cast<std::uint32_t>(m.selected_epoch));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + tmp.string());
    f.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    if (!f) throw Error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open model " + path.string());
  Reader r(std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));
  if (r.bytes(4) != kModelMagic) throw ParseError(0, path.string() + ": not a model file");
  if (const auto v = r.u32(); v != kModelVersion) throw ParseError(0, "unsupported model version " + std::to_string(v));
  ClassifierModel m;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw ParseError(0, "unknown feature kind in model file");
  m.feature_config.kind = static_cast<FeatureKind>(kind);
  const std::size_t dim = r.u32();
  const std::size_t hidden = r.u32();
  m.feature_config.n_mels = static_cast<int>(r.u32());
  m.feature_config.window_ms = r.f64();
  m.feature_config.hop_ms = r.f64();
  m.feature_config.fmin_hz = r.f64();
  m.feature_config.fmax_hz = r.f64();
  m.feature_config.log_floor = r.f64();
  m.input_mean = r.f64s(dim);
  m.input_scale = r.f64s(dim);
  m.params = Parameters::zeros(dim, hidden);
  for (auto& block : m.params.blocks()) {
    for (double& v : block) v = r.f64();
  }
  const std::uint32_t epochs = r.u32();
  for (std::uint32_t e = 0; e < epochs; ++e) {
    EpochLog log;
    log.epoch = static_cast<int>(r.u32());
    log.train_loss = r.f64();
    log.dev_uar = r.f64();
    m.training_log.push_back(log);
  }
  m.selected_epoch = static_cast<int>(r.u32());
  if (!r.done()) throw ParseError(0, "trailing bytes in model file");
  for (const auto& block : std::as_const(m.params).blocks()) {
    for (double v : block) {
      if (!std::isfinite(v)) throw ValidationError("model file contains non-finite parameters");
    }
  }
  return m;
}

std::string serialize_predictions(std::span<const PredictionRecord> preds) {
  std::string out;
  for (const auto& p : preds) {
    nlohmann::ordered_json j;
    j["clip_id"] = p.clip_id;
    j["scores"] = p.scores;
    j["predicted"] = to_string(p.predicted);
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      PredictionRecord p;
      p.clip_id = j.at("clip_id").get<std::string>();
      const auto& s = j.at("scores");
      if (!s.is_array() || s.size() != kNumClasses) throw ValidationError("scores must have 5 entries");
      for (std::size_t c = 0; c < kNumClasses; ++c) p.scores[c] = s[c].get<double>();
      p.predicted = label_from_string(j.at("predicted").get<std::string>());
      out.push_back(std::move(p));
    } catch (const nlohmann::ordered_json::exception& e) {
      throw ParseError(lineno, std::string("bad prediction record: ") + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  return out;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open predictions " + path.string());
  return parse_predictions(in);
}

}  // namespace voclab
