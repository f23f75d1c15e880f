#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voclab/features.hpp"
#include "voclab/labels.hpp"

namespace voclab {

enum class Optimizer : std::uint8_t { SgdMomentum, AdaptiveMoments };

std::string_view to_string(Optimizer o) noexcept;
Optimizer optimizer_from_string(std::string_view s);

struct TrainConfig {
  std::size_t batch_size = 32;
  int epochs = 10;
  double learning_rate = 1e-2;
  /// Used by SgdMomentum only.
  double momentum = 0.9;
  std::size_t hidden_units = 256;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::SgdMomentum;
  /// z-score inputs with train-set statistics stored in the model.
  bool standardize = true;
};

/// Weights of the softmax head. With hidden > 0:
///   h = relu(x W1 + b1), logits = h W2 + b2
/// otherwise logits = x W2 + b2. Matrices are row-major (fan_in x fan_out).
struct Parameters {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> w1, b1, w2, b2;

  static Parameters zeros(std::size_t input_dim, std::size_t hidden);
  std::size_t head_inputs() const noexcept { return hidden > 0 ? hidden : input_dim; }
  std::size_t size() const noexcept { return w1.size() + b1.size() + w2.size() + b2.size(); }

  /// Flat views in the order w1, b1, w2, b2.
  std::array<std::span<double>, 4> blocks() noexcept { return {w1, b1, w2, b2}; }
  std::array<std::span<const double>, 4> blocks() const noexcept { return {w1, b1, w2, b2}; }
};

using Logits = std::array<double, kNumClasses>;

Logits forward(const Parameters& p, std::span<const double> x);

/// Max-subtracted softmax.
Logits softmax(const Logits& logits) noexcept;

/// First maximum in fixed class order.
LabelClass argmax(const Logits& scores) noexcept;

/// Mean cross-entropy over a batch (x is n x input_dim row-major). When
/// `grad` is non-null it receives the analytic gradient of that mean,
/// shaped like `p`. The relu subgradient at 0 is 0.
double loss_and_gradient(const Parameters& p, std::span<const double> x, std::span<const LabelClass> y,
                         Parameters* grad);

struct LabeledFeatures {
  FeatureVector features;
  LabelClass label;
};

struct EpochLog {
  int epoch = 0;
  /// Mean cross-entropy over the whole train set after the epoch.
  double train_loss = 0.0;
  /// Dev unweighted average recall, percent.
  double dev_uar = 0.0;
};

struct ClassifierModel {
  FeatureConfig feature_config;
  Parameters params;
  /// Input standardization; identity (0 / 1) when disabled.
  std::vector<double> input_mean;
  std::vector<double> input_scale;
  std::vector<EpochLog> training_log;
  /// 1-based epoch whose weights are stored.
  int selected_epoch = 0;

  std::size_t input_dim() const noexcept { return params.input_dim; }
  Logits logits(std::span<const double> raw_features) const;
};

/// Mini-batch training with per-epoch reshuffling and best-dev-UAR epoch
/// selection (earliest on ties). Throws ValidationError for empty sets,
/// missing classes, ragged dimensions, or a non-finite loss.
ClassifierModel train(std::span<const LabeledFeatures> train_set, std::span<const LabeledFeatures> dev_set,
                      const TrainConfig& cfg, const FeatureConfig& feature_config = {});

struct PredictionRecord {
  std::string clip_id;
  std::array<double, kNumClasses> scores{};
  LabelClass predicted = LabelClass::Crying;
};

std::vector<PredictionRecord> predict(const ClassifierModel& model, std::span<const FeatureVector> features);

// Model file: "VCLM" magic, u32 version, u32 feature kind, u32 D, u32 H,
// feature config, standardization, parameters (little-endian f64), then
// the training log and selected epoch.

inline constexpr std::uint32_t kModelVersion = 1;

void save_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_model(const std::filesystem::path& path);

// Predictions file: {"clip_id":..,"scores":[5 floats],"predicted":..} per line.

std::string serialize_predictions(std::span<const PredictionRecord> preds);
std::vector<PredictionRecord> parse_predictions(std::istream& in);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace voclab
