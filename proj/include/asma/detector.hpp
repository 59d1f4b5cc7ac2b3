#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "asma/features.hpp"
#include "asma/image.hpp"

namespace asma {

inline constexpr int kNumClasses = 2;
inline constexpr int kRealClass = 0;
inline constexpr int kFakeClass = 1;

using Logits = std::array<double, kNumClasses>;
using Probabilities = std::array<double, kNumClasses>;

/// Classifier weights, row-major [class][channel].
struct ClassWeights {
  int channels = 0;
  std::vector<double> values;
  double at(int cls, int channel) const { return values[static_cast<std::size_t>(cls) * channels + channel]; }
};

/// Upstream gradients injected at the detector outputs for one backward pass.
struct OutputGradient {
  Logits logits{0.0, 0.0};
  /// Gradient w.r.t. the raw feature-layer activations; empty when unused.
  Tensor features;
};

/// Binary real/fake detector with access to input gradients and its last
/// convolutional activations. Implementations are immutable once built and
/// may be shared across threads.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual std::string identifier() const = 0;
  virtual int input_size() const = 0;
  virtual int input_channels() const { return 3; }

  virtual Logits logits(const Tensor& x) const = 0;

  virtual bool has_feature_layer() const = 0;
  virtual std::string feature_layer() const = 0;
  /// Throws ConfigError when there is no feature layer.
  virtual Tensor feature_activations(const Tensor& x) const = 0;
  /// Present only for global-average-pooled heads.
  virtual std::optional<ClassWeights> class_weights() const = 0;

  /// d logit[class_index] / d feature activations, shaped like the feature layer.
  virtual Tensor logit_gradient_wrt_features(const Tensor& x, int class_index) const = 0;

  /// Back-propagates `upstream` to the input.
  virtual Tensor input_gradient(const Tensor& x, const OutputGradient& upstream) const = 0;

  /// Throws DimensionError when x does not match the expected input.
  void check_input(const Tensor& x) const;
};

Probabilities softmax(const Logits& z);
Probabilities predict(const Detector& model, const FaceImage& img);
int predicted_class(const Detector& model, const FaceImage& img);

// Scalar objectives understood by gradient_wrt_input.
struct ConstantObjective {
  double value = 0.0;
};
struct PixelSumObjective {};
struct CrossEntropyObjective {
  int label = 0;
};
struct LogitObjective {
  int class_index = 0;
};
/// Distance between fixed reference features and the features of the input.
struct FeatureDistanceObjective {
  ClassActivationFeatures reference;
  DistanceKind kind = DistanceKind::L2;
};
/// Argmax class indicator; piecewise constant, rejected by gradient_wrt_input.
struct PredictedClassObjective {};

using Objective = std::variant<ConstantObjective, PixelSumObjective, CrossEntropyObjective,
                               LogitObjective, FeatureDistanceObjective, PredictedClassObjective>;

/// Value of the scalar objective at x.
double evaluate_objective(const Detector& model, const Tensor& x, const Objective& objective);

/// Exact gradient of the objective w.r.t. every input value.
NoiseField gradient_wrt_input(const Detector& model, const Tensor& x, const Objective& objective);
inline NoiseField gradient_wrt_input(const Detector& model, const FaceImage& img,
                                     const Objective& objective) {
  return gradient_wrt_input(model, img.pixels(), objective);
}

ClassActivationFeatures extract_class_activation_features(const Detector& model, const Tensor& x,
                                                          int class_index);
inline ClassActivationFeatures extract_class_activation_features(const Detector& model,
                                                                 const FaceImage& img,
                                                                 int class_index) {
  return extract_class_activation_features(model, img.pixels(), class_index);
}

/// Logits = W x + b over the flattened input. Has no feature layer; used for
/// closed-form checks.
class LinearDetector final : public Detector {
 public:
  LinearDetector(std::string id, int size, int channels, std::vector<double> weights,
                 Logits bias);

  std::string identifier() const override { return id_; }
  int input_size() const override { return size_; }
  int input_channels() const override { return channels_; }
  Logits logits(const Tensor& x) const override;
  bool has_feature_layer() const override { return false; }
  std::string feature_layer() const override { return {}; }
  Tensor feature_activations(const Tensor& x) const override;
  std::optional<ClassWeights> class_weights() const override { return std::nullopt; }
  Tensor logit_gradient_wrt_features(const Tensor& x, int class_index) const override;
  Tensor input_gradient(const Tensor& x, const OutputGradient& upstream) const override;

 private:
  std::string id_;
  int size_;
  int channels_;
  std::vector<double> weights_;  // [class][pixel]
  Logits bias_;
};

}  // namespace asma
