#include "asma/detector.hpp"

#include <algorithm>
#include <cmath>

namespace asma {

void Detector::check_input(const Tensor& x) const {
  if (x.height() != input_size() || x.width() != input_size() || x.channels() != input_channels())
    throw DimensionError("input is " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                         "x" + std::to_string(x.channels()) + ", detector '" + identifier() +
                         "' expects " + std::to_string(input_size()) + "x" +
                         std::to_string(input_size()) + "x" + std::to_string(input_channels()));
}

Probabilities softmax(const Logits& z) {
  double m = std::max(z[0], z[1]);
  double e0 = std::exp(z[0] - m);
  double e1 = std::exp(z[1] - m);
  double s = e0 + e1;
  return {e0 / s, e1 / s};
}

Probabilities predict(const Detector& model, const FaceImage& img) {
  model.check_input(img.pixels());
  return softmax(model.logits(img.pixels()));
}

int predicted_class(const Detector& model, const FaceImage& img) {
  auto p = predict(model, img);
  return p[kFakeClass] > p[kRealClass] ? kFakeClass : kRealClass;
}

ClassActivationFeatures extract_class_activation_features(const Detector& model, const Tensor& x,
                                                          int class_index) {
  if (!model.has_feature_layer())
    throw ConfigError("detector '" + model.identifier() + "' exposes no feature layer");
  if (class_index < 0 || class_index >= kNumClasses) throw ArgumentError("class index out of range");
  auto weights = model.class_weights();
  if (!weights) throw ConfigError("detector '" + model.identifier() + "' has no class weights");
  model.check_input(x);
  Tensor a = model.feature_activations(x);
  if (a.channels() != weights->channels) throw ConfigError("class weights do not match feature layer");
  for (int y = 0; y < a.height(); ++y)
    for (int xx = 0; xx < a.width(); ++xx)
      for (int k = 0; k < a.channels(); ++k) a.at(y, xx, k) *= weights->at(class_index, k);
  return {std::move(a), class_index};
}

namespace {

double log_softmax_at(const Logits& z, int label) {
  double m = std::max(z[0], z[1]);
  return z[label] - m - std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
}

/// Scales the feature gradient by the class weights: dPhi/dA_k = w_ck.
Tensor chain_through_class_weights(const Detector& model, Tensor grad_phi, int class_index) {
  auto weights = model.class_weights();
  for (int y = 0; y < grad_phi.height(); ++y)
    for (int x = 0; x < grad_phi.width(); ++x)
      for (int k = 0; k < grad_phi.channels(); ++k) grad_phi.at(y, x, k) *= weights->at(class_index, k);
  return grad_phi;
}

}  // namespace

double evaluate_objective(const Detector& model, const Tensor& x, const Objective& objective) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, ConstantObjective>) {
          return o.value;
        } else if constexpr (std::is_same_v<T, PixelSumObjective>) {
          double s = 0.0;
          for (double v : x.values()) s += v;
          return s;
        } else if constexpr (std::is_same_v<T, CrossEntropyObjective>) {
          return -log_softmax_at(model.logits(x), o.label);
        } else if constexpr (std::is_same_v<T, LogitObjective>) {
          return model.logits(x)[o.class_index];
        } else if constexpr (std::is_same_v<T, FeatureDistanceObjective>) {
          auto moving = extract_class_activation_features(model, x, o.reference.class_index);
          return feature_distance(o.reference, moving, o.kind);
        } else {
          auto z = model.logits(x);
          return z[kFakeClass] > z[kRealClass] ? kFakeClass : kRealClass;
        }
      },
      objective);
}

NoiseField gradient_wrt_input(const Detector& model, const Tensor& x, const Objective& objective) {
  return std::visit(
      [&](const auto& o) -> NoiseField {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, ConstantObjective>) {
          return {Tensor(x.height(), x.width(), x.channels())};
        } else if constexpr (std::is_same_v<T, PixelSumObjective>) {
          return {Tensor(x.height(), x.width(), x.channels(), 1.0)};
        } else if constexpr (std::is_same_v<T, CrossEntropyObjective>) {
          if (o.label < 0 || o.label >= kNumClasses) throw ArgumentError("label out of range");
          model.check_input(x);
          auto p = softmax(model.logits(x));
          OutputGradient up;
          for (int c = 0; c < kNumClasses; ++c) up.logits[c] = p[c] - (c == o.label ? 1.0 : 0.0);
          return {model.input_gradient(x, up)};
        } else if constexpr (std::is_same_v<T, LogitObjective>) {
          if (o.class_index < 0 || o.class_index >= kNumClasses) throw ArgumentError("class out of range");
          model.check_input(x);
          OutputGradient up;
          up.logits[o.class_index] = 1.0;
          return {model.input_gradient(x, up)};
        } else if constexpr (std::is_same_v<T, FeatureDistanceObjective>) {
          auto moving = extract_class_activation_features(model, x, o.reference.class_index);
          OutputGradient up;
          up.features = chain_through_class_weights(
              model, feature_distance_gradient(o.reference, moving, o.kind), o.reference.class_index);
          return {model.input_gradient(x, up)};
        } else {
          throw UnsupportedObjectiveError("predicted-class objective is not differentiable");
        }
      },
      objective);
}

LinearDetector::LinearDetector(std::string id, int size, int channels, std::vector<double> weights,
                               Logits bias)
    : id_(std::move(id)), size_(size), channels_(channels), weights_(std::move(weights)), bias_(bias) {
  if (weights_.size() != static_cast<std::size_t>(kNumClasses) * size * size * channels)
    throw DimensionError("linear detector weights do not match input shape");
}

Logits LinearDetector::logits(const Tensor& x) const {
  check_input(x);
  Logits z = bias_;
  std::size_t n = x.size();
  for (int c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < n; ++i) z[c] += weights_[c * n + i] * x[i];
  return z;
}

Tensor LinearDetector::feature_activations(const Tensor&) const {
  throw ConfigError("linear detector has no feature layer");
}

Tensor LinearDetector::logit_gradient_wrt_features(const Tensor&, int) const {
  throw ConfigError("linear detector has no feature layer");
}

Tensor LinearDetector::input_gradient(const Tensor& x, const OutputGradient& upstream) const {
  check_input(x);
  if (!upstream.features.empty()) throw ConfigError("linear detector has no feature layer");
  Tensor g(x.height(), x.width(), x.channels());
  std::size_t n = x.size();
  for (int c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < n; ++i) g[i] += upstream.logits[c] * weights_[c * n + i];
  return g;
}

}  // namespace asma
