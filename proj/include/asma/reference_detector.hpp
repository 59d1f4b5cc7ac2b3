#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asma/detector.hpp"

namespace asma {

struct SyntheticSample;

struct ReferenceArchitecture {
  int input_size = 48;
  /// Output channels of each 3x3 conv stage; 2x2 average pooling sits
  /// between consecutive stages, global average pooling after the last.
  std::vector<int> stage_channels{8, 16, 16};
};

struct TrainOptions {
  int epochs = 6;
  int batch_size = 32;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 7;
};

struct TrainingReport {
  int epochs = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

/// Small CNN: softplus conv stages, global-average-pool head, linear
/// classifier. The last conv stage is the feature layer, so CAM weights are
/// exactly the classifier rows.
class ReferenceDetector final : public Detector {
 public:
  ReferenceDetector(std::string id, ReferenceArchitecture arch, std::uint64_t seed);

  std::string identifier() const override { return id_; }
  int input_size() const override { return arch_.input_size; }
  Logits logits(const Tensor& x) const override;
  bool has_feature_layer() const override { return true; }
  std::string feature_layer() const override;
  Tensor feature_activations(const Tensor& x) const override;
  std::optional<ClassWeights> class_weights() const override;
  Tensor logit_gradient_wrt_features(const Tensor& x, int class_index) const override;
  Tensor input_gradient(const Tensor& x, const OutputGradient& upstream) const override;

  const ReferenceArchitecture& architecture() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  std::vector<std::string> layer_names() const;

  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }

  /// Multiplies the classifier weights (not the bias) by `factor`.
  void scale_class_weights(double factor);

  const TrainingReport& report() const { return report_; }
  void set_report(TrainingReport r) { report_ = r; }

  /// Mean cross-entropy over a batch; accumulates parameter gradients into `grad`.
  double accumulate_gradients(std::span<const Tensor* const> inputs, std::span<const int> labels,
                              std::span<double> grad) const;

  void save(const std::filesystem::path& path) const;
  static ReferenceDetector load(const std::filesystem::path& path);

 private:
  struct Cache;
  struct Layout {
    std::size_t conv_w, conv_b;
  };

  Cache forward(const Tensor& x) const;
  Tensor backward(const Cache& cache, const OutputGradient& upstream, std::span<double> param_grad,
                  bool want_input_grad) const;
  void init_layout();

  std::string id_;
  ReferenceArchitecture arch_;
  std::uint64_t seed_;
  std::vector<Layout> layout_;
  std::size_t fc_w_ = 0;
  std::size_t fc_b_ = 0;
  std::vector<double> params_;
  TrainingReport report_;
};

/// Adam on mean cross-entropy. Throws TrainingError unless both classes occur.
ReferenceDetector train_reference_detector(const std::vector<SyntheticSample>& train,
                                           const std::vector<SyntheticSample>& validation,
                                           const TrainOptions& options,
                                           const ReferenceArchitecture& arch = {},
                                           std::string id = "toy-cnn");

double accuracy(const Detector& model, const std::vector<SyntheticSample>& samples);

}  // namespace asma
