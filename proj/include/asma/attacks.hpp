#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "asma/cam.hpp"
#include "asma/detector.hpp"
#include "asma/features.hpp"
#include "asma/image.hpp"
#include "asma/semantic.hpp"

namespace asma {

struct AttackConfig {
  PerturbationBudget budget;
  DistanceKind distance = DistanceKind::L2;
  SelectionPolicy mask_policy = SelectionPolicy::fixed(default_attack_regions());
  int mask_dilation = 0;
  CamMode cam_mode = CamMode::Auto;

  /// Class whose activation features anchor the distance; predicted class when empty.
  std::optional<int> target_class;
  /// Label attacked by the loss-based baselines; predicted class when empty.
  std::optional<int> true_label;
  std::uint64_t seed = 0;

  /// Magnitude of the random offset at which the first feature gradient is
  /// taken. The first gradient at the clean image is exactly zero; 0 disables.
  double jitter = 1e-3;

  /// PGD random start as a fraction of epsilon; 0 reproduces BIM.
  double random_start = 1.0;

  int cw_binary_steps = 9;
  int cw_iterations = 100;
  double cw_initial_const = 1e-2;
  double cw_kappa = 0.0;
  double cw_learning_rate = 0.01;

  double deepfool_overshoot = 0.02;
  int deepfool_max_iterations = 50;

  void validate() const;
};

struct AttackResult {
  FaceImage adversarial;
  NoiseField global_noise;
  BinaryMask mask;
  std::set<int> regions;
  int iterations_run = 0;
  /// Feature distance at every iterate x_0..x_T (ASMA variants only).
  std::vector<double> feature_distance_trace;
  int label = 0;
  int adversarial_class = 0;
  bool flipped = false;
};

/// Sign with sign(0) == 0.
inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Iterative sign ascent of the class-activated feature distance, followed by
/// restriction of the accumulated noise to the selected semantic regions.
AttackResult asma_attack(const Detector& model, const FaceImage& x, const LabelMap& labels,
                         const AttackConfig& cfg);
/// Same iterations without the mask; the whole image may change.
AttackResult asma_global_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);

AttackResult fgsm_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);
AttackResult bim_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);
AttackResult pgd_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);
/// Carlini-Wagner L2 in tanh space; result projected into the epsilon band.
AttackResult cw_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);
/// DeepFool for the binary case; result projected into the epsilon band.
AttackResult deepfool_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);
/// Uniform noise in [-eps, eps] restricted to the same semantic mask as ASMA.
AttackResult random_mask_attack(const Detector& model, const FaceImage& x, const LabelMap& labels,
                                const AttackConfig& cfg);
/// Returns x; used as an evaluation control.
AttackResult identity_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg);

enum class AttackKind { Asma, AsmaGlobal, Fgsm, Bim, Pgd, CarliniWagner, DeepFool, RandomMask, Identity };

std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);
bool needs_label_map(AttackKind kind);

AttackResult run_attack(AttackKind kind, const Detector& model, const FaceImage& x,
                        const LabelMap* labels, const AttackConfig& cfg);

/// Mask the ASMA pipeline would use for this image.
BinaryMask select_attack_mask(const Detector& model, const FaceImage& x, const LabelMap& labels,
                              const AttackConfig& cfg, int class_index, std::set<int>* regions = nullptr);

}  // namespace asma
