#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "asma/attacks.hpp"
#include "asma/metrics.hpp"
#include "asma/reference_detector.hpp"
#include "asma/semantic.hpp"
#include "asma/synthetic.hpp"

namespace asma {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

struct RunConfig {
  /// manifest.json in the gen-data layout.
  std::filesystem::path dataset;
  /// Loose inputs for `attack`; label maps pair up by index.
  std::vector<std::filesystem::path> images;
  std::vector<std::filesystem::path> label_maps;
  /// Used when an image has no label map: {image} and {out} are substituted.
  std::string parser_command;
  /// Weight files. attack/visualize use the first; evaluate uses all of them
  /// as both sources and targets.
  std::vector<std::filesystem::path> models;
  /// Output of a previous `attack` run, read by `visualize`.
  std::filesystem::path attack_dir;
  std::filesystem::path out = "out";

  std::uint64_t seed = 0;
  int workers = 1;
  PixelScale metric_scale = PixelScale::Unit;
  ValueRateMode value_rate_mode = ValueRateMode::CamMass;

  AttackConfig attack;
  std::vector<AttackKind> attacks{AttackKind::Asma};
  /// evaluate also runs a perturbation sweep when non-empty.
  std::vector<double> sweep;

  int n_real = 1000;
  int n_fake = 1000;
  int n_val_real = 250;
  int n_val_fake = 250;
  SyntheticOptions synthetic;
  TrainOptions train;
  ReferenceArchitecture architecture;
  std::string model_id = "toy-cnn";

  double overlay_opacity = 0.5;
  double diff_gain = 10.0;

  /// Throws ConfigError.
  void validate() const;
};

/// Parses a config document. Unknown keys are rejected. Throws ConfigError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Fully resolved config; parse_run_config(to_json_text(c)) reproduces c.
std::string to_json_text(const RunConfig& config);

std::string_view to_string(CamMode mode);
CamMode parse_cam_mode(std::string_view name);
ValueRateMode parse_value_rate_mode(std::string_view name);

/// Each command writes run_manifest.json into config.out and returns an exit code.
int cmd_attack(const RunConfig& config, std::ostream& log);
int cmd_evaluate(const RunConfig& config, std::ostream& log);
int cmd_visualize(const RunConfig& config, std::ostream& log);
int cmd_train_toy(const RunConfig& config, std::ostream& log);
int cmd_gen_data(const RunConfig& config, std::ostream& log);

/// Noise remapped for display: 0 becomes mid-grey, +/-range the extremes.
FaceImage noise_to_image(const Tensor& delta, double range);
/// Pixels on the inner boundary of the mask.
BinaryMask mask_outline(const BinaryMask& mask);

}  // namespace asma
