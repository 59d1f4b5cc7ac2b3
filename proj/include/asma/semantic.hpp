#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "asma/image.hpp"

namespace asma {

struct ActivationMap;

/// Fixed face-parsing palette.
enum FaceLabel : int {
  kBackground = 0,
  kSkin = 1,
  kLeftBrow = 2,
  kRightBrow = 3,
  kLeftEye = 4,
  kRightEye = 5,
  kNose = 6,
  kUpperLip = 7,
  kMouthInside = 8,
  kLowerLip = 9,
  kHair = 10,
};
inline constexpr int kNumFaceLabels = 11;

std::string_view label_name(int label);
/// Accepts the palette names ("left_eye", "nose", ...) plus the group
/// aliases "eyes", "brows", "lips". Throws ConfigError otherwise.
std::set<int> parse_label_names(std::string_view csv);

/// Eyes, eyebrows and nose.
std::set<int> default_attack_regions();

class LabelMap {
 public:
  LabelMap() = default;
  /// Throws FormatError on any label outside [0,10].
  LabelMap(int height, int width, std::vector<std::uint8_t> labels);

  int height() const { return height_; }
  int width() const { return width_; }
  int at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const std::uint8_t> labels() const { return labels_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// Reads an 8-bit single-channel PNG. Pass expected dims to enforce a match.
LabelMap load_label_map(const std::filesystem::path& path,
                        std::optional<std::pair<int, int>> image_dims = std::nullopt);
void save_label_map(const LabelMap& labels, const std::filesystem::path& path);

/// Runs `command` with {image} and {out} substituted, then loads {out}.
LabelMap parse_with_external_command(const std::string& command,
                                     const std::filesystem::path& image,
                                     const std::filesystem::path& out,
                                     std::pair<int, int> image_dims);

struct RegionScore {
  int label = 0;
  double score = 0.0;
  double area_fraction = 0.0;
};

/// One entry per palette label, sorted by score descending then label id.
std::vector<RegionScore> score_regions(const ActivationMap& cam, const LabelMap& labels);

struct SelectionPolicy {
  enum class Kind { TopK, Fixed, Threshold };
  Kind kind = Kind::Fixed;
  int k = 5;
  double threshold = 0.5;
  std::set<int> labels = default_attack_regions();
  /// Labels never picked by top_k or threshold.
  std::set<int> excluded{kBackground, kSkin, kHair};

  static SelectionPolicy top_k(int k);
  static SelectionPolicy fixed(std::set<int> labels);
  static SelectionPolicy threshold_at(double tau);
};

std::string_view to_string(SelectionPolicy::Kind kind);
SelectionPolicy::Kind parse_policy_kind(std::string_view name);

std::set<int> select_regions(const std::vector<RegionScore>& scores, const SelectionPolicy& policy);

/// mask = labels in `selected`, then square dilation by dilation_px.
BinaryMask build_mask(const LabelMap& labels, const std::set<int>& selected, int dilation_px = 0);

enum class ValueRateMode { CamMass, Area };
std::string_view to_string(ValueRateMode mode);

double value_rate(const ActivationMap& cam, const BinaryMask& mask,
                  ValueRateMode mode = ValueRateMode::CamMass);

}  // namespace asma
