#pragma once

#include <filesystem>
#include <string>

#include "asma/detector.hpp"

namespace asma {

/// Attention map in [0,1] at image resolution.
struct ActivationMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  int class_index = 0;
  std::string source_model;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const ActivationMap&, const ActivationMap&) = default;
};

enum class CamMode {
  Auto,     ///< class weights when present, gradients otherwise
  Weights,  ///< classic CAM; needs class weights
  Gradient  ///< Grad-CAM
};

/// ReLU(sum_k weight_k * A_k) at feature resolution, not normalized.
std::vector<double> combine_channels(const Tensor& activations, std::span<const double> weights);

/// Min-max normalization to [0,1]. An all-zero map stays zero; a constant
/// positive map becomes all ones.
void normalize_min_max(std::vector<double>& values);

/// Bilinear resize with half-pixel centres (edge clamped).
std::vector<double> upsample_bilinear(std::span<const double> values, int in_h, int in_w, int out_h,
                                      int out_w);

/// Full pipeline for raw activations and weights: combine, upsample,
/// normalize, then round to single precision. Weights are rescaled by their
/// largest magnitude first so positive rescaling leaves the map unchanged.
ActivationMap cam_from_features(const Tensor& activations, std::span<const double> weights, int out_h,
                                int out_w);

ActivationMap compute_cam(const Detector& model, const FaceImage& img, int class_index,
                          CamMode mode = CamMode::Auto);

/// Jet-style colormap; 0 maps to dark blue.
std::array<double, 3> heat_color(double v);

FaceImage overlay_cam(const FaceImage& img, const ActivationMap& cam, double opacity);

/// Raw float32 dump plus a JSON sidecar (<path>.json).
void save_activation_map(const ActivationMap& cam, const std::filesystem::path& path);

}  // namespace asma
