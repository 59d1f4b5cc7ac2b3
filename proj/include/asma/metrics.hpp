#pragma once

#include <optional>
#include <string_view>

#include "asma/image.hpp"

namespace asma {

/// Scale in which pixel differences are reported: [0,1] or [0,255].
enum class PixelScale { Unit, Byte };

std::string_view to_string(PixelScale scale);
PixelScale parse_pixel_scale(std::string_view name);
double max_value(PixelScale scale);

/// PSNR reported for identical images.
inline constexpr double kPsnrCap = 100.0;

double mse(const FaceImage& a, const FaceImage& b, PixelScale scale = PixelScale::Unit);
double mae(const FaceImage& a, const FaceImage& b, PixelScale scale = PixelScale::Unit);
double psnr(const FaceImage& a, const FaceImage& b, PixelScale scale = PixelScale::Unit);
/// PSNR from an MSE already expressed in `scale`.
double psnr_from_mse(double mse_value, PixelScale scale);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully-contained Gaussian windows, averaged over channels.
double ssim(const FaceImage& a, const FaceImage& b, const SsimOptions& options = {});

struct QualityReport {
  double mse = 0.0;
  double mae = 0.0;
  double psnr = kPsnrCap;
  double ssim = 1.0;
  std::optional<double> value_rate;
  PixelScale scale = PixelScale::Unit;
};

QualityReport quality_report(const FaceImage& original, const FaceImage& adversarial,
                             PixelScale scale = PixelScale::Unit);

}  // namespace asma
