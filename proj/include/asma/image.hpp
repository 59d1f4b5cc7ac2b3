#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "asma/errors.hpp"

namespace asma {

/// Dense H x W x C array of doubles stored in HWC order.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int height, int width, int channels, double fill = 0.0);
  Tensor(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  const double* ptr(int y, int x) const { return data_.data() + index(y, x, 0); }
  double* ptr(int y, int x) { return data_.data() + index(y, x, 0); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Image with every pixel in [0,1]. RGB channel order.
class FaceImage {
 public:
  FaceImage() = default;
  /// Throws FormatError when a value falls outside [0,1].
  explicit FaceImage(Tensor pixels);

  /// Clamps into [0,1] instead of validating.
  static FaceImage clamped(Tensor pixels);

  const Tensor& pixels() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  int channels() const { return pixels_.channels(); }

  friend bool operator==(const FaceImage&, const FaceImage&) = default;

 private:
  Tensor pixels_;
};

/// Signed perturbation paired with a FaceImage of the same shape.
struct NoiseField {
  Tensor delta;
  friend bool operator==(const NoiseField&, const NoiseField&) = default;
};

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  /// Throws FormatError unless every value is 0 or 1.
  BinaryMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool on) { bits_[static_cast<std::size_t>(y) * width_ + x] = on ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::size_t count() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct PerturbationBudget {
  double epsilon = 0.15;
  double step_alpha = 0.015;
  int iterations = 20;

  /// Throws ConfigError on epsilon outside [0,1], alpha <= 0, alpha > epsilon > 0 or T < 0.
  void validate() const;
};

FaceImage load_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG (or JPEG when the extension asks for it).
void save_image(const FaceImage& img, const std::filesystem::path& path);

/// Zeroes the noise wherever the mask is 0; the mask is broadcast over channels.
NoiseField apply_mask(const NoiseField& noise, const BinaryMask& mask);

/// Quantizes a [0,1] value to 8 bits with round-half-up.
std::uint8_t to_byte(double v);

}  // namespace asma
