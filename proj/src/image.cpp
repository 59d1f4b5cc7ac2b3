#include "asma/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace asma {

Tensor::Tensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height < 0 || width < 0 || channels < 0)
    throw DimensionError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Tensor::Tensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width * channels)
    throw DimensionError("tensor data does not match its shape");
}

FaceImage::FaceImage(Tensor pixels) : pixels_(std::move(pixels)) {
  for (double v : pixels_.values()) {
    if (!(v >= 0.0 && v <= 1.0))
      throw FormatError("pixel value outside [0,1]: " + std::to_string(v));
  }
}

FaceImage FaceImage::clamped(Tensor pixels) {
  for (double& v : pixels.values()) v = std::clamp(v, 0.0, 1.0);
  return FaceImage(std::move(pixels));
}

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width),
      bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (bits_.size() != static_cast<std::size_t>(height) * width)
    throw DimensionError("mask data does not match its shape");
  for (auto b : bits_)
    if (b > 1) throw FormatError("mask values must be 0 or 1");
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

void PerturbationBudget::validate() const {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
  if (!(step_alpha > 0.0)) throw ConfigError("step alpha must be positive");
  if (step_alpha > epsilon && epsilon > 0.0) throw ConfigError("step alpha must not exceed epsilon");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

FaceImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode image: " + path.string());

  double scale = 0.0;
  switch (raw.depth()) {
    case CV_8U: scale = 255.0; break;
    case CV_16U: scale = 65535.0; break;
    default: throw FormatError("unsupported bit depth in " + path.string());
  }

  int ch = raw.channels();
  if (ch != 1 && ch != 3 && ch != 4)
    throw FormatError("unsupported channel count " + std::to_string(ch));

  Tensor t(raw.rows, raw.cols, 3);
  for (int y = 0; y < raw.rows; ++y) {
    for (int x = 0; x < raw.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        // OpenCV stores BGR(A); grayscale replicates.
        int src = ch == 1 ? 0 : 2 - c;
        double v = raw.depth() == CV_8U
                       ? raw.ptr<std::uint8_t>(y)[x * ch + src]
                       : raw.ptr<std::uint16_t>(y)[x * ch + src];
        t.at(y, x, c) = v / scale;
      }
    }
  }
  return FaceImage(std::move(t));
}

void save_image(const FaceImage& img, const std::filesystem::path& path) {
  const Tensor& p = img.pixels();
  int ch = p.channels();
  if (ch != 1 && ch != 3) throw FormatError("can only save 1- or 3-channel images");
  cv::Mat out(p.height(), p.width(), ch == 1 ? CV_8UC1 : CV_8UC3);
  for (int y = 0; y < p.height(); ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < p.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        int dst = ch == 1 ? 0 : 2 - c;
        row[x * ch + dst] = to_byte(p.at(y, x, c));
      }
    }
  }
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

NoiseField apply_mask(const NoiseField& noise, const BinaryMask& mask) {
  const Tensor& d = noise.delta;
  if (d.height() != mask.height() || d.width() != mask.width())
    throw DimensionError("noise and mask spatial shapes differ");
  NoiseField out{Tensor(d.height(), d.width(), d.channels())};
  for (int y = 0; y < d.height(); ++y)
    for (int x = 0; x < d.width(); ++x)
      if (mask.at(y, x))
        for (int c = 0; c < d.channels(); ++c) out.delta.at(y, x, c) = d.at(y, x, c);
  return out;
}

}  // namespace asma
