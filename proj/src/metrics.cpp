#include "asma/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace asma {

std::string_view to_string(PixelScale scale) { return scale == PixelScale::Unit ? "unit" : "255"; }

PixelScale parse_pixel_scale(std::string_view name) {
  if (name == "unit") return PixelScale::Unit;
  if (name == "255") return PixelScale::Byte;
  throw ConfigError("metric scale must be 'unit' or '255', got " + std::string(name));
}

double max_value(PixelScale scale) { return scale == PixelScale::Unit ? 1.0 : 255.0; }

namespace {

void check_same(const FaceImage& a, const FaceImage& b) {
  if (!a.pixels().same_shape(b.pixels())) throw DimensionError("images differ in shape");
}

}  // namespace

double mse(const FaceImage& a, const FaceImage& b, PixelScale scale) {
  check_same(a, b);
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  if (pa.size() == 0) return 0.0;
  double s = max_value(scale);
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    double d = (pa[i] - pb[i]) * s;
    acc += d * d;
  }
  return acc / static_cast<double>(pa.size());
}

double mae(const FaceImage& a, const FaceImage& b, PixelScale scale) {
  check_same(a, b);
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  if (pa.size() == 0) return 0.0;
  double s = max_value(scale);
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) acc += std::abs(pa[i] - pb[i]) * s;
  return acc / static_cast<double>(pa.size());
}

double psnr_from_mse(double mse_value, PixelScale scale) {
  if (mse_value <= 0.0) return kPsnrCap;
  double m = max_value(scale);
  return 10.0 * std::log10(m * m / mse_value);
}

double psnr(const FaceImage& a, const FaceImage& b, PixelScale scale) {
  return psnr_from_mse(mse(a, b, scale), scale);
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  double half = (size - 1) / 2.0, sum = 0.0;
  for (int i = 0; i < size; ++i) {
    double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& k) {
  int n = static_cast<int>(k.size());
  int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const FaceImage& a, const FaceImage& b, const SsimOptions& o) {
  check_same(a, b);
  const int h = a.height(), w = a.width(), ch = a.channels();
  if (h < o.window || w < o.window) throw DimensionError("image smaller than the SSIM window");
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  auto k = gaussian_kernel(o.window, o.sigma);

  double total = 0.0;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < ch; ++c) {
    std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::size_t i = static_cast<std::size_t>(y) * w + x;
        pa[i] = a.pixels().at(y, x, c);
        pb[i] = b.pixels().at(y, x, c);
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
      }
    auto mu_a = filter_valid(pa, h, w, k);
    auto mu_b = filter_valid(pb, h, w, k);
    auto e_aa = filter_valid(aa, h, w, k);
    auto e_bb = filter_valid(bb, h, w, k);
    auto e_ab = filter_valid(ab, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      double ma = mu_a[i], mb = mu_b[i];
      double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / ch;
}

QualityReport quality_report(const FaceImage& original, const FaceImage& adversarial, PixelScale scale) {
  QualityReport r;
  r.scale = scale;
  r.mse = mse(original, adversarial, scale);
  r.mae = mae(original, adversarial, scale);
  r.psnr = psnr_from_mse(r.mse, scale);
  r.ssim = ssim(original, adversarial);
  return r;
}

}  // namespace asma
