#include "asma/cam.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace asma {

std::vector<double> combine_channels(const Tensor& a, std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != a.channels())
    throw DimensionError("weight count does not match channel count");
  std::vector<double> out(static_cast<std::size_t>(a.height()) * a.width(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double s = 0.0;
      for (int k = 0; k < a.channels(); ++k) s += weights[k] * a.at(y, x, k);
      out[static_cast<std::size_t>(y) * a.width() + x] = std::max(s, 0.0);
    }
  }
  return out;
}

void normalize_min_max(std::vector<double>& values) {
  if (values.empty()) return;
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi <= 0.0) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  if (hi == lo) {
    std::fill(values.begin(), values.end(), 1.0);
    return;
  }
  double range = hi - lo;
  for (double& v : values) v = (v - lo) / range;
}

std::vector<double> upsample_bilinear(std::span<const double> v, int in_h, int in_w, int out_h,
                                      int out_w) {
  if (v.size() != static_cast<std::size_t>(in_h) * in_w) throw DimensionError("map size mismatch");
  std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
  double sy = static_cast<double>(in_h) / out_h;
  double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, in_h - 1);
    double ty = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, in_w - 1);
      double tx = fx - x0;
      double top = v[y0 * in_w + x0] * (1.0 - tx) + v[y0 * in_w + x1] * tx;
      double bot = v[y1 * in_w + x0] * (1.0 - tx) + v[y1 * in_w + x1] * tx;
      out[static_cast<std::size_t>(y) * out_w + x] = top * (1.0 - ty) + bot * ty;
    }
  }
  return out;
}

ActivationMap cam_from_features(const Tensor& activations, std::span<const double> weights,
                                int out_h, int out_w) {
  double scale = 0.0;
  for (double w : weights) scale = std::max(scale, std::abs(w));
  std::vector<double> unit(weights.begin(), weights.end());
  if (scale > 0.0)
    for (double& w : unit) w /= scale;

  auto raw = combine_channels(activations, unit);
  auto up = upsample_bilinear(raw, activations.height(), activations.width(), out_h, out_w);
  normalize_min_max(up);
  for (double& v : up) v = static_cast<float>(v);

  ActivationMap map;
  map.height = out_h;
  map.width = out_w;
  map.values = std::move(up);
  return map;
}

ActivationMap compute_cam(const Detector& model, const FaceImage& img, int class_index,
                          CamMode mode) {
  if (class_index < 0 || class_index >= kNumClasses) throw ArgumentError("class index out of range");
  if (!model.has_feature_layer())
    throw ConfigError("detector '" + model.identifier() + "' exposes no feature layer");
  model.check_input(img.pixels());

  auto cw = model.class_weights();
  if (mode == CamMode::Auto) mode = cw ? CamMode::Weights : CamMode::Gradient;

  Tensor act = model.feature_activations(img.pixels());
  std::vector<double> weights(act.channels(), 0.0);
  if (mode == CamMode::Weights) {
    if (!cw) throw ConfigError("detector '" + model.identifier() + "' has no class weights");
    for (int k = 0; k < act.channels(); ++k) weights[k] = cw->at(class_index, k);
  } else {
    Tensor g = model.logit_gradient_wrt_features(img.pixels(), class_index);
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        for (int k = 0; k < g.channels(); ++k) weights[k] += g.at(y, x, k);
    for (double& w : weights) w /= static_cast<double>(g.height()) * g.width();
  }

  ActivationMap map = cam_from_features(act, weights, img.height(), img.width());
  map.class_index = class_index;
  map.source_model = model.identifier();
  return map;
}

std::array<double, 3> heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  auto ramp = [](double t) { return std::clamp(1.5 - std::abs(4.0 * t), 0.0, 1.0); };
  return {ramp(v - 0.75), ramp(v - 0.5), ramp(v - 0.25)};
}

FaceImage overlay_cam(const FaceImage& img, const ActivationMap& cam, double opacity) {
  if (!(opacity >= 0.0 && opacity <= 1.0)) throw ArgumentError("opacity must lie in [0,1]");
  if (cam.height != img.height() || cam.width != img.width())
    throw DimensionError("activation map and image shapes differ");
  if (opacity == 0.0) return img;
  Tensor out = img.pixels();
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      auto color = heat_color(cam.at(y, x));
      for (int c = 0; c < out.channels(); ++c)
        out.at(y, x, c) = (1.0 - opacity) * out.at(y, x, c) + opacity * color[c % 3];
    }
  }
  return FaceImage::clamped(std::move(out));
}

void save_activation_map(const ActivationMap& cam, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (double v : cam.values) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
  nlohmann::json meta = {{"height", cam.height},
                         {"width", cam.width},
                         {"dtype", "float32-le"},
                         {"class_index", cam.class_index},
                         {"model", cam.source_model}};
  std::ofstream side(path.string() + ".json");
  if (!side) throw IoError("cannot write sidecar for " + path.string());
  side << meta.dump(2) << '\n';
}

}  // namespace asma
