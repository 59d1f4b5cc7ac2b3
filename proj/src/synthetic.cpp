#include "asma/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "asma/detector.hpp"

namespace asma {

namespace {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double u, double v) const {
    double a = (u - cx) / rx, b = (v - cy) / ry;
    return a * a + b * b <= 1.0;
  }
};

using Rgb = std::array<double, 3>;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SyntheticSample render_synthetic_face(bool fake, std::uint64_t seed, const SyntheticOptions& opt) {
  const int n = opt.size;
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  Rgb bg{uni(0.15, 0.85), uni(0.15, 0.85), uni(0.15, 0.85)};
  double bg_slope = uni(-0.15, 0.15);
  double tone = uni(0.45, 0.85);
  Rgb skin{tone, tone * uni(0.72, 0.85), tone * uni(0.55, 0.7)};
  Rgb hair{uni(0.05, 0.45), uni(0.03, 0.3), uni(0.02, 0.2)};
  Rgb brow{hair[0] * 0.8, hair[1] * 0.8, hair[2] * 0.8};
  Rgb iris{uni(0.1, 0.5), uni(0.1, 0.45), uni(0.1, 0.5)};
  Rgb lip{uni(0.55, 0.85), uni(0.2, 0.4), uni(0.25, 0.4)};

  Ellipse face{0.5 + uni(-0.03, 0.03), 0.55 + uni(-0.03, 0.03), uni(0.30, 0.35), uni(0.38, 0.42)};
  Ellipse hair_shell{face.cx, face.cy - 0.02, face.rx + 0.05, face.ry + 0.06};
  double hairline = face.cy - face.ry * uni(0.62, 0.72);
  double eye_dx = uni(0.12, 0.15);
  double eye_v = face.cy - uni(0.09, 0.13);
  Ellipse left_eye{face.cx - eye_dx, eye_v, uni(0.065, 0.08), uni(0.035, 0.045)};
  Ellipse right_eye{face.cx + eye_dx, eye_v, left_eye.rx, left_eye.ry};
  double brow_v = eye_v - uni(0.075, 0.09);
  Ellipse left_brow{left_eye.cx, brow_v, uni(0.075, 0.09), uni(0.022, 0.03)};
  Ellipse right_brow{right_eye.cx, brow_v, left_brow.rx, left_brow.ry};
  Ellipse nose{face.cx, face.cy + uni(0.01, 0.05), uni(0.04, 0.055), uni(0.08, 0.1)};
  Ellipse mouth{face.cx, face.cy + uni(0.2, 0.24), uni(0.1, 0.13), uni(0.04, 0.05)};
  double mouth_gap = mouth.ry * 0.3;

  Tensor img(n, n, 3);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(n) * n, kBackground);
  std::normal_distribution<double> noise(0.0, opt.pixel_noise);
  double light = uni(-0.05, 0.05);

  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double u = (x + 0.5) / n, v = (y + 0.5) / n;
      int label = kBackground;
      Rgb c{bg[0] + bg_slope * (u - 0.5), bg[1] + bg_slope * (v - 0.5), bg[2]};
      if (hair_shell.contains(u, v) && v < face.cy - 0.1 * face.ry) {
        label = kHair;
        c = hair;
      }
      if (face.contains(u, v)) {
        if (v < hairline) {
          label = kHair;
          c = hair;
        } else {
          label = kSkin;
          double shade = 1.0 - 0.15 * std::hypot(u - face.cx, v - face.cy);
          c = {skin[0] * shade, skin[1] * shade, skin[2] * shade};
          if (nose.contains(u, v)) {
            label = kNose;
            double side = (u - nose.cx) / nose.rx;
            c = {c[0] * (0.9 + 0.06 * side), c[1] * (0.88 + 0.06 * side), c[2] * (0.88 + 0.06 * side)};
          }
          for (auto [e, l] : {std::pair{left_eye, kLeftEye}, std::pair{right_eye, kRightEye}}) {
            if (e.contains(u, v)) {
              label = l;
              double r = std::hypot(u - e.cx, v - e.cy);
              c = r < e.ry * 0.9 ? iris : Rgb{0.92, 0.92, 0.9};
              if (r < e.ry * 0.4) c = {0.05, 0.05, 0.05};
            }
          }
          for (auto [b, l] : {std::pair{left_brow, kLeftBrow}, std::pair{right_brow, kRightBrow}}) {
            if (b.contains(u, v)) {
              label = l;
              c = brow;
            }
          }
          if (mouth.contains(u, v)) {
            double dv = v - mouth.cy;
            if (dv < -mouth_gap) {
              label = kUpperLip;
              c = lip;
            } else if (dv > mouth_gap) {
              label = kLowerLip;
              c = {lip[0] * 0.9, lip[1] * 0.9, lip[2] * 0.9};
            } else {
              label = kMouthInside;
              c = {0.25, 0.05, 0.05};
            }
          }
        }
      }
      labels[static_cast<std::size_t>(y) * n + x] = static_cast<std::uint8_t>(label);
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch] + light + noise(rng);
    }
  }

  SyntheticSample s;
  s.label = fake ? kFakeClass : kRealClass;
  s.labels = LabelMap(n, n, labels);

  if (fake) {
    static constexpr std::array<int, 5> kTargets{kLeftBrow, kRightBrow, kLeftEye, kRightEye, kNose};
    int target = kTargets[std::uniform_int_distribution<int>(0, 4)(rng)];
    double sy = 0.0, sx = 0.0;
    int cnt = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        if (labels[static_cast<std::size_t>(y) * n + x] == target) {
          sy += y;
          sx += x;
          ++cnt;
        }
    double cy = cnt ? sy / cnt : n / 2.0;
    double cx = cnt ? sx / cnt : n / 2.0;
    double radius = uni(opt.radius_min, opt.radius_max) * n / 48.0;
    double strength = uni(opt.tint_min, opt.tint_max);
    Rgb tint{strength, -0.6 * strength, 0.8 * strength};
    double jitter = uni(0.5, 1.0);

    BinaryMask region(n, n);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        double d = std::hypot(y - cy, x - cx);
        if (d > radius) continue;
        region.set(y, x, true);
        // Soft-edged tint blend with a faint checker texture.
        double w = std::min(1.0, 1.5 * (1.0 - d / radius) + 0.2);
        double tex = ((x + y) % 2 == 0 ? 1.0 : -1.0) * opt.texture_amplitude * jitter;
        for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) += w * tint[ch] + tex;
      }
    }
    s.tamper_region = std::move(region);
  }

  s.image = FaceImage::clamped(std::move(img));
  return s;
}

std::vector<SyntheticSample> generate_synthetic_dataset(int n_real, int n_fake, std::uint64_t seed,
                                                        const SyntheticOptions& options) {
  if (n_real < 0 || n_fake < 0) throw ArgumentError("sample counts must be non-negative");
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(n_real) + n_fake);
  for (int i = 0; i < n_real + n_fake; ++i)
    out.push_back(render_synthetic_face(i >= n_real, mix_seed(seed, static_cast<std::uint64_t>(i)), options));
  return out;
}

void write_dataset(const std::vector<SyntheticSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%05zu", i);
    std::string image = std::string("images/") + stem + ".png";
    std::string labels = std::string("labels/") + stem + ".png";
    save_image(samples[i].image, dir / image);
    save_label_map(samples[i].labels, dir / labels);
    nlohmann::json item = {{"image", image},
                           {"labels", labels},
                           {"label", samples[i].label == kFakeClass ? "fake" : "real"}};
    if (samples[i].tamper_region) {
      std::string mask = std::string("masks/") + stem + ".png";
      const BinaryMask& m = *samples[i].tamper_region;
      Tensor t(m.height(), m.width(), 1);
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) t.at(y, x, 0) = m.at(y, x);
      save_image(FaceImage(std::move(t)), dir / mask);
      item["mask"] = mask;
    }
    items.push_back(std::move(item));
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << nlohmann::json{{"samples", items}}.dump(2) << '\n';
}

std::vector<SyntheticSample> read_dataset(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad dataset manifest: " + std::string(e.what()));
  }
  auto root = manifest.parent_path();
  std::vector<SyntheticSample> out;
  for (const auto& item : doc.at("samples")) {
    SyntheticSample s;
    s.image = load_image(root / item.at("image").get<std::string>());
    std::string label = item.value("label", "fake");
    if (label != "real" && label != "fake") throw FormatError("label must be real or fake");
    s.label = label == "fake" ? kFakeClass : kRealClass;
    if (item.contains("labels"))
      s.labels = load_label_map(root / item["labels"].get<std::string>(),
                                std::pair{s.image.height(), s.image.width()});
    if (item.contains("mask")) {
      FaceImage m = load_image(root / item["mask"].get<std::string>());
      BinaryMask mask(m.height(), m.width());
      for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) mask.set(y, x, m.pixels().at(y, x, 0) > 0.5);
      s.tamper_region = std::move(mask);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace asma
