#include "asma/semantic.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "asma/cam.hpp"

namespace asma {

namespace {

constexpr std::array<std::string_view, kNumFaceLabels> kLabelNames = {
    "background", "skin",      "left_brow",    "right_brow", "left_eye", "right_eye",
    "nose",       "upper_lip", "mouth_inside", "lower_lip",  "hair"};

void check_shapes(const ActivationMap& cam, int h, int w) {
  if (cam.height != h || cam.width != w) throw DimensionError("activation map and label/mask shapes differ");
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string_view label_name(int label) {
  if (label < 0 || label >= kNumFaceLabels) throw ArgumentError("label out of range");
  return kLabelNames[label];
}

std::set<int> parse_label_names(std::string_view csv) {
  std::set<int> out;
  std::stringstream ss{std::string(csv)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) continue;
    if (item == "eyes") {
      out.insert({kLeftEye, kRightEye});
    } else if (item == "brows" || item == "eyebrows") {
      out.insert({kLeftBrow, kRightBrow});
    } else if (item == "lips") {
      out.insert({kUpperLip, kLowerLip});
    } else if (item == "face") {
      out.insert(kSkin);
    } else {
      auto it = std::find(kLabelNames.begin(), kLabelNames.end(), item);
      if (it == kLabelNames.end()) throw ConfigError("unknown region name: " + item);
      out.insert(static_cast<int>(it - kLabelNames.begin()));
    }
  }
  return out;
}

std::set<int> default_attack_regions() { return {kLeftBrow, kRightBrow, kLeftEye, kRightEye, kNose}; }

LabelMap::LabelMap(int height, int width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != static_cast<std::size_t>(height) * width)
    throw DimensionError("label data does not match its shape");
  for (auto v : labels_)
    if (v >= kNumFaceLabels) throw FormatError("invalid label value " + std::to_string(v));
}

LabelMap load_label_map(const std::filesystem::path& path,
                        std::optional<std::pair<int, int>> image_dims) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode label map: " + path.string());
  if (raw.depth() != CV_8U) throw FormatError("label map must be 8-bit: " + path.string());
  int ch = raw.channels();
  if (ch != 1 && ch != 3) throw FormatError("label map must be single-channel: " + path.string());

  std::vector<std::uint8_t> labels(static_cast<std::size_t>(raw.rows) * raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<std::uint8_t>(y);
    for (int x = 0; x < raw.cols; ++x) {
      std::uint8_t v = row[x * ch];
      // Palette PNGs decode to three identical channels.
      if (ch == 3 && (row[x * ch + 1] != v || row[x * ch + 2] != v))
        throw FormatError("label map has colour pixels: " + path.string());
      labels[static_cast<std::size_t>(y) * raw.cols + x] = v;
    }
  }
  if (image_dims && (image_dims->first != raw.rows || image_dims->second != raw.cols))
    throw DimensionError("label map " + path.string() + " does not match image dimensions");
  return LabelMap(raw.rows, raw.cols, std::move(labels));
}

void save_label_map(const LabelMap& labels, const std::filesystem::path& path) {
  cv::Mat out(labels.height(), labels.width(), CV_8UC1);
  std::copy(labels.labels().begin(), labels.labels().end(), out.ptr<std::uint8_t>(0));
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write " + path.string());
}

LabelMap parse_with_external_command(const std::string& command, const std::filesystem::path& image,
                                     const std::filesystem::path& out,
                                     std::pair<int, int> image_dims) {
  std::string cmd = command;
  replace_all(cmd, "{image}", "'" + image.string() + "'");
  replace_all(cmd, "{out}", "'" + out.string() + "'");
  int rc = std::system(cmd.c_str());
  if (rc != 0) throw IoError("face-parsing command failed (" + std::to_string(rc) + "): " + cmd);
  return load_label_map(out, image_dims);
}

std::vector<RegionScore> score_regions(const ActivationMap& cam, const LabelMap& labels) {
  check_shapes(cam, labels.height(), labels.width());
  std::array<double, kNumFaceLabels> sum{};
  std::array<std::size_t, kNumFaceLabels> count{};
  auto ls = labels.labels();
  for (std::size_t i = 0; i < ls.size(); ++i) {
    sum[ls[i]] += cam.values[i];
    ++count[ls[i]];
  }
  double total = static_cast<double>(ls.size());
  std::vector<RegionScore> scores;
  for (int l = 0; l < kNumFaceLabels; ++l) {
    RegionScore r{l, 0.0, 0.0};
    if (count[l] > 0) {
      r.score = sum[l] / static_cast<double>(count[l]);
      r.area_fraction = static_cast<double>(count[l]) / total;
    }
    scores.push_back(r);
  }
  std::stable_sort(scores.begin(), scores.end(), [](const RegionScore& a, const RegionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });
  return scores;
}

SelectionPolicy SelectionPolicy::top_k(int k) {
  SelectionPolicy p;
  p.kind = Kind::TopK;
  p.k = k;
  return p;
}

SelectionPolicy SelectionPolicy::fixed(std::set<int> labels) {
  SelectionPolicy p;
  p.kind = Kind::Fixed;
  p.labels = std::move(labels);
  return p;
}

SelectionPolicy SelectionPolicy::threshold_at(double tau) {
  SelectionPolicy p;
  p.kind = Kind::Threshold;
  p.threshold = tau;
  return p;
}

std::string_view to_string(SelectionPolicy::Kind kind) {
  switch (kind) {
    case SelectionPolicy::Kind::TopK: return "topk";
    case SelectionPolicy::Kind::Fixed: return "fixed";
    case SelectionPolicy::Kind::Threshold: return "threshold";
  }
  return "?";
}

SelectionPolicy::Kind parse_policy_kind(std::string_view name) {
  if (name == "topk" || name == "top_k") return SelectionPolicy::Kind::TopK;
  if (name == "fixed") return SelectionPolicy::Kind::Fixed;
  if (name == "threshold") return SelectionPolicy::Kind::Threshold;
  throw ConfigError("unknown selection policy: " + std::string(name));
}

std::set<int> select_regions(const std::vector<RegionScore>& scores, const SelectionPolicy& policy) {
  using Kind = SelectionPolicy::Kind;
  if (policy.kind == Kind::Fixed) {
    if (policy.labels.empty()) throw SelectionError("fixed region set is empty");
    for (int l : policy.labels)
      if (l < 0 || l >= kNumFaceLabels) throw ArgumentError("region label out of range");
    return policy.labels;
  }
  if (policy.kind == Kind::TopK && policy.k <= 0) throw ArgumentError("top_k needs k > 0");

  std::vector<RegionScore> eligible;
  for (const auto& r : scores)
    if (!policy.excluded.contains(r.label) && r.area_fraction > 0.0) eligible.push_back(r);
  std::stable_sort(eligible.begin(), eligible.end(), [](const RegionScore& a, const RegionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.label < b.label;
  });

  std::set<int> out;
  if (policy.kind == Kind::TopK) {
    for (std::size_t i = 0; i < eligible.size() && static_cast<int>(i) < policy.k; ++i)
      out.insert(eligible[i].label);
  } else {
    for (const auto& r : eligible)
      if (r.score >= policy.threshold) out.insert(r.label);
  }
  if (out.empty()) throw SelectionError("no eligible region satisfies the selection policy");
  return out;
}

BinaryMask build_mask(const LabelMap& labels, const std::set<int>& selected, int dilation_px) {
  if (selected.empty()) throw SelectionError("no regions selected");
  if (dilation_px < 0) throw ArgumentError("dilation must be non-negative");
  const int h = labels.height(), w = labels.width();
  BinaryMask base(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) base.set(y, x, selected.contains(labels.at(y, x)));
  if (dilation_px == 0) return base;

  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool on = false;
      for (int dy = -dilation_px; dy <= dilation_px && !on; ++dy) {
        int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -dilation_px; dx <= dilation_px; ++dx) {
          int sx = x + dx;
          if (sx >= 0 && sx < w && base.at(sy, sx)) {
            on = true;
            break;
          }
        }
      }
      out.set(y, x, on);
    }
  }
  return out;
}

std::string_view to_string(ValueRateMode mode) {
  return mode == ValueRateMode::CamMass ? "cam_mass" : "area";
}

double value_rate(const ActivationMap& cam, const BinaryMask& mask, ValueRateMode mode) {
  check_shapes(cam, mask.height(), mask.width());
  auto bits = mask.bits();
  if (mode == ValueRateMode::Area)
    return static_cast<double>(mask.count()) / static_cast<double>(bits.size());
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    total += cam.values[i];
    if (bits[i]) inside += cam.values[i];
  }
  if (total <= 0.0) throw UndefinedRateError("activation map has no mass");
  return inside / total;
}

}  // namespace asma
