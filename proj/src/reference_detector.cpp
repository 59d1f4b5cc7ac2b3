#include "asma/reference_detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "asma/synthetic.hpp"

namespace asma {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'M', 'A', 'D', 'E', 'T', '1'};
constexpr const char* kArchitectureName = "asma-reference-cnn";

// Sharp softplus shifted so that f(0) == 0; a smooth stand-in for ReLU.
constexpr double kSharpness = 10.0;
double softplus(double z) {
  double t = kSharpness * z;
  return ((t > 30.0 ? t : std::log1p(std::exp(t))) - std::log(2.0)) / kSharpness;
}
double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-kSharpness * z)); }

// 3x3 convolution, zero padding 1. Parameters are stored [out][ky][kx][in];
// the kernels work on a [ky][kx][in][out] copy so the inner loop runs over
// output channels.
std::vector<double> transpose_kernel(const double* w, int ic, int oc) {
  std::vector<double> t(static_cast<std::size_t>(9) * ic * oc);
  for (int k = 0; k < oc; ++k)
    for (int tap = 0; tap < 9; ++tap)
      for (int i = 0; i < ic; ++i)
        t[(static_cast<std::size_t>(tap) * ic + i) * oc + k] = w[(static_cast<std::size_t>(k) * 9 + tap) * ic + i];
  return t;
}

Tensor conv3x3(const Tensor& in, const double* w, const double* b, int out_ch) {
  const int h = in.height(), wd = in.width(), ic = in.channels();
  auto wt = transpose_kernel(w, ic, out_ch);
  Tensor out(h, wd, out_ch);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      double* o = out.ptr(y, x);
      for (int k = 0; k < out_ch; ++k) o[k] = b[k];
      for (int ky = 0; ky < 3; ++ky) {
        int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int sx = x + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const double* src = in.ptr(sy, sx);
          const double* wtap = wt.data() + static_cast<std::size_t>(ky * 3 + kx) * ic * out_ch;
          for (int i = 0; i < ic; ++i) {
            const double s = src[i];
            const double* wr = wtap + static_cast<std::size_t>(i) * out_ch;
            for (int k = 0; k < out_ch; ++k) o[k] += s * wr[k];
          }
        }
      }
    }
  }
  return out;
}

void conv3x3_backward(const Tensor& in, const Tensor& dout, const double* w, double* dw, double* db,
                      Tensor* din) {
  const int h = in.height(), wd = in.width(), ic = in.channels(), oc = dout.channels();
  auto wt = transpose_kernel(w, ic, oc);
  std::vector<double> dwt(wt.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < wd; ++x) {
      const double* g = dout.ptr(y, x);
      for (int k = 0; k < oc; ++k) db[k] += g[k];
      for (int ky = 0; ky < 3; ++ky) {
        int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int sx = x + kx - 1;
          if (sx < 0 || sx >= wd) continue;
          const double* src = in.ptr(sy, sx);
          double* dsrc = din ? din->ptr(sy, sx) : nullptr;
          std::size_t tap = static_cast<std::size_t>(ky * 3 + kx) * ic * oc;
          for (int i = 0; i < ic; ++i) {
            const double s = src[i];
            double* dr = dwt.data() + tap + static_cast<std::size_t>(i) * oc;
            for (int k = 0; k < oc; ++k) dr[k] += s * g[k];
            if (dsrc) {
              const double* wr = wt.data() + tap + static_cast<std::size_t>(i) * oc;
              double acc = 0.0;
              for (int k = 0; k < oc; ++k) acc += wr[k] * g[k];
              dsrc[i] += acc;
            }
          }
        }
      }
    }
  }
  for (int k = 0; k < oc; ++k)
    for (int tap = 0; tap < 9; ++tap)
      for (int i = 0; i < ic; ++i)
        dw[(static_cast<std::size_t>(k) * 9 + tap) * ic + i] += dwt[(static_cast<std::size_t>(tap) * ic + i) * oc + k];
}

Tensor avg_pool2(const Tensor& in) {
  Tensor out(in.height() / 2, in.width() / 2, in.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < in.channels(); ++c)
        out.at(y, x, c) = 0.25 * (in.at(2 * y, 2 * x, c) + in.at(2 * y + 1, 2 * x, c) +
                                  in.at(2 * y, 2 * x + 1, c) + in.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

Tensor avg_pool2_backward(const Tensor& dout) {
  Tensor din(dout.height() * 2, dout.width() * 2, dout.channels());
  for (int y = 0; y < din.height(); ++y)
    for (int x = 0; x < din.width(); ++x)
      for (int c = 0; c < din.channels(); ++c) din.at(y, x, c) = 0.25 * dout.at(y / 2, x / 2, c);
  return din;
}

}  // namespace

struct ReferenceDetector::Cache {
  std::vector<Tensor> inputs;  // input of each conv stage
  std::vector<Tensor> pre;     // conv output before softplus
  Tensor features;             // softplus output of the last stage
  std::vector<double> pooled;  // global average of features
  Logits logits{};
};

ReferenceDetector::ReferenceDetector(std::string id, ReferenceArchitecture arch, std::uint64_t seed)
    : id_(std::move(id)), arch_(std::move(arch)), seed_(seed) {
  if (arch_.stage_channels.empty() || arch_.stage_channels.size() > 5)
    throw ConfigError("reference detector needs 1 to 5 conv stages");
  int div = 1 << (arch_.stage_channels.size() - 1);
  if (arch_.input_size <= 0 || arch_.input_size % div != 0)
    throw ConfigError("input size must be a positive multiple of " + std::to_string(div));
  init_layout();

  std::mt19937_64 rng(seed);
  int in_ch = 3;
  for (std::size_t s = 0; s < layout_.size(); ++s) {
    int oc = arch_.stage_channels[s];
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (9.0 * in_ch)));
    for (std::size_t i = 0; i < static_cast<std::size_t>(oc) * 9 * in_ch; ++i)
      params_[layout_[s].conv_w + i] = dist(rng);
    in_ch = oc;
  }
  std::normal_distribution<double> fc(0.0, std::sqrt(1.0 / in_ch));
  for (int i = 0; i < kNumClasses * in_ch; ++i) params_[fc_w_ + i] = fc(rng);
}

void ReferenceDetector::init_layout() {
  layout_.clear();
  std::size_t off = 0;
  int in_ch = 3;
  for (int oc : arch_.stage_channels) {
    if (oc <= 0) throw ConfigError("stage channel count must be positive");
    Layout l{off, off + static_cast<std::size_t>(oc) * 9 * in_ch};
    off = l.conv_b + oc;
    layout_.push_back(l);
    in_ch = oc;
  }
  fc_w_ = off;
  fc_b_ = off + static_cast<std::size_t>(kNumClasses) * in_ch;
  params_.assign(fc_b_ + kNumClasses, 0.0);
}

std::vector<std::string> ReferenceDetector::layer_names() const {
  std::vector<std::string> names;
  for (std::size_t s = 0; s < layout_.size(); ++s) names.push_back("conv" + std::to_string(s + 1));
  names.push_back("gap");
  names.push_back("fc");
  return names;
}

std::string ReferenceDetector::feature_layer() const {
  return "conv" + std::to_string(layout_.size());
}

ReferenceDetector::Cache ReferenceDetector::forward(const Tensor& x) const {
  check_input(x);
  Cache c;
  Tensor cur = x;
  for (double& v : cur.values()) v -= 0.5;
  for (std::size_t s = 0; s < layout_.size(); ++s) {
    int oc = arch_.stage_channels[s];
    Tensor pre = conv3x3(cur, &params_[layout_[s].conv_w], &params_[layout_[s].conv_b], oc);
    Tensor act = pre;
    for (double& v : act.values()) v = softplus(v);
    c.inputs.push_back(std::move(cur));
    c.pre.push_back(std::move(pre));
    if (s + 1 < layout_.size()) {
      cur = avg_pool2(act);
    } else {
      c.features = std::move(act);
    }
  }
  const Tensor& f = c.features;
  int ch = f.channels();
  c.pooled.assign(ch, 0.0);
  for (int y = 0; y < f.height(); ++y)
    for (int xx = 0; xx < f.width(); ++xx)
      for (int k = 0; k < ch; ++k) c.pooled[k] += f.at(y, xx, k);
  double inv = 1.0 / (static_cast<double>(f.height()) * f.width());
  for (double& v : c.pooled) v *= inv;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    double z = params_[fc_b_ + cls];
    for (int k = 0; k < ch; ++k) z += params_[fc_w_ + cls * ch + k] * c.pooled[k];
    c.logits[cls] = z;
  }
  return c;
}

Tensor ReferenceDetector::backward(const Cache& c, const OutputGradient& up, std::span<double> pg,
                                   bool want_input_grad) const {
  const Tensor& f = c.features;
  const int ch = f.channels();
  if (!up.features.empty() && !up.features.same_shape(f))
    throw DimensionError("feature gradient shape does not match feature layer");

  std::vector<double> dpool(ch, 0.0);
  for (int cls = 0; cls < kNumClasses; ++cls) {
    double g = up.logits[cls];
    if (!pg.empty()) {
      pg[fc_b_ + cls] += g;
      for (int k = 0; k < ch; ++k) pg[fc_w_ + cls * ch + k] += g * c.pooled[k];
    }
    for (int k = 0; k < ch; ++k) dpool[k] += g * params_[fc_w_ + cls * ch + k];
  }

  double inv = 1.0 / (static_cast<double>(f.height()) * f.width());
  Tensor dact(f.height(), f.width(), ch);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      for (int k = 0; k < ch; ++k)
        dact.at(y, x, k) = dpool[k] * inv + (up.features.empty() ? 0.0 : up.features.at(y, x, k));

  std::vector<double> scratch;
  std::span<double> grads = pg;
  if (grads.empty()) {
    scratch.assign(params_.size(), 0.0);
    grads = scratch;
  }

  Tensor din;
  for (std::size_t s = layout_.size(); s-- > 0;) {
    Tensor dpre = std::move(dact);
    const Tensor& pre = c.pre[s];
    for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] *= sigmoid(pre[i]);
    const Tensor& in = c.inputs[s];
    bool need_din = s > 0 || want_input_grad;
    din = need_din ? Tensor(in.height(), in.width(), in.channels()) : Tensor();
    conv3x3_backward(in, dpre, &params_[layout_[s].conv_w], &grads[layout_[s].conv_w],
                     &grads[layout_[s].conv_b], need_din ? &din : nullptr);
    if (s > 0) dact = avg_pool2_backward(din);
  }
  return din;
}

Logits ReferenceDetector::logits(const Tensor& x) const { return forward(x).logits; }

Tensor ReferenceDetector::feature_activations(const Tensor& x) const { return forward(x).features; }

std::optional<ClassWeights> ReferenceDetector::class_weights() const {
  int ch = arch_.stage_channels.back();
  ClassWeights w;
  w.channels = ch;
  w.values.assign(params_.begin() + fc_w_, params_.begin() + fc_w_ + kNumClasses * ch);
  return w;
}

Tensor ReferenceDetector::logit_gradient_wrt_features(const Tensor& x, int class_index) const {
  if (class_index < 0 || class_index >= kNumClasses) throw ArgumentError("class index out of range");
  check_input(x);
  int ch = arch_.stage_channels.back();
  int side = arch_.input_size >> (arch_.stage_channels.size() - 1);
  Tensor g(side, side, ch);
  double inv = 1.0 / (static_cast<double>(side) * side);
  for (int y = 0; y < side; ++y)
    for (int xx = 0; xx < side; ++xx)
      for (int k = 0; k < ch; ++k) g.at(y, xx, k) = params_[fc_w_ + class_index * ch + k] * inv;
  return g;
}

void ReferenceDetector::scale_class_weights(double factor) {
  int ch = arch_.stage_channels.back();
  for (int i = 0; i < kNumClasses * ch; ++i) params_[fc_w_ + i] *= factor;
}

Tensor ReferenceDetector::input_gradient(const Tensor& x, const OutputGradient& upstream) const {
  Cache c = forward(x);
  return backward(c, upstream, {}, true);
}

double ReferenceDetector::accumulate_gradients(std::span<const Tensor* const> inputs,
                                               std::span<const int> labels,
                                               std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DimensionError("gradient buffer has wrong size");
  double loss = 0.0;
  double scale = 1.0 / static_cast<double>(inputs.size());
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    Cache c = forward(*inputs[n]);
    auto p = softmax(c.logits);
    loss -= std::log(std::max(p[labels[n]], 1e-300));
    OutputGradient up;
    for (int cls = 0; cls < kNumClasses; ++cls)
      up.logits[cls] = scale * (p[cls] - (cls == labels[n] ? 1.0 : 0.0));
    backward(c, up, grad, false);
  }
  return loss * scale;
}

void ReferenceDetector::save(const std::filesystem::path& path) const {
  nlohmann::json header = {
      {"architecture", kArchitectureName},
      {"identifier", id_},
      {"input_size", arch_.input_size},
      {"stage_channels", arch_.stage_channels},
      {"layer_names", layer_names()},
      {"feature_layer", feature_layer()},
      {"seed", seed_},
      {"parameter_count", params_.size()},
      {"dtype", "float64-le"},
      {"report",
       {{"epochs", report_.epochs},
        {"final_loss", report_.final_loss},
        {"train_accuracy", report_.train_accuracy},
        {"val_accuracy", report_.val_accuracy}}}};
  std::string text = header.dump();
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  static_assert(std::endian::native == std::endian::little, "weight files are little-endian");
  std::uint64_t len = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!out) throw IoError("short write to " + path.string());
}

ReferenceDetector ReferenceDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError(path.string() + " is not a detector weight file");
  if (len > (1u << 24)) throw FormatError("implausible header length in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad weight header: ") + e.what());
  }
  if (header.value("architecture", "") != kArchitectureName)
    throw FormatError("unknown architecture in " + path.string());

  ReferenceArchitecture arch;
  arch.input_size = header.at("input_size").get<int>();
  arch.stage_channels = header.at("stage_channels").get<std::vector<int>>();
  ReferenceDetector det(header.at("identifier").get<std::string>(), arch,
                        header.at("seed").get<std::uint64_t>());
  auto count = header.at("parameter_count").get<std::size_t>();
  if (count != det.params_.size()) throw FormatError("parameter count does not match architecture");
  in.read(reinterpret_cast<char*>(det.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw FormatError("truncated weight file " + path.string());
  if (header.contains("report")) {
    const auto& r = header["report"];
    det.report_ = {r.value("epochs", 0), r.value("final_loss", 0.0), r.value("train_accuracy", 0.0),
                   r.value("val_accuracy", 0.0)};
  }
  return det;
}

double accuracy(const Detector& model, const std::vector<SyntheticSample>& samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples)
    if (predicted_class(model, s.image) == s.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

ReferenceDetector train_reference_detector(const std::vector<SyntheticSample>& train,
                                           const std::vector<SyntheticSample>& validation,
                                           const TrainOptions& opt,
                                           const ReferenceArchitecture& arch, std::string id) {
  bool has_real = false, has_fake = false;
  for (const auto& s : train) (s.label == kFakeClass ? has_fake : has_real) = true;
  if (!has_real || !has_fake) throw TrainingError("training data must contain both classes");
  if (opt.epochs < 0 || opt.batch_size <= 0) throw ConfigError("bad training options");

  ReferenceDetector det(std::move(id), arch, opt.seed);
  auto params = det.mutable_parameters();
  std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0), grad(params.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed ^ 0x5eedULL);

  double last_loss = 0.0;
  long step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      std::vector<const Tensor*> inputs;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(&train[order[i]].image.pixels());
        labels.push_back(train[order[i]].label);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      epoch_loss += det.accumulate_gradients(inputs, labels, grad);
      ++batches;
      ++step;
      double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * grad[i];
        v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * grad[i] * grad[i];
        params[i] -= opt.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.adam_epsilon);
      }
    }
    last_loss = batches ? epoch_loss / batches : 0.0;
  }

  TrainingReport report;
  report.epochs = opt.epochs;
  report.final_loss = last_loss;
  report.train_accuracy = accuracy(det, train);
  report.val_accuracy = validation.empty() ? report.train_accuracy : accuracy(det, validation);
  det.set_report(report);
  return det;
}

}  // namespace asma
