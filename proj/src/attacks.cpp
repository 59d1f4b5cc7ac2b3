#include "asma/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace asma {

void AttackConfig::validate() const {
  budget.validate();
  if (mask_dilation < 0) throw ConfigError("mask dilation must be non-negative");
  if (jitter < 0.0) throw ConfigError("jitter must be non-negative");
  if (random_start < 0.0 || random_start > 1.0) throw ConfigError("random start must lie in [0,1]");
  if (target_class && (*target_class < 0 || *target_class >= kNumClasses))
    throw ConfigError("target class out of range");
  if (true_label && (*true_label < 0 || *true_label >= kNumClasses))
    throw ConfigError("true label out of range");
  if (cw_binary_steps < 1 || cw_iterations < 0) throw ConfigError("bad C&W settings");
  if (deepfool_max_iterations < 0 || deepfool_overshoot < 0.0) throw ConfigError("bad DeepFool settings");
}

namespace {

int other_class(int c) { return c == kRealClass ? kFakeClass : kRealClass; }

/// Projects into [x - eps, x + eps], then into [0, 1].
void project(Tensor& v, const Tensor& x, double eps) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    double lo = x[i] - eps, hi = x[i] + eps;
    v[i] = std::clamp(std::clamp(v[i], lo, hi), 0.0, 1.0);
  }
}

AttackResult finish(const Detector& model, const FaceImage& x, FaceImage adv, int label) {
  AttackResult r;
  Tensor noise = adv.pixels();
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] -= x.pixels()[i];
  r.global_noise = {std::move(noise)};
  r.mask = BinaryMask(x.height(), x.width(), 1);
  r.adversarial = std::move(adv);
  r.label = label;
  r.adversarial_class = predicted_class(model, r.adversarial);
  r.flipped = r.adversarial_class != label;
  return r;
}

int resolve_label(const Detector& model, const FaceImage& x, const std::optional<int>& explicit_label) {
  return explicit_label ? *explicit_label : predicted_class(model, x);
}

struct FeatureAscent {
  Tensor final_iterate;
  std::vector<double> trace;
  int class_index = 0;
};

FeatureAscent feature_ascent(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  cfg.validate();
  model.check_input(x.pixels());
  FeatureAscent out;
  out.class_index = resolve_label(model, x, cfg.target_class);
  const Tensor& clean = x.pixels();

  FeatureDistanceObjective objective{extract_class_activation_features(model, clean, out.class_index),
                                     cfg.distance};
  Tensor cur = clean;
  out.trace.push_back(evaluate_objective(model, cur, objective));

  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);
  const double eps = cfg.budget.epsilon;
  const double alpha = cfg.budget.step_alpha;

  for (int t = 0; t < cfg.budget.iterations; ++t) {
    Tensor probe = cur;
    if (t == 0 && cfg.jitter > 0.0)
      for (double& v : probe.values()) v += coin(rng) ? cfg.jitter : -cfg.jitter;
    NoiseField g = gradient_wrt_input(model, probe, objective);
    for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += alpha * sign_of(g.delta[i]);
    project(cur, clean, eps);
    out.trace.push_back(evaluate_objective(model, cur, objective));
  }
  out.final_iterate = std::move(cur);
  return out;
}

/// Loss-gradient sign iterations from `start`; shared by FGSM, BIM and PGD.
Tensor sign_iterations(const Detector& model, const Tensor& clean, Tensor start, int label, double eps,
                       double alpha, int iterations) {
  CrossEntropyObjective loss{label};
  for (int t = 0; t < iterations; ++t) {
    NoiseField g = gradient_wrt_input(model, start, loss);
    for (std::size_t i = 0; i < start.size(); ++i) start[i] += alpha * sign_of(g.delta[i]);
    project(start, clean, eps);
  }
  return start;
}

}  // namespace

BinaryMask select_attack_mask(const Detector& model, const FaceImage& x, const LabelMap& labels,
                              const AttackConfig& cfg, int class_index, std::set<int>* regions) {
  if (labels.height() != x.height() || labels.width() != x.width())
    throw DimensionError("label map does not match image");
  std::set<int> selected;
  if (cfg.mask_policy.kind == SelectionPolicy::Kind::Fixed) {
    selected = select_regions({}, cfg.mask_policy);
  } else {
    ActivationMap cam = compute_cam(model, x, class_index, cfg.cam_mode);
    selected = select_regions(score_regions(cam, labels), cfg.mask_policy);
  }
  if (regions) *regions = selected;
  return build_mask(labels, selected, cfg.mask_dilation);
}

AttackResult asma_attack(const Detector& model, const FaceImage& x, const LabelMap& labels,
                         const AttackConfig& cfg) {
  if (labels.height() != x.height() || labels.width() != x.width())
    throw DimensionError("label map does not match image");
  FeatureAscent ascent = feature_ascent(model, x, cfg);
  std::set<int> regions;
  BinaryMask mask = select_attack_mask(model, x, labels, cfg, ascent.class_index, &regions);

  // x + x_g * x_m, evaluated as a per-pixel selection so untouched pixels keep their exact bits.
  const Tensor& clean = x.pixels();
  Tensor noise = ascent.final_iterate;
  for (std::size_t i = 0; i < noise.size(); ++i) noise[i] -= clean[i];
  Tensor composed = clean;
  for (int y = 0; y < clean.height(); ++y)
    for (int xx = 0; xx < clean.width(); ++xx)
      if (mask.at(y, xx))
        for (int c = 0; c < clean.channels(); ++c) composed.at(y, xx, c) = ascent.final_iterate.at(y, xx, c);

  int label = resolve_label(model, x, cfg.true_label);
  AttackResult r = finish(model, x, FaceImage(std::move(composed)), label);
  r.global_noise = {std::move(noise)};
  r.mask = std::move(mask);
  r.regions = std::move(regions);
  r.iterations_run = cfg.budget.iterations;
  r.feature_distance_trace = std::move(ascent.trace);
  return r;
}

AttackResult asma_global_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  FeatureAscent ascent = feature_ascent(model, x, cfg);
  int label = resolve_label(model, x, cfg.true_label);
  AttackResult r = finish(model, x, FaceImage(std::move(ascent.final_iterate)), label);
  r.iterations_run = cfg.budget.iterations;
  r.feature_distance_trace = std::move(ascent.trace);
  return r;
}

AttackResult fgsm_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  model.check_input(x.pixels());
  int label = resolve_label(model, x, cfg.true_label);
  const Tensor& clean = x.pixels();
  const double eps = cfg.budget.epsilon;
  Tensor adv = clean;
  if (eps > 0.0) {
    NoiseField g = gradient_wrt_input(model, clean, CrossEntropyObjective{label});
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += eps * sign_of(g.delta[i]);
    project(adv, clean, eps);
  }
  AttackResult r = finish(model, x, FaceImage(std::move(adv)), label);
  r.iterations_run = eps > 0.0 ? 1 : 0;
  return r;
}

AttackResult bim_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  AttackConfig plain = cfg;
  plain.random_start = 0.0;
  return pgd_attack(model, x, plain);
}

AttackResult pgd_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  cfg.validate();
  model.check_input(x.pixels());
  int label = resolve_label(model, x, cfg.true_label);
  const Tensor& clean = x.pixels();
  const double eps = cfg.budget.epsilon;
  Tensor start = clean;
  if (cfg.random_start > 0.0 && cfg.budget.iterations > 0) {
    std::mt19937_64 rng(cfg.seed);
    double r = cfg.random_start * eps;
    std::uniform_real_distribution<double> u(-r, r);
    for (double& v : start.values()) v += u(rng);
    project(start, clean, eps);
  }
  Tensor adv = sign_iterations(model, clean, std::move(start), label, eps, cfg.budget.step_alpha,
                               cfg.budget.iterations);
  AttackResult r = finish(model, x, FaceImage(std::move(adv)), label);
  r.iterations_run = cfg.budget.iterations;
  return r;
}

AttackResult cw_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  cfg.validate();
  model.check_input(x.pixels());
  int label = resolve_label(model, x, cfg.true_label);
  if (predicted_class(model, x) != label) return finish(model, x, x, label);

  const Tensor& clean = x.pixels();
  const double eps = cfg.budget.epsilon;
  const std::size_t n = clean.size();
  const int other = other_class(label);

  Tensor w0(clean.height(), clean.width(), clean.channels());
  for (std::size_t i = 0; i < n; ++i) w0[i] = std::atanh((2.0 * clean[i] - 1.0) * (1.0 - 1e-6));

  double lower = 0.0, upper = 1e10, c = cfg.cw_initial_const;
  double best_l2 = std::numeric_limits<double>::infinity();
  std::optional<Tensor> best;
  int iterations = 0;

  for (int step = 0; step < cfg.cw_binary_steps; ++step) {
    Tensor w = w0;
    std::vector<double> m(n, 0.0), v(n, 0.0);
    bool success = false;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.cw_iterations; ++it, ++iterations) {
      Tensor xa(clean.height(), clean.width(), clean.channels());
      for (std::size_t i = 0; i < n; ++i) xa[i] = 0.5 * (std::tanh(w[i]) + 1.0);
      Logits z = model.logits(xa);
      double margin = z[label] - z[other];
      double f = std::max(margin, -cfg.cw_kappa);
      double l2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) l2 += (xa[i] - clean[i]) * (xa[i] - clean[i]);
      double loss = l2 + c * f;

      Tensor candidate = xa;
      project(candidate, clean, eps);
      Logits zc = model.logits(candidate);
      if (zc[other] > zc[label]) {
        double cl2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) cl2 += (candidate[i] - clean[i]) * (candidate[i] - clean[i]);
        success = true;
        if (cl2 < best_l2) {
          best_l2 = cl2;
          best = candidate;
        }
      }
      if (it % 10 == 0) {
        if (loss > prev * 0.9999) break;
        prev = loss;
      }

      Tensor grad(clean.height(), clean.width(), clean.channels());
      if (margin > -cfg.cw_kappa) {
        OutputGradient up;
        up.logits[label] = c;
        up.logits[other] = -c;
        grad = model.input_gradient(xa, up);
      }
      double t = it + 1.0;
      double bc1 = 1.0 - std::pow(0.9, t), bc2 = 1.0 - std::pow(0.999, t);
      for (std::size_t i = 0; i < n; ++i) {
        double th = std::tanh(w[i]);
        double gx = grad[i] + 2.0 * (xa[i] - clean[i]);
        double gw = gx * 0.5 * (1.0 - th * th);
        m[i] = 0.9 * m[i] + 0.1 * gw;
        v[i] = 0.999 * v[i] + 0.001 * gw * gw;
        w[i] -= cfg.cw_learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
      }
    }
    if (success) {
      upper = std::min(upper, c);
      c = (lower + upper) / 2.0;
    } else {
      lower = std::max(lower, c);
      c = upper < 1e9 ? (lower + upper) / 2.0 : c * 10.0;
    }
  }

  AttackResult r = finish(model, x, best ? FaceImage::clamped(std::move(*best)) : x, label);
  r.iterations_run = iterations;
  return r;
}

AttackResult deepfool_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  cfg.validate();
  model.check_input(x.pixels());
  int label = resolve_label(model, x, cfg.true_label);
  const Tensor& clean = x.pixels();
  const int other = other_class(label);
  const std::size_t n = clean.size();

  Tensor total(clean.height(), clean.width(), clean.channels());
  Tensor cur = clean;
  int it = 0;
  for (; it < cfg.deepfool_max_iterations; ++it) {
    Logits z = model.logits(cur);
    if (z[other] > z[label]) break;
    // f = z_label - z_other > 0 while correctly classified.
    double f = z[label] - z[other];
    OutputGradient up;
    up.logits[label] = 1.0;
    up.logits[other] = -1.0;
    Tensor g = model.input_gradient(cur, up);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm2 += g[i] * g[i];
    if (norm2 == 0.0) break;
    double step = std::abs(f) / norm2;
    for (std::size_t i = 0; i < n; ++i) total[i] -= step * g[i];
    for (std::size_t i = 0; i < n; ++i) cur[i] = clean[i] + (1.0 + cfg.deepfool_overshoot) * total[i];
  }
  project(cur, clean, cfg.budget.epsilon);
  AttackResult r = finish(model, x, it == 0 ? x : FaceImage(std::move(cur)), label);
  r.iterations_run = it;
  return r;
}

AttackResult random_mask_attack(const Detector& model, const FaceImage& x, const LabelMap& labels,
                                const AttackConfig& cfg) {
  cfg.validate();
  model.check_input(x.pixels());
  int label = resolve_label(model, x, cfg.true_label);
  int cls = resolve_label(model, x, cfg.target_class);
  std::set<int> regions;
  BinaryMask mask = select_attack_mask(model, x, labels, cfg, cls, &regions);

  const Tensor& clean = x.pixels();
  const double eps = cfg.budget.epsilon;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u(-eps, eps);
  Tensor adv = clean;
  for (int y = 0; y < clean.height(); ++y)
    for (int xx = 0; xx < clean.width(); ++xx)
      for (int c = 0; c < clean.channels(); ++c) {
        double d = u(rng);
        if (mask.at(y, xx)) adv.at(y, xx, c) = std::clamp(clean.at(y, xx, c) + d, 0.0, 1.0);
      }
  AttackResult r = finish(model, x, FaceImage(std::move(adv)), label);
  r.mask = std::move(mask);
  r.regions = std::move(regions);
  return r;
}

AttackResult identity_attack(const Detector& model, const FaceImage& x, const AttackConfig& cfg) {
  return finish(model, x, x, resolve_label(model, x, cfg.true_label));
}

std::string_view to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::Asma: return "asma";
    case AttackKind::AsmaGlobal: return "asma_global";
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Bim: return "bim";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::CarliniWagner: return "cw";
    case AttackKind::DeepFool: return "deepfool";
    case AttackKind::RandomMask: return "random_mask";
    case AttackKind::Identity: return "identity";
  }
  return "?";
}

AttackKind parse_attack_kind(std::string_view name) {
  for (auto k : {AttackKind::Asma, AttackKind::AsmaGlobal, AttackKind::Fgsm, AttackKind::Bim,
                 AttackKind::Pgd, AttackKind::CarliniWagner, AttackKind::DeepFool,
                 AttackKind::RandomMask, AttackKind::Identity})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown attack: " + std::string(name));
}

bool needs_label_map(AttackKind kind) {
  return kind == AttackKind::Asma || kind == AttackKind::RandomMask;
}

AttackResult run_attack(AttackKind kind, const Detector& model, const FaceImage& x,
                        const LabelMap* labels, const AttackConfig& cfg) {
  if (needs_label_map(kind) && !labels)
    throw ConfigError(std::string(to_string(kind)) + " needs a label map");
  switch (kind) {
    case AttackKind::Asma: return asma_attack(model, x, *labels, cfg);
    case AttackKind::AsmaGlobal: return asma_global_attack(model, x, cfg);
    case AttackKind::Fgsm: return fgsm_attack(model, x, cfg);
    case AttackKind::Bim: return bim_attack(model, x, cfg);
    case AttackKind::Pgd: return pgd_attack(model, x, cfg);
    case AttackKind::CarliniWagner: return cw_attack(model, x, cfg);
    case AttackKind::DeepFool: return deepfool_attack(model, x, cfg);
    case AttackKind::RandomMask: return random_mask_attack(model, x, *labels, cfg);
    case AttackKind::Identity: return identity_attack(model, x, cfg);
  }
  throw ConfigError("unhandled attack kind");
}

}  // namespace asma
