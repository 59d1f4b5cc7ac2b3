// Acceptance run: one PASS/FAIL line per criterion.
//
//   asma_acceptance [--allow-red N,...] [--work DIR]
//
// Exit status is 0 when every criterion passes, or when the only failures are
// criteria listed in --allow-red.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asma/attacks.hpp"
#include "asma/cam.hpp"
#include "asma/evaluation.hpp"
#include "asma/metrics.hpp"
#include "asma/reference_detector.hpp"
#include "asma/synthetic.hpp"

using namespace asma;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kTrainSeed = 11;
constexpr std::uint64_t kSecondTrainSeed = 23;
constexpr std::uint64_t kDataSeed = 1;
constexpr std::uint64_t kValSeed = 2;
constexpr std::uint64_t kTestSeed = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

ReferenceDetector train(std::uint64_t seed, const std::string& id) {
  auto train_set = generate_synthetic_dataset(1000, 1000, kDataSeed);
  auto val_set = generate_synthetic_dataset(250, 250, kValSeed);
  TrainOptions opt;
  opt.seed = seed;
  return train_reference_detector(train_set, val_set, opt, {}, id);
}

/// First `per_class` correctly classified reals and fakes from the test pool.
std::vector<SyntheticSample> eligible_samples(const Detector& model, int per_class) {
  auto pool = generate_synthetic_dataset(2 * per_class, 2 * per_class, kTestSeed);
  std::vector<SyntheticSample> reals, fakes;
  for (auto& s : pool) {
    if (predicted_class(model, s.image) != s.label) continue;
    auto& bucket = s.label == kRealClass ? reals : fakes;
    if (static_cast<int>(bucket.size()) < per_class) bucket.push_back(std::move(s));
  }
  reals.insert(reals.end(), std::make_move_iterator(fakes.begin()), std::make_move_iterator(fakes.end()));
  return reals;
}

std::vector<FaceImage> images_of(const std::vector<SyntheticSample>& s) {
  std::vector<FaceImage> out;
  for (const auto& x : s) out.push_back(x.image);
  return out;
}

std::vector<int> labels_of(const std::vector<SyntheticSample>& s) {
  std::vector<int> out;
  for (const auto& x : s) out.push_back(x.label);
  return out;
}

double asr_of(const Detector& model, const std::vector<SyntheticSample>& samples,
              const std::vector<AttackResult>& results) {
  std::vector<FaceImage> adv;
  for (const auto& r : results) adv.push_back(r.adversarial);
  return attack_success_rate(model, images_of(samples), adv, labels_of(samples)).asr;
}

// 1. Pixels outside the mask untouched, inside within budget.
Outcome mask_restriction(const Detector& model) {
  auto t0 = std::chrono::steady_clock::now();
  auto samples = generate_synthetic_dataset(100, 100, 41);
  AttackConfig cfg;
  int ok = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    AttackConfig local = cfg;
    local.seed = sample_seed(77, i);
    auto r = asma_attack(model, samples[i].image, samples[i].labels, local);
    const auto& a = r.adversarial.pixels();
    const auto& o = samples[i].image.pixels();
    bool good = true;
    for (int y = 0; y < o.height(); ++y)
      for (int x = 0; x < o.width(); ++x)
        for (int c = 0; c < o.channels(); ++c) {
          double d = std::abs(a.at(y, x, c) - o.at(y, x, c));
          if (!r.mask.at(y, x) && a.at(y, x, c) != o.at(y, x, c)) good = false;
          if (r.mask.at(y, x)) worst = std::max(worst, d);
          if (d > cfg.budget.epsilon + 1e-6) good = false;
        }
    ok += good;
  }
  double t = seconds_since(t0);
  return {ok == 200 && t < 300.0,
          std::to_string(ok) + "/200 runs clean, max |dx| inside " + fmt("%.6f", worst) + ", " + fmt("%.1f", t) + " s"};
}

// 2. Analytic input gradients against central differences.
Outcome gradient_check(const Detector& model) {
  auto t0 = std::chrono::steady_clock::now();
  auto samples = generate_synthetic_dataset(2, 2, 43);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::uniform_int_distribution<std::size_t> pick(0, 48 * 48 * 3 - 1);
  const double h = 1e-3;
  double worst = 0.0;
  int checked = 0;
  for (const auto& s : samples) {
    int cls = predicted_class(model, s.image);
    // Away from the clean image so the feature distance has a non-trivial gradient.
    Tensor x = s.image.pixels();
    for (double& v : x.values()) v = std::clamp(v + jitter(rng), 0.0, 1.0);
    std::vector<Objective> objectives{
        FeatureDistanceObjective{extract_class_activation_features(model, s.image, cls), DistanceKind::L2},
        CrossEntropyObjective{s.label}};
    for (const auto& obj : objectives) {
      Tensor g = gradient_wrt_input(model, x, obj).delta;
      for (int k = 0; k < 30; ++k) {
        std::size_t i = pick(rng);
        Tensor up = x, down = x;
        up[i] += h;
        down[i] -= h;
        double numeric = (evaluate_objective(model, up, obj) - evaluate_objective(model, down, obj)) / (2.0 * h);
        double scale = std::max({std::abs(g[i]), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(g[i] - numeric) / scale);
        ++checked;
      }
    }
  }
  double t = seconds_since(t0);
  return {worst < 1e-3 && checked >= 100 && t < 60.0,
          std::to_string(checked) + " coordinates, max relative error " + fmt("%.2e", worst) + ", " + fmt("%.1f", t) + " s"};
}

// Straightforward sliding-window SSIM: every fully-contained 11x11 Gaussian window, per channel.
double naive_ssim(const Tensor& a, const Tensor& b) {
  const int win = 11, r = 5;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double w[win][win], total = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) total += w[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * sigma * sigma));
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int cy = r; cy < a.height() - r; ++cy)
      for (int cx = r; cx < a.width() - r; ++cx) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            double k = w[i][j] / total;
            double p = a.at(cy - r + i, cx - r + j, c), q = b.at(cy - r + i, cx - r + j, c);
            mx += k * p;
            my += k * q;
            xx += k * p * p;
            yy += k * q * q;
            xy += k * p * q;
          }
        double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return sum / count;
}

// 3. Metrics against the naive reference.
Outcome metric_oracles() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0, worst_identity = 0.0;
  for (int n = 0; n < 20; ++n) {
    Tensor a(32, 32, 3), b(32, 32, 3);
    for (double& v : a.values()) v = u(rng);
    // Mix of correlated and independent pairs.
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = n % 2 ? u(rng) : std::clamp(a[i] + 0.1 * (u(rng) - 0.5), 0.0, 1.0);
    double ref_mse = 0, ref_mae = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ref_mse += (a[i] - b[i]) * (a[i] - b[i]);
      ref_mae += std::abs(a[i] - b[i]);
    }
    ref_mse /= a.size();
    ref_mae /= a.size();
    double ref_psnr = 10.0 * std::log10(1.0 / ref_mse);
    FaceImage fa(a), fb(b);
    worst = std::max({worst, std::abs(mse(fa, fb) - ref_mse), std::abs(mae(fa, fb) - ref_mae),
                      std::abs(psnr(fa, fb) - ref_psnr), std::abs(ssim(fa, fb) - naive_ssim(a, b))});
    for (auto scale : {PixelScale::Unit, PixelScale::Byte}) {
      double m = max_value(scale);
      worst_identity = std::max(worst_identity, std::abs(psnr(fa, fb, scale) - 10.0 * std::log10(m * m / mse(fa, fb, scale))));
    }
  }
  return {worst <= 1e-6 && worst_identity <= 1e-9,
          "max deviation " + fmt("%.2e", worst) + ", PSNR/MSE identity " + fmt("%.2e", worst_identity)};
}

// 4. Bit-exact baseline identities.
Outcome baseline_identities(const Detector& model) {
  auto samples = generate_synthetic_dataset(10, 10, 47);
  std::set<int> all;
  for (int l = 0; l < kNumFaceLabels; ++l) all.insert(l);
  int fgsm = 0, pgd = 0, asma = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    AttackConfig cfg;
    cfg.seed = sample_seed(5, i);
    cfg.true_label = s.label;
    AttackConfig one = cfg;
    one.budget.iterations = 1;
    one.budget.step_alpha = one.budget.epsilon;
    fgsm += fgsm_attack(model, s.image, cfg).adversarial == bim_attack(model, s.image, one).adversarial;
    AttackConfig no_start = cfg;
    no_start.random_start = 0.0;
    pgd += pgd_attack(model, s.image, no_start).adversarial == bim_attack(model, s.image, cfg).adversarial;
    AttackConfig whole = cfg;
    whole.mask_policy = SelectionPolicy::fixed(all);
    asma += asma_attack(model, s.image, s.labels, whole).adversarial == asma_global_attack(model, s.image, cfg).adversarial;
  }
  int n = static_cast<int>(samples.size());
  return {fgsm == n && pgd == n && asma == n,
          "FGSM=BIM(T=1) " + std::to_string(fgsm) + "/" + std::to_string(n) + ", PGD(rs=0)=BIM " + std::to_string(pgd) + "/" +
              std::to_string(n) + ", ASMA(full mask)=global " + std::to_string(asma) + "/" + std::to_string(n)};
}

// 5. ASMA against same-budget random noise in the same mask.
Outcome efficacy(const ReferenceDetector& model, double train_seconds, const std::vector<SyntheticSample>& eligible) {
  auto t0 = std::chrono::steady_clock::now();
  double val = model.report().val_accuracy;
  AttackConfig cfg;
  cfg.seed = 13;
  auto asma = generate_adversarials(AttackKind::Asma, model, eligible, cfg);
  auto random = generate_adversarials(AttackKind::RandomMask, model, eligible, cfg);
  double a = asr_of(model, eligible, asma), r = asr_of(model, eligible, random);
  std::size_t half = eligible.size() / 2;
  std::vector<SyntheticSample> reals(eligible.begin(), eligible.begin() + half), fakes(eligible.begin() + half, eligible.end());
  std::vector<AttackResult> ar(asma.begin(), asma.begin() + half), af(asma.begin() + half, asma.end());
  double gap = 100.0 * (a - r);
  double t = train_seconds + seconds_since(t0);
  return {val >= 0.95 && eligible.size() == 200 && gap >= 30.0 && t < 1200.0,
          "val acc " + fmt("%.3f", val) + ", n " + std::to_string(eligible.size()) + ", ASMA ASR " + fmt("%.3f", a) +
              " (real " + fmt("%.2f", asr_of(model, reals, ar)) + ", fake " + fmt("%.2f", asr_of(model, fakes, af)) +
              "), random-mask ASR " + fmt("%.3f", r) + ", gap " + fmt("%.1f", gap) + " pp (need 30), " + fmt("%.0f", t) + " s"};
}

// 6. Larger budgets: ASR up, PSNR down.
Outcome sweep_trend(const Detector& model, const std::vector<SyntheticSample>& eligible) {
  AttackConfig cfg;
  cfg.seed = 13;
  auto rows = perturbation_sweep(model, eligible, {0.10, 0.15, 0.20, 0.25}, cfg);
  int violations = 0;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && (rows[i].asr < rows[i - 1].asr || rows[i].quality.psnr > rows[i - 1].quality.psnr)) ++violations;
    detail += (i ? "; " : "") + fmt("eps %.2f", rows[i].epsilon) + fmt(" ASR %.3f", rows[i].asr) +
              fmt(" PSNR %.2f", rows[i].quality.psnr);
  }
  return {violations <= 1, detail + ", " + std::to_string(violations) + " adjacent violation(s)"};
}

// 7. White-box beats black-box for ASMA, and ASMA transfers at least as well as BIM.
Outcome transfer_structure(const Detector& a, const Detector& b, const std::vector<SyntheticSample>& eligible,
                           double& seconds) {
  auto t0 = std::chrono::steady_clock::now();
  AttackConfig cfg;
  cfg.seed = 13;
  auto cells = transfer_matrix({&a, &b}, {&a, &b}, {AttackKind::Asma, AttackKind::Bim}, eligible, cfg);
  std::map<std::tuple<std::string, std::string, std::string>, double> asr;
  for (const auto& c : cells) asr[{c.attack, c.source_model, c.target_model}] = c.asr;
  std::string ia = a.identifier(), ib = b.identifier();
  bool diag = asr[{"asma", ia, ia}] >= asr[{"asma", ia, ib}] && asr[{"asma", ib, ib}] >= asr[{"asma", ib, ia}];
  bool vs_bim = asr[{"asma", ia, ib}] >= asr[{"bim", ia, ib}] && asr[{"asma", ib, ia}] >= asr[{"bim", ib, ia}];
  seconds = seconds_since(t0);
  std::string detail;
  for (const char* k : {"asma", "bim"})
    detail += std::string(k) + fmt(" %.2f", asr[{k, ia, ia}]) + fmt("/%.2f", asr[{k, ia, ib}]) +
              fmt("/%.2f", asr[{k, ib, ia}]) + fmt("/%.2f", asr[{k, ib, ib}]) + "  ";
  return {diag && vs_bim, detail + "(AA/AB/BA/BB, source/target)"};
}

// 8. CAM scaling invariance and region-score aggregation.
Outcome cam_properties(const ReferenceDetector& model) {
  auto samples = generate_synthetic_dataset(25, 25, 53);
  int invariant = 0, checks = 0;
  double worst = 0.0;
  for (const auto& s : samples) {
    int cls = predicted_class(model, s.image);
    auto base = compute_cam(model, s.image, cls);
    auto argmax = std::max_element(base.values.begin(), base.values.end()) - base.values.begin();
    for (double f : {1e-3, 0.37, 2.0, 1e3}) {
      ReferenceDetector scaled = model;
      scaled.scale_class_weights(f);
      auto other = compute_cam(scaled, s.image, cls);
      auto other_argmax = std::max_element(other.values.begin(), other.values.end()) - other.values.begin();
      invariant += other.values == base.values && other_argmax == argmax;
      ++checks;
    }
    double agg = 0.0, mean = 0.0;
    for (const auto& r : score_regions(base, s.labels)) agg += r.score * r.area_fraction;
    for (double v : base.values) mean += v;
    mean /= static_cast<double>(base.values.size());
    worst = std::max(worst, std::abs(agg - mean));
  }
  return {invariant == checks && worst <= 1e-6,
          std::to_string(invariant) + "/" + std::to_string(checks) + " scaled maps bit-identical, aggregation error " +
              fmt("%.1e", worst)};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).generic_string()] = ss.str();
  }
  return files;
}

// 9. Every command, run twice with the same config, writes the same bytes.
Outcome determinism(const fs::path& work) {
  const std::string cli = ASMA_CLI_PATH;
  fs::path root = work / "determinism";
  auto script = [&](const fs::path& base) {
    std::string b = base.string();
    return std::vector<std::string>{
        cli + " gen-data --seed 4 --n-real 3 --n-fake 3 --out " + b + "/data",
        cli + " train-toy --seed 4 --n-real 40 --n-fake 40 --epochs 1 --out " + b + "/model",
        cli + " attack --seed 4 --dataset " + b + "/data/manifest.json --model " + b +
            "/model/model.bin --attacks asma,random_mask,pgd,cw --iters 5 --workers 3 --out " + b + "/attack",
        cli + " evaluate --seed 4 --dataset " + b + "/data/manifest.json --model " + b + "/model/model.bin --model " +
            b + "/model/model.bin --attacks asma,fgsm --iters 5 --sweep 0,0.1 --metric-scale 255 --out " + b + "/eval",
        cli + " visualize --attack-dir " + b + "/attack --out " + b + "/vis",
    };
  };
  std::map<std::string, std::string> first;
  int files = 0, differing = 0;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(root);
    for (const auto& cmd : script(root)) {
      int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
      if (rc != 0) return {false, "command failed: " + cmd};
    }
    auto snap = snapshot(root);
    if (run == 0) {
      first = std::move(snap);
      continue;
    }
    files = static_cast<int>(snap.size());
    if (snap.size() != first.size()) return {false, "file sets differ"};
    for (const auto& [name, bytes] : snap)
      if (first[name] != bytes) ++differing;
  }
  int png = 0, csv = 0, json = 0;
  for (const auto& [name, bytes] : first) {
    png += name.ends_with(".png");
    csv += name.ends_with(".csv");
    json += name.ends_with(".json");
  }
  return {differing == 0 && png > 0 && csv > 0 && json > 0,
          std::to_string(files) + " files (" + std::to_string(png) + " png, " + std::to_string(csv) + " csv, " +
              std::to_string(json) + " json), " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> allowed_red;
  fs::path work = fs::temp_directory_path() / "asma_acceptance";
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--allow-red" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) allowed_red.insert(std::stoi(item));
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: asma_acceptance [--allow-red N,...] [--work DIR]\n";
      return 2;
    }
  }
  fs::create_directories(work);

  auto t0 = std::chrono::steady_clock::now();
  ReferenceDetector model = train(kTrainSeed, "toy-a");
  double train_seconds = seconds_since(t0);
  auto eligible = eligible_samples(model, 100);

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"mask restriction", [&] { return mask_restriction(model); }},
      {"gradient correctness", [&] { return gradient_check(model); }},
      {"metric oracles", [&] { return metric_oracles(); }},
      {"baseline identities", [&] { return baseline_identities(model); }},
      {"toy end-to-end efficacy", [&] { return efficacy(model, train_seconds, eligible); }},
      {"epsilon sweep trend", [&] { return sweep_trend(model, eligible); }},
      {"transfer structure",
       [&] {
         ReferenceDetector second = train(kSecondTrainSeed, "toy-b");
         double seconds = 0.0;
         return transfer_structure(model, second, eligible, seconds);
       }},
      {"CAM properties", [&] { return cam_properties(model); }},
      {"determinism", [&] { return determinism(work); }},
  };

  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    int id = static_cast<int>(i) + 1;
    bool tolerated = !o.pass && allowed_red.contains(id);
    if (!o.pass && !tolerated) ++unexpected;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": " << o.detail
              << (tolerated ? "  [known red]" : "") << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
