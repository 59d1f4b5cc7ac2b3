#include <doctest.h>

#include <cmath>

#include "asma/attacks.hpp"
#include "asma/metrics.hpp"
#include "asma/synthetic.hpp"
#include "helpers.hpp"

using namespace asma;

namespace {

// One-pixel detector whose feature is the pixel itself. The feature distance
// to the clean image is (x - x0)^2, flat at x0.
class QuadraticDetector final : public Detector {
 public:
  std::string identifier() const override { return "quad"; }
  int input_size() const override { return 1; }
  int input_channels() const override { return 1; }
  Logits logits(const Tensor& x) const override { return {0.0, 4.0 * (x[0] - 0.5)}; }
  bool has_feature_layer() const override { return true; }
  std::string feature_layer() const override { return "identity"; }
  Tensor feature_activations(const Tensor& x) const override { return x; }
  std::optional<ClassWeights> class_weights() const override { return ClassWeights{1, {1.0, 1.0}}; }
  Tensor logit_gradient_wrt_features(const Tensor&, int c) const override { return Tensor(1, 1, 1, c == 1 ? 4.0 : 0.0); }
  Tensor input_gradient(const Tensor&, const OutputGradient& up) const override {
    double g = 4.0 * up.logits[1];
    if (!up.features.empty()) g += up.features[0];
    return Tensor(1, 1, 1, g);
  }
};

FaceImage pixel(double v) { return FaceImage(Tensor(1, 1, 1, v)); }
LabelMap nose_pixel() { return LabelMap(1, 1, {kNose}); }

const std::vector<SyntheticSample>& faces() {
  static const auto data = generate_synthetic_dataset(4, 4, 404);
  return data;
}

void check_masked_invariants(const FaceImage& x, const AttackResult& r, double eps) {
  const auto& a = r.adversarial.pixels();
  const auto& o = x.pixels();
  for (int y = 0; y < o.height(); ++y)
    for (int xx = 0; xx < o.width(); ++xx)
      for (int c = 0; c < o.channels(); ++c) {
        double d = a.at(y, xx, c) - o.at(y, xx, c);
        if (!r.mask.at(y, xx)) REQUIRE(d == 0.0);
        REQUIRE(std::abs(d) <= eps + 1e-6);
        REQUIRE(a.at(y, xx, c) >= 0.0);
        REQUIRE(a.at(y, xx, c) <= 1.0);
      }
}

}  // namespace

TEST_CASE("zero iterations and zero budget are identities") {
  const auto& det = test::untrained_detector();
  const auto& s = faces()[5];
  AttackConfig cfg;
  cfg.budget.iterations = 0;
  auto r = asma_attack(det, s.image, s.labels, cfg);
  CHECK(r.adversarial == s.image);
  for (double v : r.global_noise.delta.values()) CHECK(v == 0.0);
  CHECK(r.feature_distance_trace == std::vector<double>{0.0});
  CHECK(r.flipped == (predicted_class(det, s.image) != r.label));
  CHECK(bim_attack(det, s.image, cfg).adversarial == s.image);

  AttackConfig zero;
  zero.budget.epsilon = 0.0;
  CHECK(fgsm_attack(det, s.image, zero).adversarial == s.image);
}

TEST_CASE("ASMA keeps pixels outside the mask and stays in budget") {
  const auto& det = test::small_trained_detector();
  for (std::size_t i = 0; i < faces().size(); ++i) {
    const auto& s = faces()[i];
    AttackConfig cfg;
    cfg.seed = i;
    auto r = asma_attack(det, s.image, s.labels, cfg);
    check_masked_invariants(s.image, r, cfg.budget.epsilon);
    CHECK(r.regions == default_attack_regions());
    CHECK(r.mask == build_mask(s.labels, default_attack_regions()));
    CHECK(r.feature_distance_trace.size() == 21);
    CHECK(r.feature_distance_trace[0] == 0.0);
    CHECK(r.iterations_run == 20);
    CHECK(r.adversarial_class == predicted_class(det, r.adversarial));

    auto rnd = random_mask_attack(det, s.image, s.labels, cfg);
    check_masked_invariants(s.image, rnd, cfg.budget.epsilon);
    CHECK(rnd.mask == r.mask);
  }
}

TEST_CASE("feature ascent on a flat quadratic needs the jitter") {
  QuadraticDetector quad;
  AttackConfig cfg;
  cfg.jitter = 0.0;
  auto still = asma_attack(quad, pixel(0.3), nose_pixel(), cfg);
  CHECK(still.adversarial == pixel(0.3));
  for (double d : still.feature_distance_trace) CHECK(d == 0.0);

  cfg.jitter = 1e-3;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    cfg.seed = seed;
    auto r = asma_attack(quad, pixel(0.3), nose_pixel(), cfg);
    double moved = r.adversarial.pixels()[0] - 0.3;
    CHECK(std::abs(std::abs(moved) - 0.15) <= 1e-12);
    const auto& tr = r.feature_distance_trace;
    REQUIRE(tr.size() == 21);
    CHECK(tr[0] == 0.0);
    for (std::size_t t = 1; t < tr.size(); ++t) CHECK(tr[t] >= tr[t - 1]);
    CHECK(tr.back() == doctest::Approx(0.0225).epsilon(1e-9));
  }

  // Background-only selection leaves the pixel alone.
  cfg.mask_policy = SelectionPolicy::fixed({kBackground});
  CHECK(asma_attack(quad, pixel(0.3), nose_pixel(), cfg).adversarial == pixel(0.3));
}

TEST_CASE("baseline identities are bit-exact") {
  const auto& det = test::small_trained_detector();
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& s = faces()[i * 2];
    AttackConfig cfg;
    cfg.seed = 17 + i;

    AttackConfig one = cfg;
    one.budget.iterations = 1;
    one.budget.step_alpha = one.budget.epsilon;
    CHECK(fgsm_attack(det, s.image, cfg).adversarial == bim_attack(det, s.image, one).adversarial);

    AttackConfig no_start = cfg;
    no_start.random_start = 0.0;
    CHECK(pgd_attack(det, s.image, no_start).adversarial == bim_attack(det, s.image, cfg).adversarial);

    AttackConfig everything = cfg;
    std::set<int> all;
    for (int l = 0; l < kNumFaceLabels; ++l) all.insert(l);
    everything.mask_policy = SelectionPolicy::fixed(all);
    CHECK(asma_attack(det, s.image, s.labels, everything).adversarial ==
          asma_global_attack(det, s.image, cfg).adversarial);
  }
}

TEST_CASE("attacks are deterministic in the seed") {
  const auto& det = test::untrained_detector();
  const auto& s = faces()[6];
  AttackConfig cfg;
  cfg.seed = 99;
  CHECK(asma_attack(det, s.image, s.labels, cfg).adversarial == asma_attack(det, s.image, s.labels, cfg).adversarial);
  CHECK(pgd_attack(det, s.image, cfg).adversarial == pgd_attack(det, s.image, cfg).adversarial);
  AttackConfig other = cfg;
  other.seed = 100;
  CHECK_FALSE(pgd_attack(det, s.image, cfg).adversarial == pgd_attack(det, s.image, other).adversarial);
  CHECK_FALSE(random_mask_attack(det, s.image, s.labels, cfg).adversarial ==
              random_mask_attack(det, s.image, s.labels, other).adversarial);
}

TEST_CASE("loss-based baselines stay in the epsilon band") {
  const auto& det = test::small_trained_detector();
  const auto& s = faces()[7];
  AttackConfig cfg;
  cfg.cw_binary_steps = 3;
  cfg.cw_iterations = 30;
  for (auto kind : {AttackKind::Fgsm, AttackKind::Bim, AttackKind::Pgd, AttackKind::AsmaGlobal,
                    AttackKind::CarliniWagner, AttackKind::DeepFool}) {
    auto r = run_attack(kind, det, s.image, nullptr, cfg);
    CHECK(test::max_abs_diff(r.adversarial.pixels(), s.image.pixels()) <= cfg.budget.epsilon + 1e-12);
    CHECK(r.mask.count() == 48u * 48u);
  }
  CHECK_THROWS_AS(run_attack(AttackKind::Asma, det, s.image, nullptr, cfg), ConfigError);
}

TEST_CASE("closed forms on a linear detector") {
  // 2x2 grey input; class 1 gains from the first two pixels.
  std::vector<double> w{0.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, -1.0};
  LinearDetector lin("lin", 2, 1, w, {0.2, 0.0});
  FaceImage x(Tensor(2, 2, 1, 0.5));
  REQUIRE(predicted_class(lin, x) == kRealClass);

  AttackConfig cfg;
  cfg.true_label = kRealClass;
  auto f = fgsm_attack(lin, x, cfg);
  CHECK(f.adversarial.pixels()[0] == doctest::Approx(0.65).epsilon(1e-12));
  CHECK(f.adversarial.pixels()[2] == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(f.flipped);

  // Margin 0.2 over a gradient of norm^2 4: the step is 0.05 per pixel, overshoot 2%.
  cfg.budget.epsilon = 1.0;
  auto d = deepfool_attack(lin, x, cfg);
  CHECK(d.iterations_run == 1);
  CHECK(d.adversarial.pixels()[0] == doctest::Approx(0.5 + 0.05 * 1.02).epsilon(1e-12));
  CHECK(d.adversarial.pixels()[3] == doctest::Approx(0.5 - 0.05 * 1.02).epsilon(1e-12));
  CHECK(d.flipped);

  // Already misclassified: nothing to do.
  cfg.true_label = kFakeClass;
  auto df = deepfool_attack(lin, x, cfg);
  CHECK(df.iterations_run == 0);
  CHECK(df.adversarial == x);
  auto cw = cw_attack(lin, x, cfg);
  CHECK(cw.adversarial == x);
  CHECK(cw.flipped);
}

TEST_CASE("attack names and config validation") {
  for (auto k : {AttackKind::Asma, AttackKind::AsmaGlobal, AttackKind::Fgsm, AttackKind::Bim, AttackKind::Pgd,
                 AttackKind::CarliniWagner, AttackKind::DeepFool, AttackKind::RandomMask, AttackKind::Identity})
    CHECK(parse_attack_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_attack_kind("jsma"), ConfigError);

  AttackConfig cfg;
  cfg.budget.step_alpha = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.random_start = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.target_class = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("C&W finds smaller perturbations than PGD") {
  const auto& det = test::small_trained_detector();
  auto batch = generate_synthetic_dataset(25, 25, 707);
  double cw_mse = 0.0, pgd_mse = 0.0;
  int both = 0, cw_flips = 0, pgd_flips = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    AttackConfig cfg;
    cfg.seed = i;
    cfg.true_label = batch[i].label;
    cfg.cw_binary_steps = 4;
    auto c = cw_attack(det, batch[i].image, cfg);
    auto p = pgd_attack(det, batch[i].image, cfg);
    cw_flips += c.flipped;
    pgd_flips += p.flipped;
    if (!c.flipped || !p.flipped) continue;
    ++both;
    cw_mse += mse(batch[i].image, c.adversarial);
    pgd_mse += mse(batch[i].image, p.adversarial);
  }
  MESSAGE("flips: cw " << cw_flips << ", pgd " << pgd_flips << ", both " << both << "; summed mse: cw " << cw_mse
                       << ", pgd " << pgd_mse);
  REQUIRE(both >= 10);
  CHECK(cw_mse < pgd_mse);
}
