#include <doctest.h>

#include <algorithm>

#include "asma/cam.hpp"
#include "asma/semantic.hpp"
#include "helpers.hpp"

using namespace asma;

TEST_CASE("CAM of a 2x2 map matches the bilinear oracle") {
  // cv2.resize(INTER_LINEAR) of [[1,2],[3,4]] to 4x4, min-max normalized.
  const double expected[16] = {0.0,       0.0833333, 0.25,      0.3333333, 0.1666667, 0.25,
                               0.4166667, 0.5,       0.5,       0.5833333, 0.75,      0.8333333,
                               0.6666667, 0.75,      0.9166667, 1.0};
  Tensor act(2, 2, 1, std::vector<double>{1, 2, 3, 4});
  std::vector<double> w{1.0};
  auto cam = cam_from_features(act, w, 4, 4);
  REQUIRE(cam.values.size() == 16);
  for (int i = 0; i < 16; ++i) CHECK(cam.values[i] == doctest::Approx(expected[i]).epsilon(1e-6));

  auto raw = combine_channels(act, w);
  normalize_min_max(raw);
  CHECK(raw[0] == 0.0);
  CHECK(raw[1] == doctest::Approx(1.0 / 3.0));
  CHECK(raw[2] == doctest::Approx(2.0 / 3.0));
  CHECK(raw[3] == 1.0);
}

TEST_CASE("CAM degenerate maps") {
  std::vector<double> w{1.0, -2.0};
  auto zero = cam_from_features(Tensor(3, 3, 2), w, 6, 6);
  for (double v : zero.values) CHECK(v == 0.0);

  Tensor hot(4, 4, 1);
  hot.at(0, 0, 0) = 5.0;
  auto cam = cam_from_features(hot, std::vector<double>{0.7}, 8, 8);
  CHECK(cam.at(0, 0) == 1.0);
  CHECK(cam.at(7, 7) == 0.0);
  CHECK(*std::max_element(cam.values.begin(), cam.values.end()) == 1.0);

  std::vector<double> flat{2.0, 2.0, 2.0};
  normalize_min_max(flat);
  CHECK(flat == std::vector<double>{1.0, 1.0, 1.0});
  CHECK_THROWS_AS(combine_channels(Tensor(2, 2, 3), w), DimensionError);
}

TEST_CASE("CAM is invariant to positive weight scaling") {
  const auto& det = test::untrained_detector();
  auto act = det.feature_activations(test::random_image(48, 48, 3, 4).pixels());
  auto cw = *det.class_weights();
  std::vector<double> w(cw.values.begin(), cw.values.begin() + cw.channels);
  auto base = cam_from_features(act, w, 48, 48);
  for (double s : {0.001, 0.37, 2.0, 1000.0}) {
    std::vector<double> scaled = w;
    for (double& v : scaled) v *= s;
    auto other = cam_from_features(act, scaled, 48, 48);
    CHECK(other.values == base.values);
  }
}

TEST_CASE("compute_cam") {
  const auto& det = test::untrained_detector();
  auto img = test::random_image(48, 48, 3, 6);
  auto cam = compute_cam(det, img, 1);
  CHECK(cam.height == 48);
  CHECK(cam.width == 48);
  CHECK(cam.class_index == 1);
  CHECK(cam.source_model == det.identifier());
  for (double v : cam.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(compute_cam(det, img, 1) == cam);

  // With a GAP head the mean feature gradient equals the class weight up to
  // a positive factor, so Grad-CAM reproduces CAM.
  auto grad = compute_cam(det, img, 1, CamMode::Gradient);
  double worst = 0.0;
  for (std::size_t i = 0; i < cam.values.size(); ++i) worst = std::max(worst, std::abs(grad.values[i] - cam.values[i]));
  CHECK(worst <= 1e-6);

  CHECK_THROWS_AS(compute_cam(det, img, 2), ArgumentError);
  CHECK_THROWS_AS(compute_cam(det, img, -1), ArgumentError);
  LinearDetector lin("lin", 2, 3, std::vector<double>(24, 0.1), {0.0, 0.0});
  CHECK_THROWS_AS(compute_cam(lin, test::random_image(2, 2, 3, 1), 0), ConfigError);
}

TEST_CASE("overlay_cam") {
  auto img = test::random_image(4, 4, 3, 8);
  ActivationMap zero{4, 4, std::vector<double>(16, 0.0), 0, "m"};
  CHECK(overlay_cam(img, zero, 0.0) == img);

  auto cold = overlay_cam(img, zero, 1.0);
  auto c0 = heat_color(0.0);
  CHECK(c0[2] > c0[0]);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) CHECK(cold.pixels().at(y, x, c) == c0[c]);

  ActivationMap mid{4, 4, std::vector<double>(16, 0.6), 0, "m"};
  auto half = overlay_cam(img, mid, 0.5);
  auto c6 = heat_color(0.6);
  for (int c = 0; c < 3; ++c)
    CHECK(half.pixels().at(1, 2, c) == doctest::Approx((img.pixels().at(1, 2, c) + c6[c]) / 2.0));

  ActivationMap small{2, 2, std::vector<double>(4, 0.0), 0, "m"};
  CHECK_THROWS_AS(overlay_cam(img, small, 0.5), DimensionError);
  CHECK_THROWS_AS(overlay_cam(img, zero, 1.5), ArgumentError);
}

TEST_CASE("region scores aggregate to the global mean") {
  const auto& det = test::untrained_detector();
  auto sample = generate_synthetic_dataset(1, 1, 31);
  for (const auto& s : sample) {
    auto cam = compute_cam(det, s.image, 1);
    auto scores = score_regions(cam, s.labels);
    double total = 0.0, mean = 0.0;
    for (const auto& r : scores) total += r.score * r.area_fraction;
    for (double v : cam.values) mean += v;
    mean /= static_cast<double>(cam.values.size());
    CHECK(std::abs(total - mean) <= 1e-6);
  }
}
