#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "asma/detector.hpp"
#include "asma/image.hpp"
#include "asma/reference_detector.hpp"
#include "asma/synthetic.hpp"

namespace asma::test {

inline FaceImage random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(h, w, c);
  for (double& v : t.values()) v = u(rng);
  return FaceImage(std::move(t));
}

inline FaceImage constant_image(int h, int w, int c, double v) { return FaceImage(Tensor(h, w, c, v)); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("asma_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Randomly initialised detector; cheap, for structural checks.
inline const ReferenceDetector& untrained_detector() {
  static const ReferenceDetector det("untrained", ReferenceArchitecture{}, 5);
  return det;
}

/// Detector trained with the default recipe, shared by tests that need real
/// decisions. Cached on disk after the first run.
inline const ReferenceDetector& small_trained_detector() {
  static const ReferenceDetector det = [] {
    auto cache = std::filesystem::path(ASMA_TEST_CACHE) / "trained.bin";
    if (std::filesystem::exists(cache)) return ReferenceDetector::load(cache);
    auto train = generate_synthetic_dataset(1000, 1000, 101);
    auto val = generate_synthetic_dataset(100, 100, 102);
    TrainOptions opt;
    opt.seed = 3;
    auto trained = train_reference_detector(train, val, opt, {}, "small");
    std::filesystem::create_directories(cache.parent_path());
    trained.save(cache);
    return trained;
  }();
  return det;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace asma::test
