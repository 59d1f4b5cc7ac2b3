#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "asma/image.hpp"
#include "asma/semantic.hpp"

namespace asma {

/// Procedural face with its ground-truth parsing map. Fake samples carry a
/// tinted blend patch over one eye, brow or the nose.
struct SyntheticSample {
  FaceImage image;
  int label = 0;  // kRealClass / kFakeClass
  std::optional<BinaryMask> tamper_region;
  LabelMap labels;
};

struct SyntheticOptions {
  int size = 48;
  double pixel_noise = 0.015;
  double tint_min = 0.30;
  double tint_max = 0.45;
  double texture_amplitude = 0.08;
  /// Tamper disc radius in pixels at 48x48; scaled with `size`.
  double radius_min = 4.0;
  double radius_max = 6.0;
};

/// Real samples first, then fakes. Sample i is a pure function of (seed, i).
std::vector<SyntheticSample> generate_synthetic_dataset(int n_real, int n_fake, std::uint64_t seed,
                                                        const SyntheticOptions& options = {});

SyntheticSample render_synthetic_face(bool fake, std::uint64_t seed,
                                      const SyntheticOptions& options = {});

/// Writes image/label/mask PNGs and manifest.json under `dir`.
void write_dataset(const std::vector<SyntheticSample>& samples, const std::filesystem::path& dir);

/// Reads a manifest written by write_dataset (or by hand, same schema).
std::vector<SyntheticSample> read_dataset(const std::filesystem::path& manifest);

}  // namespace asma
