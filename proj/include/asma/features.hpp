#pragma once

#include <string_view>

#include "asma/image.hpp"

namespace asma {

/// Feature-layer activations with each channel scaled by one class's
/// classifier weight.
struct ClassActivationFeatures {
  Tensor features;
  int class_index = 0;
  friend bool operator==(const ClassActivationFeatures&, const ClassActivationFeatures&) = default;
};

enum class DistanceKind { L2, L1, Cosine };

DistanceKind parse_distance_kind(std::string_view name);
std::string_view to_string(DistanceKind kind);

/// L2 is the squared Euclidean distance; cosine is 1 - cos(a, b).
double feature_distance(const ClassActivationFeatures& a, const ClassActivationFeatures& b,
                        DistanceKind kind);

/// d feature_distance(reference, moving) / d moving.features
Tensor feature_distance_gradient(const ClassActivationFeatures& reference,
                                 const ClassActivationFeatures& moving, DistanceKind kind);

}  // namespace asma
