#include "asma/features.hpp"

#include <cmath>
#include <string>

namespace asma {

DistanceKind parse_distance_kind(std::string_view name) {
  if (name == "l2" || name == "l2_features") return DistanceKind::L2;
  if (name == "l1" || name == "l1_features") return DistanceKind::L1;
  if (name == "cosine" || name == "cosine_features") return DistanceKind::Cosine;
  throw ConfigError("unknown distance kind: " + std::string(name));
}

std::string_view to_string(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::L2: return "l2_features";
    case DistanceKind::L1: return "l1_features";
    case DistanceKind::Cosine: return "cosine_features";
  }
  return "?";
}

namespace {

void check_pair(const ClassActivationFeatures& a, const ClassActivationFeatures& b) {
  if (!a.features.same_shape(b.features)) throw DimensionError("feature shapes differ");
  if (a.class_index != b.class_index) throw ArgumentError("features anchored to different classes");
}

struct CosineParts {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
};

CosineParts cosine_parts(const Tensor& a, const Tensor& b) {
  CosineParts p;
  for (std::size_t i = 0; i < a.size(); ++i) {
    p.dot += a[i] * b[i];
    p.na += a[i] * a[i];
    p.nb += b[i] * b[i];
  }
  p.na = std::sqrt(p.na);
  p.nb = std::sqrt(p.nb);
  return p;
}

}  // namespace

double feature_distance(const ClassActivationFeatures& a, const ClassActivationFeatures& b,
                        DistanceKind kind) {
  check_pair(a, b);
  const Tensor& fa = a.features;
  const Tensor& fb = b.features;
  double acc = 0.0;
  switch (kind) {
    case DistanceKind::L2:
      for (std::size_t i = 0; i < fa.size(); ++i) {
        double d = fa[i] - fb[i];
        acc += d * d;
      }
      return acc;
    case DistanceKind::L1:
      for (std::size_t i = 0; i < fa.size(); ++i) acc += std::abs(fa[i] - fb[i]);
      return acc;
    case DistanceKind::Cosine: {
      auto p = cosine_parts(fa, fb);
      if (p.na == 0.0 || p.nb == 0.0) return p.na == p.nb ? 0.0 : 1.0;
      return 1.0 - p.dot / (p.na * p.nb);
    }
  }
  return acc;
}

Tensor feature_distance_gradient(const ClassActivationFeatures& reference,
                                 const ClassActivationFeatures& moving, DistanceKind kind) {
  check_pair(reference, moving);
  const Tensor& r = reference.features;
  const Tensor& m = moving.features;
  Tensor g(m.height(), m.width(), m.channels());
  switch (kind) {
    case DistanceKind::L2:
      for (std::size_t i = 0; i < m.size(); ++i) g[i] = 2.0 * (m[i] - r[i]);
      break;
    case DistanceKind::L1:
      for (std::size_t i = 0; i < m.size(); ++i) {
        double d = m[i] - r[i];
        g[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      break;
    case DistanceKind::Cosine: {
      auto p = cosine_parts(r, m);
      if (p.na == 0.0 || p.nb == 0.0) break;
      // d/dm [1 - r.m / (|r||m|)]
      double inv = 1.0 / (p.na * p.nb);
      double cosv = p.dot * inv;
      for (std::size_t i = 0; i < m.size(); ++i)
        g[i] = -(r[i] * inv - cosv * m[i] / (p.nb * p.nb));
      break;
    }
  }
  return g;
}

}  // namespace asma
