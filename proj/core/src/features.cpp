#include "evpr/features.hpp"

#include <algorithm>
#include <cmath>

namespace evpr {

void KeypointSet::check() const {
  if (descriptors.size() != points.size() * descriptor_dim) {
    throw Error(ErrorCode::ShapeMismatch, "keypoint count does not match descriptor payload");
  }
}

GlobalDescriptor gem_pool(const GlobalFeatureMap& map, double gamma) {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidArgument, "GeM gamma must be >= 1");
  const uint32_t h = map.height(), w = map.width(), c = map.channels();
  if (h == 0 || w == 0 || c == 0 || map.data.dim(3) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "feature map must be H x W x C with non-zero extents");
  }
  const size_t spatial = static_cast<size_t>(h) * w;
  auto values = map.data.values();

  // Per-channel max, used to rescale before exponentiation so large gamma does not overflow.
  std::vector<double> peak(c, 0.0);
  for (size_t s = 0; s < spatial; ++s) {
    for (uint32_t ch = 0; ch < c; ++ch) {
      const double x = values[s * c + ch];
      if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteInput, "feature map contains NaN or Inf");
      peak[ch] = std::max(peak[ch], x);
    }
  }

  std::vector<double> acc(c, 0.0);
  for (size_t s = 0; s < spatial; ++s) {
    for (uint32_t ch = 0; ch < c; ++ch) {
      if (peak[ch] <= 0.0) continue;
      const double x = std::max(0.0, static_cast<double>(values[s * c + ch])) / peak[ch];
      acc[ch] += gamma == 1.0 ? x : std::pow(x, gamma);
    }
  }

  GlobalDescriptor out;
  out.values.resize(c, 0.0);
  for (uint32_t ch = 0; ch < c; ++ch) {
    if (peak[ch] <= 0.0) continue;
    const double mean = acc[ch] / static_cast<double>(spatial);
    out.values[ch] = peak[ch] * (gamma == 1.0 ? mean : std::pow(mean, 1.0 / gamma));
  }
  return out;
}

GlobalDescriptor l2_normalize(const GlobalDescriptor& descriptor) {
  double sq = 0.0;
  for (double v : descriptor.values) sq += v * v;
  if (!(sq > 0.0)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  const double norm = std::sqrt(sq);
  GlobalDescriptor out{descriptor.values, true};
  // Already unit length: return unchanged so normalization is idempotent.
  if (std::abs(norm - 1.0) <= 1e-15) return out;
  for (double& v : out.values) v /= norm;
  return out;
}

}  // namespace evpr
