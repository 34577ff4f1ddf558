#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "evpr/tensor.hpp"

namespace evpr {

/// Spatial activations from a global backbone, dims {H', W', C, 1}.
struct GlobalFeatureMap {
  FloatTensor data;

  uint32_t height() const noexcept { return data.dim(0); }
  uint32_t width() const noexcept { return data.dim(1); }
  uint32_t channels() const noexcept { return data.dim(2); }
};

struct GlobalDescriptor {
  std::vector<double> values;
  bool normalized = false;
};

struct Keypoint {
  float u = 0.0f;  // column
  float v = 0.0f;  // row
  float score = 0.0f;

  bool operator==(const Keypoint&) const = default;
};

/// Keypoints with row-major descriptors, `descriptor_dim` floats per point.
struct KeypointSet {
  std::vector<Keypoint> points;
  uint32_t descriptor_dim = 0;
  std::vector<float> descriptors;

  size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  std::span<const float> descriptor(size_t i) const noexcept {
    return std::span<const float>(descriptors).subspan(i * descriptor_dim, descriptor_dim);
  }
  /// Throws ShapeMismatch when points and descriptors disagree.
  void check() const;

  bool operator==(const KeypointSet&) const = default;
};

/// Dense relative depth, dims {H, W, 1, 1}.
struct DepthMap {
  FloatTensor data;

  uint32_t height() const noexcept { return data.dim(0); }
  uint32_t width() const noexcept { return data.dim(1); }
};

inline constexpr double kDefaultGemGamma = 5.0;

/// Generalized mean over the spatial dims of each channel. Negative
/// activations are clamped to zero first.
GlobalDescriptor gem_pool(const GlobalFeatureMap& map, double gamma = kDefaultGemGamma);

/// Unit L2 norm copy. Throws ZeroVector on an all-zero input.
GlobalDescriptor l2_normalize(const GlobalDescriptor& descriptor);

}  // namespace evpr
