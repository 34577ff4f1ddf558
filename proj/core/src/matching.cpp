#include <cmath>
#include <limits>

#include "evpr/rerank.hpp"

namespace evpr {
namespace {

float squared_distance(const float* a, const float* b, size_t n) noexcept {
  float lanes[8] = {};
  size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (size_t j = 0; j < 8; ++j) {
      const float d = a[i + j] - b[i + j];
      lanes[j] += d * d;
    }
  }
  float tail = 0.0f;
  for (; i < n; ++i) {
    const float d = a[i] - b[i];
    tail += d * d;
  }
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7])) + tail;
}

}  // namespace

MatchSet nnr_match(const KeypointSet& query, const KeypointSet& ref, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw Error(ErrorCode::InvalidArgument, "NNR ratio must lie in (0, 1]");
  MatchSet out;
  if (query.empty() || ref.empty()) return out;
  if (query.descriptor_dim != ref.descriptor_dim) {
    throw Error(ErrorCode::DimensionMismatch, "query and reference descriptors differ in dimension");
  }
  const size_t dim = query.descriptor_dim;
  const double ratio_sq = ratio * ratio;
  const float* rd = ref.descriptors.data();

  for (size_t q = 0; q < query.size(); ++q) {
    const float* qd = query.descriptors.data() + q * dim;
    float best = std::numeric_limits<float>::infinity();
    float second = std::numeric_limits<float>::infinity();
    uint32_t best_idx = 0;
    for (size_t r = 0; r < ref.size(); ++r) {
      const float d = squared_distance(qd, rd + r * dim, dim);
      if (d < best) {
        second = best;
        best = d;
        best_idx = static_cast<uint32_t>(r);
      } else if (d < second) {
        second = d;
      }
    }
    // d1/d2 < ratio  <=>  d1^2 < ratio^2 * d2^2 (both non-negative).
    const bool accept = ref.size() == 1 || static_cast<double>(best) < ratio_sq * static_cast<double>(second);
    if (accept) out.pairs.push_back({static_cast<uint32_t>(q), best_idx, std::sqrt(best)});
  }
  return out;
}

}  // namespace evpr
