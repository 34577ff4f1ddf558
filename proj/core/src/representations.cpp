#include "evpr/representations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evpr {
namespace {

void check_in_bounds(const Event& e, SensorGeometry geometry, uint64_t index) {
  if (!geometry.contains(e.x, e.y)) {
    throw Error(ErrorCode::CoordinateOutOfRange, "window event outside sensor geometry", index);
  }
}

}  // namespace

uint64_t PolarityHistogram::total() const noexcept {
  uint64_t sum = 0;
  for (uint32_t c : counts.values()) sum += c;
  return sum;
}

FloatTensor PolarityHistogram::to_float() const {
  FloatTensor out(counts.dims());
  auto src = counts.values();
  auto dst = out.values();
  for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return out;
}

FloatTensor MctsTensor::to_float() const {
  FloatTensor out(values.dims());
  auto src = values.values();
  auto dst = out.values();
  for (size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return out;
}

FloatTensor MctsTensor::max_plane() const {
  const auto& d = values.dims();
  FloatTensor plane({d[0], d[1], 1, 1});
  const size_t per_pixel = static_cast<size_t>(d[2]) * d[3];
  auto src = values.values();
  auto dst = plane.values();
  for (size_t px = 0; px < dst.size(); ++px) {
    const auto first = src.begin() + static_cast<std::ptrdiff_t>(px * per_pixel);
    dst[px] = per_pixel == 0 ? 0.0f : static_cast<float>(*std::max_element(first, first + static_cast<std::ptrdiff_t>(per_pixel)));
  }
  return plane;
}

PolarityHistogram build_histogram(const EventWindow& window, SensorGeometry geometry) {
  PolarityHistogram hist{Tensor<uint32_t>({geometry.height, geometry.width, 2, 1})};
  uint64_t i = 0;
  for (const Event& e : window.events) {
    check_in_bounds(e, geometry, i++);
    ++hist.counts(e.y, e.x, e.p & 1u);
  }
  return hist;
}

double time_surface_value(uint64_t t_ref, uint64_t t_last, double tau_us) noexcept {
  return std::exp(-static_cast<double>(t_ref - t_last) / tau_us);
}

MctsTensor build_mcts(const EventWindow& window, SensorGeometry geometry, const std::vector<double>& taus_us,
                      std::optional<uint64_t> t_ref) {
  if (taus_us.empty()) throw Error(ErrorCode::NonPositiveTau, "at least one time constant is required");
  for (double tau : taus_us) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::NonPositiveTau, "time constants must be positive");
  }
  const uint64_t ref = t_ref.value_or(window.t_max);
  const auto k = static_cast<uint32_t>(taus_us.size());

  constexpr uint64_t kNever = std::numeric_limits<uint64_t>::max();
  std::vector<uint64_t> last(static_cast<size_t>(geometry.height) * geometry.width * 2, kNever);
  uint64_t i = 0;
  for (const Event& e : window.events) {
    check_in_bounds(e, geometry, i++);
    if (e.t > ref) throw Error(ErrorCode::InvalidArgument, "t_ref precedes a window event", i - 1);
    // Later stream index wins on equal timestamps.
    last[(static_cast<size_t>(e.y) * geometry.width + e.x) * 2 + (e.p & 1u)] = e.t;
  }

  MctsTensor out{Tensor<double>({geometry.height, geometry.width, 2, k}), taus_us};
  auto dst = out.values.values();
  for (size_t cell = 0; cell < last.size(); ++cell) {
    if (last[cell] == kNever) continue;
    for (uint32_t j = 0; j < k; ++j) dst[cell * k + j] = time_surface_value(ref, last[cell], taus_us[j]);
  }
  return out;
}

TencodeImage build_tencode(const EventWindow& window, SensorGeometry geometry, const TencodeOptions& options) {
  if (!(options.epsilon_us > 0.0)) throw Error(ErrorCode::InvalidArgument, "recency epsilon must be positive");
  TencodeImage img{FloatTensor({geometry.height, geometry.width, 3, 1})};
  auto px = img.pixels.values();
  for (size_t i = 0; i < px.size(); i += 3) {
    px[i] = options.background[0];
    px[i + 1] = options.background[1];
    px[i + 2] = options.background[2];
  }
  const double span = static_cast<double>(window.t_max - window.t_min) + options.epsilon_us;
  uint64_t i = 0;
  // Iterating in stream order leaves the latest index at each pixel.
  for (const Event& e : window.events) {
    check_in_bounds(e, geometry, i++);
    const double recency = 1.0 - static_cast<double>(e.t - window.t_min) / span;
    const float p = static_cast<float>(e.p & 1u);
    img.pixels(e.y, e.x, 0) = p;
    img.pixels(e.y, e.x, 1) = static_cast<float>(recency);
    img.pixels(e.y, e.x, 2) = 1.0f - p;
  }
  return img;
}

}  // namespace evpr
