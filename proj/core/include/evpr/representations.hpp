#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "evpr/event_io.hpp"
#include "evpr/tensor.hpp"

namespace evpr {

/// H x W x 2 event counts, channel index = polarity.
struct PolarityHistogram {
  Tensor<uint32_t> counts;

  uint64_t total() const noexcept;
  /// Float copy for provider input, dims {H, W, 2, 1}.
  FloatTensor to_float() const;
};

/// H x W x 2 x K time surface. Values are held in double precision; see
/// `to_float` for the provider-facing copy.
struct MctsTensor {
  Tensor<double> values;
  std::vector<double> taus_us;

  FloatTensor to_float() const;
  /// Max over polarity and time constant, dims {H, W, 1, 1}.
  FloatTensor max_plane() const;
};

/// H x W x 3 image: R = last polarity, G = recency, B = 1 - last polarity.
struct TencodeImage {
  FloatTensor pixels;
};

PolarityHistogram build_histogram(const EventWindow& window, SensorGeometry geometry);

inline const std::vector<double> kDefaultMctsTausUs{10'000.0, 20'000.0, 30'000.0, 40'000.0, 50'000.0};

/// value = exp(-(t_ref - t_last) / tau) where a last event exists, else 0.
/// `t_ref` defaults to the window end.
MctsTensor build_mcts(const EventWindow& window, SensorGeometry geometry,
                      const std::vector<double>& taus_us = kDefaultMctsTausUs,
                      std::optional<uint64_t> t_ref = std::nullopt);

/// Single-cell time-surface decay, shared by the builder and its tests.
double time_surface_value(uint64_t t_ref, uint64_t t_last, double tau_us) noexcept;

struct TencodeOptions {
  double epsilon_us = 1.0;
  std::array<float, 3> background{0.0f, 0.0f, 0.0f};
};

TencodeImage build_tencode(const EventWindow& window, SensorGeometry geometry, const TencodeOptions& options = {});

}  // namespace evpr
