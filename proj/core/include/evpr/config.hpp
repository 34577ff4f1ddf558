#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evpr/event_io.hpp"
#include "evpr/providers.hpp"
#include "evpr/representations.hpp"

namespace evpr {

enum class RerankMode { GlobalOnly, Keypoint, KeypointPlusDepth };

std::string_view to_string(RerankMode mode) noexcept;
RerankMode parse_mode(std::string_view text);

struct PipelineConfig {
  WindowingPolicy window = FixedTime{50'000, 0};
  std::optional<WindowingPolicy> query_window;  // per-side override; defaults to `window`
  SensorGeometry geometry{346, 260};             // for text event files
  bool strict_events = false;
  bool text_header = false;

  std::vector<double> mcts_taus_us = kDefaultMctsTausUs;
  TencodeOptions tencode;

  double gamma = 5.0;
  size_t k = 50;
  double epsilon = 5.0;
  double alpha = 0.05;
  double nnr_ratio = 0.8;
  uint32_t ransac_iterations = 1000;
  double ransac_early_exit = 0.9;
  size_t k_depth = 0;  // 0 = every candidate surviving the keypoint stage
  RerankMode mode = RerankMode::Keypoint;

  ProviderSpec global_provider{ProviderKind::BuiltinGrid, {}, {}};
  ProviderSpec keypoint_provider{ProviderKind::BuiltinCorner, {}, {}};
  std::optional<ProviderSpec> depth_provider = ProviderSpec{ProviderKind::BuiltinDensityDepth, {}, {}};

  uint64_t seed = 0;
  double tolerance_m = 70.0;
  unsigned threads = 0;  // 0 = hardware concurrency
  size_t db_stride = 1;  // keep every n-th reference window
  size_t warmup = 5;
  bool allow_fingerprint_mismatch = false;

  const WindowingPolicy& query_policy() const noexcept { return query_window ? *query_window : window; }

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Applies `key = value` lines (`#` comments) on top of `base`.
PipelineConfig parse_config(std::string_view text, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {});

/// Canonical `key = value` rendering; parse_config(render_config(c)) == c for
/// every field that affects results.
std::string render_config(const PipelineConfig& config);

}  // namespace evpr
