#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "evpr/archive.hpp"
#include "evpr/features.hpp"
#include "evpr/representations.hpp"

namespace evpr {

enum class ProviderKind { BuiltinGrid, BuiltinCorner, BuiltinDensityDepth, Archive, Subprocess };

/// How to obtain a provider. Textual form: `builtin-grid`, `builtin-corner`,
/// `builtin-density-depth`, `archive:<path>` or `subprocess:<shell command>`.
struct ProviderSpec {
  ProviderKind kind = ProviderKind::BuiltinGrid;
  std::string target;  // archive path or command line
  std::map<std::string, std::string> parameters;

  static ProviderSpec parse(std::string_view text);
  std::string to_string() const;

  double number(const std::string& name, double fallback) const;
  std::string text(const std::string& name, const std::string& fallback) const;
};

/// Common base. Providers that are not safe for concurrent use report
/// `concurrent() == false`; calls through the free functions below are then
/// serialized on the provider's own mutex.
class Provider {
 public:
  virtual ~Provider() = default;

  /// Stable identity of the model and its parameters (not of the data).
  virtual std::string fingerprint() const = 0;
  virtual bool concurrent() const { return true; }

  std::mutex& call_mutex() const { return mutex_; }

 private:
  mutable std::mutex mutex_;
};

class GlobalEmbedder : public Provider {
 public:
  /// `histogram` has dims {H, W, 2, 1}.
  virtual GlobalFeatureMap embed(uint64_t frame_id, const FloatTensor& histogram) const = 0;
};

class KeypointDetector : public Provider {
 public:
  virtual KeypointSet detect(uint64_t frame_id, const MctsTensor& mcts) const = 0;
};

class DepthEstimator : public Provider {
 public:
  virtual DepthMap estimate(uint64_t frame_id, const TencodeImage& tencode) const = 0;
};

// Checked entry points: enforce determinism-relevant output contracts
// (non-empty, finite) and serialize single-threaded providers.
GlobalFeatureMap embed_global(const GlobalEmbedder& provider, uint64_t frame_id, const FloatTensor& histogram);
KeypointSet detect_keypoints(const KeypointDetector& provider, uint64_t frame_id, const MctsTensor& mcts);
DepthMap estimate_depth(const DepthEstimator& provider, uint64_t frame_id, const TencodeImage& tencode);

std::unique_ptr<GlobalEmbedder> make_global_embedder(const ProviderSpec& spec);
std::unique_ptr<KeypointDetector> make_keypoint_detector(const ProviderSpec& spec);
std::unique_ptr<DepthEstimator> make_depth_estimator(const ProviderSpec& spec);

// Built-in providers ---------------------------------------------------------

/// Partitions the input into a `grid` x `grid` lattice of cells, each split
/// into `sub` x `sub` blocks. Every block emits (mean, max, nonzero fraction)
/// per input channel. Output dims are {sub, sub, grid*grid*C_in*3, 1}: the
/// channel encodes the cell and statistic, the spatial axes the block within
/// the cell, so GeM pools each cell independently.
class GridEmbedder final : public GlobalEmbedder {
 public:
  explicit GridEmbedder(uint32_t grid = 14, uint32_t sub = 2);

  GlobalFeatureMap embed(uint64_t frame_id, const FloatTensor& input) const override;
  std::string fingerprint() const override;

 private:
  uint32_t grid_;
  uint32_t sub_;
};

struct CornerParams {
  int nms_radius = 4;
  uint32_t max_keypoints = 128;
  double harris_k = 0.04;
  double relative_threshold = 0.01;
  double absolute_threshold = 1e-6;
  int window_radius = 2;  // structure tensor box half-width
  double smoothing_sigma = 1.0;  // Gaussian pre-smoothing; 0 disables
  int patch_step = 2;            // descriptor sampling stride in pixels
};

/// Harris response on the Gaussian-smoothed max-over-channels time-surface
/// plane, non-maximum suppression, and 8x8 zero-mean unit-norm descriptors
/// (D = 64) sampled every `patch_step` pixels around each corner.
class CornerDetector final : public KeypointDetector {
 public:
  static constexpr int kPatch = 8;

  explicit CornerDetector(CornerParams params = {});

  KeypointSet detect(uint64_t frame_id, const MctsTensor& mcts) const override;
  KeypointSet detect_plane(const FloatTensor& plane) const;
  std::string fingerprint() const override;

 private:
  CornerParams params_;
};

/// Inverse local event density: depth = 1 / (1 + gain * density), where
/// density is the box-filtered fraction of active Tencode pixels.
class DensityDepthEstimator final : public DepthEstimator {
 public:
  DensityDepthEstimator(int radius = 4, double gain = 10.0, std::array<float, 3> background = {0.0f, 0.0f, 0.0f});

  DepthMap estimate(uint64_t frame_id, const TencodeImage& tencode) const override;
  std::string fingerprint() const override;

 private:
  int radius_;
  double gain_;
  std::array<float, 3> background_;
};

// Archive-backed providers ---------------------------------------------------

class ArchiveGlobalEmbedder final : public GlobalEmbedder {
 public:
  ArchiveGlobalEmbedder(std::shared_ptr<const FeatureArchive> archive, std::string model);
  GlobalFeatureMap embed(uint64_t frame_id, const FloatTensor&) const override;
  std::string fingerprint() const override { return "archive(model=" + model_ + ")"; }

 private:
  std::shared_ptr<const FeatureArchive> archive_;
  std::string model_;
};

class ArchiveKeypointDetector final : public KeypointDetector {
 public:
  ArchiveKeypointDetector(std::shared_ptr<const FeatureArchive> archive, std::string model);
  KeypointSet detect(uint64_t frame_id, const MctsTensor&) const override;
  std::string fingerprint() const override { return "archive(model=" + model_ + ")"; }

 private:
  std::shared_ptr<const FeatureArchive> archive_;
  std::string model_;
};

class ArchiveDepthEstimator final : public DepthEstimator {
 public:
  ArchiveDepthEstimator(std::shared_ptr<const FeatureArchive> archive, std::string model);
  DepthMap estimate(uint64_t frame_id, const TencodeImage&) const override;
  std::string fingerprint() const override { return "archive(model=" + model_ + ")"; }

 private:
  std::shared_ptr<const FeatureArchive> archive_;
  std::string model_;
};

// Subprocess providers -------------------------------------------------------

/// Runs `/bin/sh -c command`, writes `input` to its stdin and returns
/// everything it writes to stdout. Throws ProviderFailure on a non-zero exit
/// status or when `timeout` elapses (the child is killed).
std::vector<uint8_t> run_subprocess(const std::string& command, std::span<const uint8_t> input,
                                    std::chrono::milliseconds timeout);

/// External model runner. The representation is written to the child's stdin
/// in tensor dump format (f32); the child answers with one tensor dump, or a
/// keypoint payload for the keypoint role.
class SubprocessProvider {
 public:
  SubprocessProvider(std::string command, std::chrono::milliseconds timeout, std::string model);

  std::vector<uint8_t> call(const FloatTensor& input) const;
  const std::string& model() const noexcept { return model_; }

 private:
  std::string command_;
  std::chrono::milliseconds timeout_;
  std::string model_;
};

class SubprocessGlobalEmbedder final : public GlobalEmbedder {
 public:
  explicit SubprocessGlobalEmbedder(SubprocessProvider runner) : runner_(std::move(runner)) {}
  GlobalFeatureMap embed(uint64_t frame_id, const FloatTensor& histogram) const override;
  std::string fingerprint() const override { return "subprocess(model=" + runner_.model() + ")"; }
  bool concurrent() const override { return false; }

 private:
  SubprocessProvider runner_;
};

class SubprocessKeypointDetector final : public KeypointDetector {
 public:
  explicit SubprocessKeypointDetector(SubprocessProvider runner) : runner_(std::move(runner)) {}
  KeypointSet detect(uint64_t frame_id, const MctsTensor& mcts) const override;
  std::string fingerprint() const override { return "subprocess(model=" + runner_.model() + ")"; }
  bool concurrent() const override { return false; }

 private:
  SubprocessProvider runner_;
};

class SubprocessDepthEstimator final : public DepthEstimator {
 public:
  explicit SubprocessDepthEstimator(SubprocessProvider runner) : runner_(std::move(runner)) {}
  DepthMap estimate(uint64_t frame_id, const TencodeImage& tencode) const override;
  std::string fingerprint() const override { return "subprocess(model=" + runner_.model() + ")"; }
  bool concurrent() const override { return false; }

 private:
  SubprocessProvider runner_;
};

}  // namespace evpr
