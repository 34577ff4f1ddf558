#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evpr/config.hpp"
#include "evpr/evaluation.hpp"
#include "evpr/hash.hpp"
#include "evpr/providers.hpp"
#include "evpr/rerank.hpp"
#include "evpr/retrieval.hpp"

namespace evpr {

/// Providers instantiated from a config, shared by build and query.
struct ProviderSet {
  std::unique_ptr<GlobalEmbedder> global;
  std::unique_ptr<KeypointDetector> keypoints;
  std::unique_ptr<DepthEstimator> depth;  // null when no depth provider is configured

  static ProviderSet from_config(const PipelineConfig& config);
};

/// SHA-256 of everything that must agree between the reference and query
/// sides: representation parameters, gamma, and the provider fingerprints.
/// Windowing is excluded since each side may use its own policy.
Digest256 config_fingerprint(const PipelineConfig& config, const ProviderSet& providers);
Digest256 provider_fingerprint(const GlobalEmbedder& provider);

// Reference database -------------------------------------------------------------

/// Files inside a reference database directory.
struct DatabaseLayout {
  std::filesystem::path dir;

  std::filesystem::path descriptors() const { return dir / "descriptors.evpd"; }
  std::filesystem::path keypoints() const { return dir / "keypoints.evpa"; }
  std::filesystem::path depth() const { return dir / "depth.evpa"; }
  std::filesystem::path manifest() const { return dir / "manifest.json"; }
};

struct BuildSummary {
  size_t windows = 0;
  size_t frames = 0;
  size_t empty_frames = 0;
  std::vector<std::string> warnings;
};

/// Frame-level features computed from one window.
struct FrameFeatures {
  GlobalDescriptor descriptor;  // normalized unless all-zero
  KeypointSet keypoints;
  std::optional<DepthMap> depth;  // resized to 28 x 28
};

FrameFeatures extract_reference_frame(const EventWindow& window, SensorGeometry geometry, uint64_t frame_id,
                                      const PipelineConfig& config, const ProviderSet& providers);

/// Where a database frame came from in the reference recording.
struct FrameOrigin {
  uint64_t window_index = 0;
  uint64_t window_t_min = 0;
};

/// Writes already extracted frames as a database directory. Frame ids are
/// positions in `frames`.
BuildSummary write_reference_database(const std::vector<FrameFeatures>& frames, const std::vector<FrameOrigin>& origins,
                                      SensorGeometry geometry, const PipelineConfig& config,
                                      const ProviderSet& providers, const std::filesystem::path& out_dir);

/// Windows the stream, extracts every reference frame and writes the database.
/// Re-running with the same inputs reproduces the descriptor file byte for byte.
BuildSummary build_database(const EventStream& stream, const PipelineConfig& config,
                            const std::filesystem::path& out_dir);

/// Loaded, validated reference database.
class ReferenceDatabase final : public ReferenceFeatureStore {
 public:
  /// Checks the manifest and descriptor file against the fingerprints derived
  /// from `config` and `providers` (ManifestMismatch unless
  /// `config.allow_fingerprint_mismatch`) and that every artifact holds the
  /// manifest frame count. The depth archive is required only in
  /// keypoint+depth mode.
  static ReferenceDatabase open(const std::filesystem::path& dir, const PipelineConfig& config,
                                const ProviderSet& providers);

  const DescriptorMatrix& descriptors() const noexcept { return descriptors_.matrix; }
  size_t frame_count() const noexcept { return descriptors_.matrix.rows(); }
  const nlohmann::json& manifest() const noexcept { return manifest_; }

  KeypointSet keypoints(uint64_t ref_id) const override;
  DepthMap depth(uint64_t ref_id) const override;

 private:
  DescriptorDatabase descriptors_;
  std::shared_ptr<const FeatureArchive> keypoints_;
  std::shared_ptr<const FeatureArchive> depth_;
  nlohmann::json manifest_;
};

// Query ---------------------------------------------------------------------------

struct QueryResult {
  uint64_t query_id = 0;
  uint64_t window_t_min = 0;
  RerankMode mode = RerankMode::GlobalOnly;
  RerankedShortlist ranking;
};

class QueryEngine {
 public:
  QueryEngine(PipelineConfig config, const std::filesystem::path& db_dir);

  /// Runs one query window through the stages selected by the configured mode.
  /// `rerank_threads` parallelizes across shortlist candidates.
  QueryResult run(const EventWindow& window, SensorGeometry geometry, uint64_t query_id,
                  unsigned rerank_threads = 1, StageTimer* timer = nullptr) const;

  /// Batch mode: parallel over windows. Results are in window order and do not
  /// depend on the thread count.
  std::vector<QueryResult> run_all(const EventStream& stream, unsigned threads) const;

  /// Global descriptors of every query window (for similarity export).
  DescriptorMatrix query_descriptors(const EventStream& stream, unsigned threads) const;

  const PipelineConfig& config() const noexcept { return config_; }
  const ReferenceDatabase& database() const noexcept { return db_; }

 private:
  PipelineConfig config_;
  ProviderSet providers_;
  ReferenceDatabase db_;
};

/// {query_id, window_t_min, candidates: [{ref_id, cosine, s_prime?, inliers?, ssim?, rank}]}
nlohmann::json to_json(const QueryResult& result);
void write_results(std::ostream& out, const std::vector<QueryResult>& results);
/// One line per candidate: {query_id, ref_id, cosine, inliers, s_prime, ssim, final_rank}.
void write_trace(std::ostream& out, const std::vector<QueryResult>& results);

std::vector<QueryRanking> read_rankings(std::istream& in);
std::vector<QueryRanking> load_rankings(const std::filesystem::path& path);

/// Per-query latency over a query stream, database already loaded.
TimingReport bench_queries(const QueryEngine& engine, const EventStream& stream, unsigned rerank_threads);

}  // namespace evpr
