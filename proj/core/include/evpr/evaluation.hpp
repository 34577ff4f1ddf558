#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "evpr/retrieval.hpp"

namespace evpr {

struct Position {
  double x = 0.0;  // metres, local planar frame
  double y = 0.0;
};

using PositionTable = std::unordered_map<uint64_t, Position>;

inline constexpr double kOutdoorToleranceM = 70.0;
inline constexpr double kIndoorToleranceM = 3.0;

struct GroundTruth {
  PositionTable reference;
  PositionTable query;
  double tolerance_m = kOutdoorToleranceM;

  /// Positions equal to the frame index, for self-retrieval fixtures.
  static GroundTruth from_indices(size_t n_ref, size_t n_query, double tolerance);
};

/// Reads `frame_id,x_m,y_m[,timestamp_us]`. A non-numeric first line is
/// treated as a header; `#` lines are comments. Duplicate ids are rejected.
PositionTable load_positions_csv(const std::filesystem::path& path);
PositionTable parse_positions_csv(std::string_view text);

struct QueryRanking {
  uint64_t query_id = 0;
  std::vector<uint64_t> ref_ids;  // best first
};

struct RecallReport {
  std::map<size_t, double> recall;
  std::map<size_t, size_t> true_positives;
  size_t gtp = 0;
  size_t queries = 0;
  bool undefined = false;  // no query had an in-tolerance reference
  double tolerance_m = 0.0;
  std::vector<std::string> warnings;
  std::string config_fingerprint;
};

/// A query is a true positive at K when any of its top-K references lies
/// within tolerance (distance <= tolerance). GTP counts the queries that have
/// at least one in-tolerance reference; the remaining queries are excluded.
RecallReport recall_at_k(const std::vector<QueryRanking>& rankings, const GroundTruth& ground_truth,
                         const std::vector<size_t>& ks);

nlohmann::json to_json(const RecallReport& report);

// Timing ------------------------------------------------------------------------

enum class Stage : size_t { Representation = 0, Embedding = 1, Retrieval = 2, Rerank = 3 };
inline constexpr size_t kStageCount = 4;

struct QueryTiming {
  uint64_t query_id = 0;
  std::array<double, kStageCount> stage_seconds{};
  double total_seconds = 0.0;

  double hz() const noexcept { return total_seconds > 0.0 ? 1.0 / total_seconds : 0.0; }
};

struct TimingSummary {
  size_t measured = 0;
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  double mean_hz = 0.0;    // measured / sum of durations
  double median_hz = 0.0;  // 1 / median duration
};

struct TimingReport {
  std::vector<QueryTiming> per_query;
  size_t warmup = 0;
  TimingSummary summary;
};

/// Accumulates monotonic-clock time per stage for one query.
class StageTimer {
 public:
  template <class Fn>
  decltype(auto) time(Stage stage, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    struct Record {
      StageTimer* self;
      Stage stage;
      std::chrono::steady_clock::time_point start;
      ~Record() {
        self->seconds_[static_cast<size_t>(stage)] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      }
    } record{this, stage, start};
    return fn();
  }

  const std::array<double, kStageCount>& seconds() const noexcept { return seconds_; }

 private:
  std::array<double, kStageCount> seconds_{};
};

/// A fully initialized query pipeline; the database is loaded before timing starts.
class TimedPipeline {
 public:
  virtual ~TimedPipeline() = default;
  virtual size_t query_count() const = 0;
  /// Runs query `index` from windowing through final ranking.
  virtual void run_query(size_t index, StageTimer& timer) = 0;
};

inline constexpr size_t kDefaultWarmupQueries = 5;

TimingReport measure_runtime(TimedPipeline& pipeline, size_t warmup = kDefaultWarmupQueries);
TimingSummary summarize(const std::vector<QueryTiming>& timings, size_t warmup);
nlohmann::json to_json(const TimingReport& report);

// Export ------------------------------------------------------------------------

enum class MatrixFormat { Csv, TensorDump };

/// Writes distances 1 - similarity with references as rows and queries as
/// columns; CSV cells use 9 significant digits.
void export_distance_matrix(const SimilarityMatrix& similarity, const std::filesystem::path& path,
                            MatrixFormat format);

/// Writes descriptor rows (one per frame) in the same formats.
void export_descriptors(const DescriptorMatrix& descriptors, const std::filesystem::path& path, MatrixFormat format);

}  // namespace evpr
