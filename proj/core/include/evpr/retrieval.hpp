#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "evpr/features.hpp"
#include "evpr/hash.hpp"

namespace evpr {

enum class Side { Reference, Query };

/// N x C float rows, row i is frame i. Rows are unit-norm, except that a frame
/// whose descriptor is all-zero (an empty window) is stored as a zero row.
class DescriptorMatrix {
 public:
  DescriptorMatrix(Side side, uint32_t dims) : side_(side), dims_(dims) {}
  DescriptorMatrix(Side side, uint32_t dims, std::vector<float> data);

  /// Appends an L2-normalized descriptor. An all-zero descriptor is stored as a zero row.
  void append(const GlobalDescriptor& descriptor);
  void append_zero();

  Side side() const noexcept { return side_; }
  size_t rows() const noexcept { return dims_ == 0 ? 0 : data_.size() / dims_; }
  uint32_t cols() const noexcept { return dims_; }
  std::span<const float> row(size_t i) const noexcept {
    return std::span<const float>(data_).subspan(i * dims_, dims_);
  }
  std::span<const float> data() const noexcept { return data_; }

 private:
  Side side_;
  uint32_t dims_;
  std::vector<float> data_;
};

/// N_ref x N_query cosine similarities, stored query-major so that each
/// query's column is contiguous.
struct SimilarityMatrix {
  size_t n_ref = 0;
  size_t n_query = 0;
  std::vector<float> data;

  float at(size_t ref, size_t query) const noexcept { return data[query * n_ref + ref]; }
  std::span<const float> column(size_t query) const noexcept {
    return std::span<const float>(data).subspan(query * n_ref, n_ref);
  }
};

/// Float inner product accumulated in double. Every similarity entry in the
/// engine goes through this function, so blocked, per-column and threaded
/// evaluations agree bit for bit.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

struct SimilarityOptions {
  size_t tile = 256;
  unsigned threads = 1;
};

SimilarityMatrix build_similarity(const DescriptorMatrix& refs, const DescriptorMatrix& queries,
                                  const SimilarityOptions& options = {});

/// One query column (online mode).
std::vector<float> similarity_column(const DescriptorMatrix& refs, std::span<const float> query);

struct ScoredCandidate {
  uint64_t ref_id = 0;
  float score = 0.0f;

  bool operator==(const ScoredCandidate&) const = default;
};

struct Shortlist {
  uint64_t query_id = 0;
  std::vector<ScoredCandidate> candidates;
};

inline constexpr size_t kDefaultTopK = 50;

/// The k highest entries, descending; ties go to the lower reference index.
/// k is clamped to the column length.
Shortlist top_k(std::span<const float> column, uint64_t query_id, size_t k = kDefaultTopK);
Shortlist top_k(const SimilarityMatrix& similarity, uint64_t query_id, size_t k = kDefaultTopK);

// Descriptor database file (`EVPD`) -------------------------------------------

inline constexpr uint16_t kDatabaseVersion = 1;

struct DescriptorDatabase {
  DescriptorMatrix matrix{Side::Reference, 0};
  float gamma = static_cast<float>(kDefaultGemGamma);
  Digest256 provider_fingerprint{};
};

std::vector<uint8_t> encode_database(const DescriptorDatabase& db);
DescriptorDatabase decode_database(std::span<const uint8_t> bytes);
void write_database(const DescriptorDatabase& db, const std::filesystem::path& path);

/// Loads a database; when `expected_fingerprint` is given and differs from the
/// stored one, throws ManifestMismatch unless `allow_mismatch` is set.
DescriptorDatabase load_database(const std::filesystem::path& path,
                                 std::optional<Digest256> expected_fingerprint = std::nullopt,
                                 bool allow_mismatch = false);

}  // namespace evpr
