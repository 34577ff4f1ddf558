#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evpr/features.hpp"
#include "evpr/retrieval.hpp"

namespace evpr {

// Descriptor matching ----------------------------------------------------------

struct Match {
  uint32_t query_idx = 0;
  uint32_t ref_idx = 0;
  float distance = 0.0f;  // Euclidean distance to the nearest reference descriptor

  bool operator==(const Match&) const = default;
};

/// Query-side indices are unique and appear in increasing order.
struct MatchSet {
  std::vector<Match> pairs;
};

inline constexpr double kDefaultNnrRatio = 0.8;

/// Nearest-neighbour ratio test: each query descriptor is matched to its
/// nearest reference descriptor when d1 / d2 < ratio. With a single reference
/// descriptor every query is accepted.
MatchSet nnr_match(const KeypointSet& query, const KeypointSet& ref, double ratio = kDefaultNnrRatio);

// Homography / RANSAC ----------------------------------------------------------

/// Maps query pixels to reference pixels. Normalized so H(2,2) == 1 when it is
/// non-zero.
struct Homography {
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();

  Eigen::Vector2d project(const Eigen::Vector2d& p) const;
  /// Squared reprojection distance, +inf when p maps to infinity.
  double transfer_error_sq(const Eigen::Vector2d& query, const Eigen::Vector2d& ref) const;
};

/// Direct linear transform with Hartley normalization. Needs at least four
/// correspondences; returns nullopt for degenerate or singular configurations.
std::optional<Homography> fit_homography(const std::vector<Eigen::Vector2d>& query,
                                         const std::vector<Eigen::Vector2d>& ref);

struct RansacParams {
  double epsilon = 5.0;           // reprojection threshold, pixels
  uint32_t iterations = 1000;
  double early_exit_ratio = 0.9;  // stop once this inlier fraction is reached
  uint64_t seed = 0;
};

struct InlierSet {
  std::vector<Match> pairs;
  Homography homography;

  size_t size() const noexcept { return pairs.size(); }
};

/// Fewer than four matches yields an empty set with the identity model.
/// Deterministic for a fixed seed.
InlierSet ransac_homography(const MatchSet& matches, const KeypointSet& query, const KeypointSet& ref,
                            const RansacParams& params);

// Depth similarity ------------------------------------------------------------

inline constexpr uint32_t kDepthSide = 28;

/// Bilinear resize with pixel-centre alignment. Same-size input is returned unchanged.
DepthMap resize_depth(const DepthMap& depth, uint32_t height = kDepthSide, uint32_t width = kDepthSide);

/// Mean SSIM over all fully-contained 7x7 Gaussian (sigma 1.5) windows.
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 with L the joint dynamic range of the pair
/// (L = 1 when both maps are the same constant).
double ssim(const DepthMap& a, const DepthMap& b);

// Re-ranking --------------------------------------------------------------------

/// Reference-side local features, looked up by reference frame id.
class ReferenceFeatureStore {
 public:
  virtual ~ReferenceFeatureStore() = default;
  virtual KeypointSet keypoints(uint64_t ref_id) const = 0;
  virtual DepthMap depth(uint64_t ref_id) const = 0;
};

/// Store over in-memory vectors indexed by frame id.
class InMemoryFeatureStore final : public ReferenceFeatureStore {
 public:
  InMemoryFeatureStore(std::vector<KeypointSet> keypoints, std::vector<DepthMap> depth)
      : keypoints_(std::move(keypoints)), depth_(std::move(depth)) {}

  KeypointSet keypoints(uint64_t ref_id) const override;
  DepthMap depth(uint64_t ref_id) const override;

 private:
  std::vector<KeypointSet> keypoints_;
  std::vector<DepthMap> depth_;
};

enum class RerankStage { Keypoint, Depth };

struct RerankedCandidate {
  uint64_t ref_id = 0;
  float cosine = 0.0f;
  double s_prime = 0.0;
  uint32_t inliers = 0;
  std::optional<double> ssim;
};

struct RerankedShortlist {
  uint64_t query_id = 0;
  std::vector<RerankedCandidate> candidates;
  RerankStage stage = RerankStage::Keypoint;
};

inline constexpr double kDefaultAlpha = 0.05;

/// s' = cosine + alpha * inliers.
double combine_scores(double cosine, uint32_t inlier_count, double alpha = kDefaultAlpha);

struct KeypointRerankParams {
  double alpha = kDefaultAlpha;
  double nnr_ratio = kDefaultNnrRatio;
  RansacParams ransac;  // ransac.seed is the global seed
  unsigned threads = 1;
};

/// Per-candidate RANSAC seed, independent of scheduling.
uint64_t candidate_seed(uint64_t global_seed, uint64_t query_id, uint64_t ref_id) noexcept;

/// Scores every shortlist candidate with s' and sorts descending; ties keep
/// the shortlist order. Throws MissingKeypoints when the store lacks a candidate.
RerankedShortlist rerank_keypoints(const Shortlist& shortlist, const KeypointSet& query_keypoints,
                                   const ReferenceFeatureStore& store, const KeypointRerankParams& params);

/// Wraps a shortlist as a keypoint-stage result without geometric scoring
/// (s' = cosine, zero inliers).
RerankedShortlist passthrough(const Shortlist& shortlist);

/// Sorts the first `k_depth` candidates by depth SSIM, descending; ties keep
/// the keypoint-stage order, candidates past `k_depth` keep their position.
/// `k_depth == 0` means all candidates.
RerankedShortlist rerank_depth(const RerankedShortlist& reranked, const DepthMap& query_depth,
                               const ReferenceFeatureStore& store, size_t k_depth = 0, unsigned threads = 1);

}  // namespace evpr
