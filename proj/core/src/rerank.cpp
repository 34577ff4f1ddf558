#include <algorithm>
#include <numeric>
#include <string>

#include "evpr/hash.hpp"
#include "evpr/parallel.hpp"
#include "evpr/rerank.hpp"

namespace evpr {

KeypointSet InMemoryFeatureStore::keypoints(uint64_t ref_id) const {
  if (ref_id >= keypoints_.size()) throw Error(ErrorCode::MissingKeypoints, "no keypoints for reference frame", ref_id);
  return keypoints_[ref_id];
}

DepthMap InMemoryFeatureStore::depth(uint64_t ref_id) const {
  if (ref_id >= depth_.size()) throw Error(ErrorCode::MissingDepth, "no depth map for reference frame", ref_id);
  return depth_[ref_id];
}

double combine_scores(double cosine, uint32_t inlier_count, double alpha) {
  if (!(alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  return cosine + alpha * static_cast<double>(inlier_count);
}

uint64_t candidate_seed(uint64_t global_seed, uint64_t query_id, uint64_t ref_id) noexcept {
  return mix_seed(mix_seed(global_seed, query_id), ref_id);
}

RerankedShortlist passthrough(const Shortlist& shortlist) {
  RerankedShortlist out{shortlist.query_id, {}, RerankStage::Keypoint};
  out.candidates.reserve(shortlist.candidates.size());
  for (const auto& c : shortlist.candidates) out.candidates.push_back({c.ref_id, c.score, c.score, 0, std::nullopt});
  return out;
}

RerankedShortlist rerank_keypoints(const Shortlist& shortlist, const KeypointSet& query_keypoints,
                                   const ReferenceFeatureStore& store, const KeypointRerankParams& params) {
  if (!(params.alpha >= 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be non-negative");
  RerankedShortlist out = passthrough(shortlist);

  parallel_for(out.candidates.size(), params.threads, [&](size_t i) {
    RerankedCandidate& cand = out.candidates[i];
    KeypointSet ref_keypoints;
    try {
      ref_keypoints = store.keypoints(cand.ref_id);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MissingKeypoints) throw;
      throw Error(ErrorCode::MissingKeypoints, "no keypoints for reference frame " + std::to_string(cand.ref_id) +
                                                   ": " + e.what(), cand.ref_id);
    }
    const MatchSet matches = nnr_match(query_keypoints, ref_keypoints, params.nnr_ratio);
    RansacParams ransac = params.ransac;
    ransac.seed = candidate_seed(params.ransac.seed, shortlist.query_id, cand.ref_id);
    const InlierSet inliers = ransac_homography(matches, query_keypoints, ref_keypoints, ransac);
    cand.inliers = static_cast<uint32_t>(inliers.size());
    cand.s_prime = combine_scores(cand.cosine, cand.inliers, params.alpha);
  });

  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const RerankedCandidate& a, const RerankedCandidate& b) { return a.s_prime > b.s_prime; });
  return out;
}

RerankedShortlist rerank_depth(const RerankedShortlist& reranked, const DepthMap& query_depth,
                               const ReferenceFeatureStore& store, size_t k_depth, unsigned threads) {
  if (reranked.stage != RerankStage::Keypoint) {
    throw Error(ErrorCode::InvalidArgument, "depth re-ranking expects a keypoint-stage shortlist");
  }
  RerankedShortlist out = reranked;
  out.stage = RerankStage::Depth;
  const size_t n = k_depth == 0 ? out.candidates.size() : std::min(k_depth, out.candidates.size());
  const DepthMap query_small = resize_depth(query_depth);

  parallel_for(n, threads, [&](size_t i) {
    RerankedCandidate& cand = out.candidates[i];
    DepthMap ref_depth;
    try {
      ref_depth = store.depth(cand.ref_id);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::MissingDepth) throw;
      throw Error(ErrorCode::MissingDepth, "no depth map for reference frame " + std::to_string(cand.ref_id) +
                                               ": " + e.what(), cand.ref_id);
    }
    cand.ssim = ssim(query_small, resize_depth(ref_depth));
  });

  std::stable_sort(out.candidates.begin(), out.candidates.begin() + static_cast<std::ptrdiff_t>(n),
                   [](const RerankedCandidate& a, const RerankedCandidate& b) { return *a.ssim > *b.ssim; });
  return out;
}

}  // namespace evpr
