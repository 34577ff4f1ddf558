#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <Eigen/Geometry>

#include "evpr/error.hpp"
#include "evpr/rerank.hpp"

namespace evpr {
namespace {

KeypointSet make_set(const std::vector<Eigen::Vector2d>& pts, const std::vector<std::vector<float>>& desc) {
  KeypointSet k;
  k.descriptor_dim = desc.empty() ? 0 : static_cast<uint32_t>(desc[0].size());
  for (size_t i = 0; i < pts.size(); ++i) {
    k.points.push_back({static_cast<float>(pts[i].x()), static_cast<float>(pts[i].y()), 1.0f});
    k.descriptors.insert(k.descriptors.end(), desc[i].begin(), desc[i].end());
  }
  return k;
}

std::vector<std::vector<float>> random_descriptors(std::mt19937_64& rng, size_t n, size_t dim) {
  std::normal_distribution<float> g;
  std::vector<std::vector<float>> out(n, std::vector<float>(dim));
  for (auto& d : out) {
    for (auto& v : d) v = g(rng);
  }
  return out;
}

// Nearest-neighbour ratio test ------------------------------------------------

TEST(Nnr, ExactMatchAccepted) {
  const auto q = make_set({{1, 1}}, {{1, 0}});
  const auto r = make_set({{1, 1}, {2, 2}}, {{1, 0}, {-5, 5}});
  const auto m = nnr_match(q, r);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].query_idx, 0u);
  EXPECT_EQ(m.pairs[0].ref_idx, 0u);
  EXPECT_EQ(m.pairs[0].distance, 0.0f);
}

TEST(Nnr, EquidistantRejectedSingleReferenceAccepted) {
  const auto q = make_set({{0, 0}}, {{0, 0}});
  const auto r = make_set({{0, 0}, {1, 1}}, {{1, 0}, {0, 1}});
  EXPECT_TRUE(nnr_match(q, r).pairs.empty());
  EXPECT_TRUE(nnr_match(q, r, 1.0).pairs.empty());
  const auto single = make_set({{0, 0}}, {{9, 9}});
  EXPECT_EQ(nnr_match(q, single).pairs.size(), 1u);
  EXPECT_TRUE(nnr_match(KeypointSet{}, r).pairs.empty());
  EXPECT_TRUE(nnr_match(q, KeypointSet{}).pairs.empty());
}

TEST(Nnr, DimensionMismatchAndBadRatio) {
  const auto q = make_set({{0, 0}}, {{0, 0}});
  const auto r = make_set({{0, 0}}, {{0, 0, 0}});
  EXPECT_THROW(nnr_match(q, r), Error);
  EXPECT_THROW(nnr_match(q, q, 0.0), Error);
  EXPECT_THROW(nnr_match(q, q, 1.5), Error);
}

TEST(Nnr, MatchesExhaustiveTwoNearestOracle) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const auto qd = random_descriptors(rng, 100, 16), rd = random_descriptors(rng, 200, 16);
    const KeypointSet q = make_set(std::vector<Eigen::Vector2d>(100, Eigen::Vector2d::Zero()), qd);
    const KeypointSet r = make_set(std::vector<Eigen::Vector2d>(200, Eigen::Vector2d::Zero()), rd);
    std::set<std::pair<uint32_t, uint32_t>> oracle;
    for (size_t i = 0; i < 100; ++i) {
      double d1 = INFINITY, d2 = INFINITY;
      size_t best = 0;
      for (size_t j = 0; j < 200; ++j) {
        double d = 0.0;
        for (size_t c = 0; c < 16; ++c) d += std::pow(static_cast<double>(qd[i][c]) - rd[j][c], 2.0);
        d = std::sqrt(d);
        if (d < d1) {
          d2 = d1;
          d1 = d;
          best = j;
        } else if (d < d2) {
          d2 = d;
        }
      }
      if (d1 / d2 < 0.8) oracle.insert({static_cast<uint32_t>(i), static_cast<uint32_t>(best)});
    }
    const auto m = nnr_match(q, r);
    std::set<std::pair<uint32_t, uint32_t>> got;
    for (const auto& p : m.pairs) got.insert({p.query_idx, p.ref_idx});
    EXPECT_EQ(got, oracle) << "seed " << seed;
    EXPECT_EQ(got.size(), m.pairs.size());
  }
}

// Homography / RANSAC ---------------------------------------------------------

struct Planted {
  KeypointSet query, ref;
  MatchSet matches;
  std::set<uint32_t> inlier_ids;
};

Planted plant(std::mt19937_64& rng, const Eigen::Matrix3d& H, size_t inliers, size_t outliers, double noise = 0.0) {
  std::uniform_real_distribution<double> ux(0, 346), uy(0, 260);
  std::normal_distribution<double> n(0.0, noise > 0 ? noise : 1.0);
  Planted p;
  p.query.descriptor_dim = p.ref.descriptor_dim = 0;
  for (size_t i = 0; i < inliers + outliers; ++i) {
    const Eigen::Vector2d q(ux(rng), uy(rng));
    Eigen::Vector2d r;
    if (i < inliers) {
      const Eigen::Vector3d h = H * q.homogeneous();
      r = h.hnormalized();
      if (noise > 0) r += Eigen::Vector2d(n(rng), n(rng));
      p.inlier_ids.insert(static_cast<uint32_t>(i));
    } else {
      r = Eigen::Vector2d(ux(rng), uy(rng));
    }
    p.query.points.push_back({static_cast<float>(q.x()), static_cast<float>(q.y()), 1});
    p.ref.points.push_back({static_cast<float>(r.x()), static_cast<float>(r.y()), 1});
    p.matches.pairs.push_back({static_cast<uint32_t>(i), static_cast<uint32_t>(i), 0.0f});
  }
  std::shuffle(p.matches.pairs.begin(), p.matches.pairs.end(), rng);
  return p;
}

Eigen::Matrix3d translation(double tx, double ty) {
  Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
  H(0, 2) = tx;
  H(1, 2) = ty;
  return H;
}

TEST(Ransac, IdentityTransform) {
  std::mt19937_64 rng(1);
  const auto p = plant(rng, Eigen::Matrix3d::Identity(), 20, 0);
  const auto result = ransac_homography(p.matches, p.query, p.ref, {});
  EXPECT_EQ(result.size(), 20u);
  EXPECT_LT((result.homography.H - Eigen::Matrix3d::Identity()).norm(), 1e-6);
}

TEST(Ransac, TooFewMatches) {
  std::mt19937_64 rng(2);
  const auto p = plant(rng, Eigen::Matrix3d::Identity(), 3, 0);
  const auto result = ransac_homography(p.matches, p.query, p.ref, {});
  EXPECT_EQ(result.size(), 0u);
  EXPECT_EQ(result.homography.H, Eigen::Matrix3d::Identity());
}

TEST(Ransac, PlantedTranslationWithOutliers) {
  std::mt19937_64 rng(3);
  const auto p = plant(rng, translation(10, -5), 40, 20);
  RansacParams params;
  params.seed = 99;
  const auto result = ransac_homography(p.matches, p.query, p.ref, params);
  size_t true_pos = 0;
  for (const auto& m : result.pairs) true_pos += p.inlier_ids.count(m.query_idx);
  EXPECT_GE(true_pos, 38u);
  EXPECT_LE(result.size() - true_pos, 2u);
  const Eigen::Vector2d t = result.homography.project({100, 100}) - Eigen::Vector2d(100, 100);
  EXPECT_NEAR(t.x(), 10.0, 0.5);
  EXPECT_NEAR(t.y(), -5.0, 0.5);
  EXPECT_NEAR(result.homography.H(2, 2), 1.0, 1e-12);
  EXPECT_GT(std::abs(result.homography.H.determinant()), 1e-12);
  for (const auto& m : result.pairs) {
    const Eigen::Vector2d q(p.query.points[m.query_idx].u, p.query.points[m.query_idx].v);
    const Eigen::Vector2d r(p.ref.points[m.ref_idx].u, p.ref.points[m.ref_idx].v);
    EXPECT_LT(std::sqrt(result.homography.transfer_error_sq(q, r)), params.epsilon);
  }
}

TEST(Ransac, PlantedModelsRecoveredInNinetyFivePercentOfTrials) {
  size_t successes = 0;
  for (uint64_t trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Matrix3d H = Eigen::Matrix3d::Identity();
    H(0, 0) += 0.1 * u(rng);
    H(0, 1) = 0.1 * u(rng);
    H(1, 0) = 0.1 * u(rng);
    H(1, 1) += 0.1 * u(rng);
    H(0, 2) = 30 * u(rng);
    H(1, 2) = 30 * u(rng);
    H(2, 0) = 1e-4 * u(rng);
    H(2, 1) = 1e-4 * u(rng);
    const auto p = plant(rng, H, 40, 20, 0.5);
    RansacParams params;
    params.seed = trial;
    const auto result = ransac_homography(p.matches, p.query, p.ref, params);
    size_t tp = 0;
    for (const auto& m : result.pairs) tp += p.inlier_ids.count(m.query_idx);
    const double precision = result.size() ? static_cast<double>(tp) / result.size() : 0.0;
    const double recall = static_cast<double>(tp) / 40.0;
    successes += precision >= 0.95 && recall >= 0.95;
  }
  EXPECT_GE(successes, 95u);
}

TEST(Ransac, DeterministicForSeed) {
  std::mt19937_64 rng(4);
  const auto p = plant(rng, translation(3, 4), 15, 30);
  RansacParams params;
  params.seed = 5;
  const auto a = ransac_homography(p.matches, p.query, p.ref, params);
  const auto b = ransac_homography(p.matches, p.query, p.ref, params);
  EXPECT_EQ(a.pairs, b.pairs);
  EXPECT_EQ(a.homography.H, b.homography.H);
}

TEST(Homography, FitRejectsDegenerateInput) {
  const std::vector<Eigen::Vector2d> collinear{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  EXPECT_FALSE(fit_homography(collinear, collinear).has_value());
  const std::vector<Eigen::Vector2d> three{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_FALSE(fit_homography(three, three).has_value());
  const std::vector<Eigen::Vector2d> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  const auto h = fit_homography(square, square);
  ASSERT_TRUE(h.has_value());
  EXPECT_LT((h->H - Eigen::Matrix3d::Identity()).norm(), 1e-9);
}

// Scores and keypoint re-ranking ------------------------------------------------

TEST(CombineScores, LinearForm) {
  EXPECT_DOUBLE_EQ(combine_scores(0.7, 0), 0.7);
  EXPECT_NEAR(combine_scores(0.7, 10, 0.05), 1.2, 1e-12);
  EXPECT_THROW(combine_scores(0.7, 1, -1.0), Error);
}

Shortlist shortlist_of(const std::vector<float>& cosines) {
  Shortlist s{0, {}};
  for (size_t i = 0; i < cosines.size(); ++i) s.candidates.push_back({i, cosines[i]});
  return s;
}

std::vector<uint64_t> ids(const RerankedShortlist& r) {
  std::vector<uint64_t> out;
  for (const auto& c : r.candidates) out.push_back(c.ref_id);
  return out;
}

TEST(RerankKeypoints, ZeroInliersKeepsCosineOrder) {
  const InMemoryFeatureStore store(std::vector<KeypointSet>(4), {});
  const auto r = rerank_keypoints(shortlist_of({0.9f, 0.8f, 0.8f, 0.1f}), KeypointSet{}, store, {});
  EXPECT_EQ(ids(r), (std::vector<uint64_t>{0, 1, 2, 3}));
  for (const auto& c : r.candidates) EXPECT_EQ(c.inliers, 0u);
}

TEST(RerankKeypoints, StrongGeometryPromotesFifthCandidate) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ux(20, 300), uy(20, 200);
  std::vector<Eigen::Vector2d> qp, rp;
  for (int i = 0; i < 40; ++i) {
    qp.emplace_back(ux(rng), uy(rng));
    rp.push_back(qp.back() + Eigen::Vector2d(7, -3));
  }
  const auto desc = random_descriptors(rng, 40, 32);
  const auto query = make_set(qp, desc);
  std::vector<KeypointSet> refs(5);
  refs[4] = make_set(rp, desc);
  const InMemoryFeatureStore store(refs, {});
  const auto r = rerank_keypoints(shortlist_of({0.95f, 0.9f, 0.8f, 0.7f, 0.6f}), query, store, {});
  EXPECT_EQ(ids(r), (std::vector<uint64_t>{4, 0, 1, 2, 3}));
  EXPECT_EQ(r.candidates[0].inliers, 40u);
  EXPECT_NEAR(r.candidates[0].s_prime, 0.6f + 0.05 * 40, 1e-6);

  KeypointRerankParams no_weight;
  no_weight.alpha = 0.0;
  EXPECT_EQ(ids(rerank_keypoints(shortlist_of({0.95f, 0.9f, 0.8f, 0.7f, 0.6f}), query, store, no_weight)),
            (std::vector<uint64_t>{0, 1, 2, 3, 4}));
}

TEST(RerankKeypoints, SingletonAndMissingKeypoints) {
  const InMemoryFeatureStore store(std::vector<KeypointSet>(1), {});
  EXPECT_EQ(ids(rerank_keypoints(shortlist_of({0.3f}), KeypointSet{}, store, {})), (std::vector<uint64_t>{0}));
  try {
    rerank_keypoints(shortlist_of({0.3f, 0.2f}), KeypointSet{}, store, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingKeypoints);
    EXPECT_EQ(e.context(), 1u);
  }
}

TEST(RerankKeypoints, PermutationAndThreadIndependence) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ux(0, 346), uy(0, 260);
  std::uniform_real_distribution<float> cos(-1, 1);
  const auto qdesc = random_descriptors(rng, 60, 16);
  std::vector<Eigen::Vector2d> qp;
  for (int i = 0; i < 60; ++i) qp.emplace_back(ux(rng), uy(rng));
  const auto query = make_set(qp, qdesc);
  std::vector<KeypointSet> refs;
  std::vector<float> cosines;
  for (int c = 0; c < 30; ++c) {
    // Each reference shares a random subset of the query points under a shift.
    std::vector<Eigen::Vector2d> rp;
    std::vector<std::vector<float>> rd;
    for (int i = 0; i < 60; ++i) {
      if (rng() % 3 == 0) {
        rp.push_back(qp[i] + Eigen::Vector2d(c, -c));
        rd.push_back(qdesc[i]);
      }
    }
    const auto extra = random_descriptors(rng, 20, 16);
    for (const auto& d : extra) {
      rp.emplace_back(ux(rng), uy(rng));
      rd.push_back(d);
    }
    refs.push_back(make_set(rp, rd));
    cosines.push_back(cos(rng));
  }
  std::sort(cosines.rbegin(), cosines.rend());
  const InMemoryFeatureStore store(refs, {});
  KeypointRerankParams one, many;
  one.ransac.seed = many.ransac.seed = 42;
  many.threads = 4;
  const auto a = rerank_keypoints(shortlist_of(cosines), query, store, one);
  const auto b = rerank_keypoints(shortlist_of(cosines), query, store, many);
  EXPECT_EQ(ids(a), ids(b));
  auto sorted = ids(a);
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  for (size_t i = 1; i < a.candidates.size(); ++i) {
    EXPECT_GE(a.candidates[i - 1].s_prime, a.candidates[i].s_prime);
    EXPECT_EQ(a.candidates[i].inliers, b.candidates[i].inliers);
  }
}

TEST(RerankKeypoints, SeedDependsOnQueryAndReference) {
  EXPECT_NE(candidate_seed(1, 2, 3), candidate_seed(1, 3, 2));
  EXPECT_NE(candidate_seed(1, 2, 3), candidate_seed(2, 2, 3));
  EXPECT_EQ(candidate_seed(1, 2, 3), candidate_seed(1, 2, 3));
}

// Depth ---------------------------------------------------------------------------

DepthMap random_depth(std::mt19937_64& rng, uint32_t h = 28, uint32_t w = 28) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  DepthMap d{FloatTensor({h, w, 1, 1})};
  for (auto& v : d.data.values()) v = u(rng);
  return d;
}

TEST(ResizeDepth, ConstantIdentityAndRamp) {
  for (uint32_t s : {5u, 28u, 40u, 97u}) {
    DepthMap c{FloatTensor({s, s + 3, 1, 1}, 3.5f)};
    const auto r = resize_depth(c);
    ASSERT_EQ(r.data.dims(), (FloatTensor::Dims{28, 28, 1, 1}));
    for (float v : r.data.values()) EXPECT_EQ(v, 3.5f);
  }
  std::mt19937_64 rng(8);
  const auto d = random_depth(rng);
  EXPECT_EQ(resize_depth(d).data, d.data);

  // Planar ramp z = 2x + 3y sampled at pixel centres.
  DepthMap ramp{FloatTensor({56, 56, 1, 1})};
  for (uint32_t y = 0; y < 56; ++y) {
    for (uint32_t x = 0; x < 56; ++x) ramp.data(y, x) = static_cast<float>(2.0 * x + 3.0 * y);
  }
  const auto small = resize_depth(ramp);
  const double gx = (small.data(0, 27) - small.data(0, 0)) / 27.0;
  const double gy = (small.data(27, 0) - small.data(0, 0)) / 27.0;
  EXPECT_NEAR(gx, 4.0, 1e-4);
  EXPECT_NEAR(gy, 6.0, 1e-4);
  for (uint32_t y = 1; y < 27; ++y) {
    for (uint32_t x = 1; x < 27; ++x) {
      EXPECT_NEAR(small.data(y, x), 2.0 * (2.0 * x + 0.5) + 3.0 * (2.0 * y + 0.5), 1e-3);
    }
  }
}

double naive_ssim(const DepthMap& a, const DepthMap& b) {
  double w[7][7], sum = 0.0;
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) sum += w[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / (2 * 1.5 * 1.5));
  }
  double lo = INFINITY, hi = -INFINITY;
  for (size_t i = 0; i < a.data.size(); ++i) {
    lo = std::min({lo, static_cast<double>(a.data.values()[i]), static_cast<double>(b.data.values()[i])});
    hi = std::max({hi, static_cast<double>(a.data.values()[i]), static_cast<double>(b.data.values()[i])});
  }
  const double L = hi > lo ? hi - lo : 1.0, c1 = std::pow(0.01 * L, 2), c2 = std::pow(0.03 * L, 2);
  double total = 0.0;
  int windows = 0;
  for (uint32_t r = 0; r + 7 <= a.height(); ++r) {
    for (uint32_t c = 0; c + 7 <= a.width(); ++c) {
      double ma = 0, mb = 0;
      for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
          ma += w[i][j] / sum * a.data(r + i, c + j);
          mb += w[i][j] / sum * b.data(r + i, c + j);
        }
      }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
          const double da = a.data(r + i, c + j) - ma, db = b.data(r + i, c + j) - mb;
          va += w[i][j] / sum * da * da;
          vb += w[i][j] / sum * db * db;
          cov += w[i][j] / sum * da * db;
        }
      }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  }
  return total / windows;
}

TEST(Ssim, MatchesNaiveWindowedOracle) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_depth(rng), b = random_depth(rng);
    const double s = ssim(a, b);
    EXPECT_NEAR(s, naive_ssim(a, b), 1e-9);
    EXPECT_NEAR(s, ssim(b, a), 1e-12);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Ssim, LargeOffsetStaysAccurate) {
  std::mt19937_64 rng(10);
  auto a = random_depth(rng), b = random_depth(rng);
  for (auto& v : a.data.values()) v += 1000.0f;
  for (auto& v : b.data.values()) v += 1000.0f;
  EXPECT_NEAR(ssim(a, b), naive_ssim(a, b), 1e-9);
}

TEST(Ssim, ConstantsAndErrors) {
  DepthMap c{FloatTensor({28, 28, 1, 1}, 2.0f)};
  EXPECT_NEAR(ssim(c, c), 1.0, 1e-12);
  DepthMap small{FloatTensor({27, 28, 1, 1})};
  try {
    ssim(c, small);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

RerankedShortlist keypoint_stage(size_t n) {
  RerankedShortlist r;
  for (size_t i = 0; i < n; ++i) r.candidates.push_back({i, 0.5f, 1.0 - 0.1 * i, 0, std::nullopt});
  return r;
}

TEST(RerankDepth, IdenticalDepthWins) {
  std::mt19937_64 rng(11);
  const auto query = random_depth(rng, 56, 56);
  std::vector<DepthMap> refs;
  for (int i = 0; i < 5; ++i) refs.push_back(random_depth(rng, 56, 56));
  refs[3] = query;
  const InMemoryFeatureStore store({}, refs);
  const auto r = rerank_depth(keypoint_stage(5), query, store);
  EXPECT_EQ(r.stage, RerankStage::Depth);
  EXPECT_EQ(r.candidates[0].ref_id, 3u);
  EXPECT_NEAR(*r.candidates[0].ssim, 1.0, 1e-9);
}

TEST(RerankDepth, AllTiesKeepKeypointOrder) {
  std::mt19937_64 rng(12);
  const auto shared = random_depth(rng);
  const InMemoryFeatureStore store({}, std::vector<DepthMap>(6, shared));
  EXPECT_EQ(ids(rerank_depth(keypoint_stage(6), random_depth(rng), store)), (std::vector<uint64_t>{0, 1, 2, 3, 4, 5}));
}

TEST(RerankDepth, OrderMatchesOracleSort) {
  std::mt19937_64 rng(13);
  const auto query = random_depth(rng);
  std::vector<DepthMap> refs;
  for (int i = 0; i < 5; ++i) {
    // Blend of the query and noise, so SSIM falls with the noise weight.
    auto noise = random_depth(rng);
    const float mix = static_cast<float>(rng() % 100) / 100.0f;
    for (size_t p = 0; p < noise.data.size(); ++p) {
      noise.data.values()[p] = mix * query.data.values()[p] + (1 - mix) * noise.data.values()[p];
    }
    refs.push_back(noise);
  }
  const InMemoryFeatureStore store({}, refs);
  std::vector<std::pair<double, uint64_t>> oracle;
  for (uint64_t i = 0; i < 5; ++i) oracle.push_back({naive_ssim(query, refs[i]), i});
  std::stable_sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  const auto r = rerank_depth(keypoint_stage(5), query, store, 0, 3);
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r.candidates[i].ref_id, oracle[i].second);
    EXPECT_NEAR(*r.candidates[i].ssim, oracle[i].first, 1e-9);
  }
}

TEST(RerankDepth, PartialDepthBudgetAndErrors) {
  std::mt19937_64 rng(14);
  const auto query = random_depth(rng);
  std::vector<DepthMap> refs;
  for (int i = 0; i < 4; ++i) refs.push_back(random_depth(rng));
  refs[3] = query;
  const InMemoryFeatureStore store({}, refs);
  const auto r = rerank_depth(keypoint_stage(4), query, store, 2);
  EXPECT_EQ(r.candidates[2].ref_id, 2u);
  EXPECT_EQ(r.candidates[3].ref_id, 3u);  // outside the depth budget, keeps its place
  EXPECT_FALSE(r.candidates[3].ssim.has_value());

  const InMemoryFeatureStore empty({}, {});
  try {
    rerank_depth(keypoint_stage(2), query, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDepth);
  }
  auto depth_stage = keypoint_stage(2);
  depth_stage.stage = RerankStage::Depth;
  EXPECT_THROW(rerank_depth(depth_stage, query, store), Error);
}

}  // namespace
}  // namespace evpr
