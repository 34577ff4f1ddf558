#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "evpr/binary_io.hpp"
#include "evpr/error.hpp"
#include "evpr/pipeline.hpp"
#include "synthetic_scene.hpp"
#include "test_util.hpp"

namespace evpr {
namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::InvalidArgument;
}

nlohmann::json read_manifest(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::vector<uint8_t> bytes_of(const std::filesystem::path& p) { return io::read_file(p); }

PipelineConfig small_config(RerankMode mode) {
  PipelineConfig c;
  c.mode = mode;
  c.k = 10;
  c.threads = 1;
  return c;
}

/// Three-second textured scene and a jittered copy, built once.
class SceneTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    testing::SceneParams p;
    p.duration_us = 3'000'000;
    reference_ = new EventStream(testing::generate_scene(p));
    query_ = new EventStream(testing::jitter_copy(*reference_, {}));
    dir_ = new testing::TempDir("scene");
    build_database(*reference_, small_config(RerankMode::KeypointPlusDepth), dir_->path());
  }
  static void TearDownTestSuite() {
    delete dir_;
    delete query_;
    delete reference_;
  }

  static std::vector<QueryResult> run(const PipelineConfig& c, const EventStream& s, unsigned threads = 1) {
    return QueryEngine(c, dir_->path()).run_all(s, threads);
  }

  static EventStream* reference_;
  static EventStream* query_;
  static testing::TempDir* dir_;
};

EventStream* SceneTest::reference_ = nullptr;
EventStream* SceneTest::query_ = nullptr;
testing::TempDir* SceneTest::dir_ = nullptr;

std::vector<uint64_t> order(const QueryResult& r) {
  std::vector<uint64_t> ids;
  for (const auto& c : r.ranking.candidates) ids.push_back(c.ref_id);
  return ids;
}

std::string serialize(const std::vector<QueryResult>& results) {
  std::ostringstream s;
  write_results(s, results);
  return s.str();
}

TEST(Build, OneSecondStreamGivesTwentyFrames) {
  testing::TempDir dir("build");
  auto stream = testing::random_stream(1, 40'000, {128, 96}, 1'000'000, 1);
  stream.events.insert(stream.events.begin(), Event{0, 5, 5, 1});
  const auto summary = build_database(stream, small_config(RerankMode::Keypoint), dir.path());
  EXPECT_EQ(summary.frames, 20u);
  const auto manifest = read_manifest(dir / "manifest.json");
  EXPECT_EQ(manifest["frame_count"], 20);
  const auto db = load_database(dir / "descriptors.evpd");
  EXPECT_EQ(db.matrix.rows(), 20u);
  EXPECT_EQ(FeatureArchive::load(dir / "keypoints.evpa").count(ArchiveEntryKind::Keypoints), 20u);
  EXPECT_EQ(FeatureArchive::load(dir / "depth.evpa").count(ArchiveEntryKind::Depth), 20u);
}

TEST(Build, EmptyStreamWarns) {
  testing::TempDir dir("build");
  EventStream empty;
  empty.geometry = {128, 96};
  const auto summary = build_database(empty, small_config(RerankMode::Keypoint), dir.path());
  EXPECT_EQ(summary.frames, 0u);
  EXPECT_FALSE(summary.warnings.empty());
  const auto manifest = read_manifest(dir / "manifest.json");
  EXPECT_EQ(manifest["frame_count"], 0);
  const QueryEngine engine(small_config(RerankMode::Keypoint), dir.path());
  const auto results = engine.run_all(testing::random_stream(2, 1000, {128, 96}, 100'000), 1);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_TRUE(results[0].ranking.candidates.empty());
}

TEST(Build, StrideKeepsEveryNthWindow) {
  testing::TempDir dir("build");
  auto stream = testing::random_stream(3, 20'000, {128, 96}, 1'000'000, 1);
  stream.events.insert(stream.events.begin(), Event{0, 5, 5, 1});
  auto c = small_config(RerankMode::GlobalOnly);
  c.db_stride = 3;
  EXPECT_EQ(build_database(stream, c, dir.path()).frames, 7u);
  const auto manifest = read_manifest(dir / "manifest.json");
  EXPECT_EQ(manifest["window_index"][1], 3);
}

TEST_F(SceneTest, RebuildIsByteIdentical) {
  testing::TempDir again("rebuild");
  auto c = small_config(RerankMode::KeypointPlusDepth);
  c.threads = 3;
  build_database(*reference_, c, again.path());
  for (const char* f : {"descriptors.evpd", "keypoints.evpa", "depth.evpa"}) {
    EXPECT_EQ(bytes_of(dir_->path() / f), bytes_of(again / f)) << f;
  }
}

TEST_F(SceneTest, IncompatibleConfigDetectedBeforeQuery) {
  auto c = small_config(RerankMode::Keypoint);
  c.gamma = 3.0;
  EXPECT_EQ(code_of([&] { QueryEngine(c, dir_->path()); }), ErrorCode::ManifestMismatch);
  c = small_config(RerankMode::Keypoint);
  c.keypoint_provider.parameters["smoothing_sigma"] = "2.0";
  EXPECT_EQ(code_of([&] { QueryEngine(c, dir_->path()); }), ErrorCode::ManifestMismatch);
  c.allow_fingerprint_mismatch = true;
  EXPECT_NO_THROW(QueryEngine(c, dir_->path()));
  EXPECT_EQ(code_of([&] { QueryEngine(small_config(RerankMode::Keypoint), dir_->path() / "nope"); }),
            ErrorCode::MissingArtifact);
}

TEST_F(SceneTest, MissingDepthArchiveOnlyMattersInDepthMode) {
  testing::TempDir copy("copy");
  std::filesystem::copy(dir_->path(), copy.path(), std::filesystem::copy_options::recursive);
  std::filesystem::remove(copy / "depth.evpa");
  EXPECT_NO_THROW(QueryEngine(small_config(RerankMode::Keypoint), copy.path()));
  EXPECT_EQ(code_of([&] { QueryEngine(small_config(RerankMode::KeypointPlusDepth), copy.path()); }),
            ErrorCode::MissingArtifact);
}

TEST_F(SceneTest, SelfRetrievalIsPerfect) {
  const auto results = run(small_config(RerankMode::GlobalOnly), *reference_);
  ASSERT_EQ(results.size(), 60u);
  for (const auto& r : results) {
    EXPECT_EQ(r.ranking.candidates.front().ref_id, r.query_id);
    EXPECT_NEAR(r.ranking.candidates.front().cosine, 1.0, 1e-5);
  }
}

TEST_F(SceneTest, ZeroAlphaKeepsGlobalOrder) {
  auto c = small_config(RerankMode::Keypoint);
  c.alpha = 0.0;
  const auto keypoint = run(c, *query_);
  const auto global = run(small_config(RerankMode::GlobalOnly), *query_);
  ASSERT_EQ(keypoint.size(), global.size());
  for (size_t i = 0; i < global.size(); ++i) EXPECT_EQ(order(keypoint[i]), order(global[i]));
}

TEST_F(SceneTest, ModesPermuteTheSameCandidates) {
  const auto global = run(small_config(RerankMode::GlobalOnly), *query_);
  const auto keypoint = run(small_config(RerankMode::Keypoint), *query_);
  const auto depth = run(small_config(RerankMode::KeypointPlusDepth), *query_);
  size_t hits = 0;
  for (size_t i = 0; i < global.size(); ++i) {
    auto g = order(global[i]), k = order(keypoint[i]), d = order(depth[i]);
    EXPECT_EQ(g.size(), 10u);
    std::sort(g.begin(), g.end());
    std::sort(k.begin(), k.end());
    std::sort(d.begin(), d.end());
    EXPECT_EQ(g, k);
    EXPECT_EQ(g, d);
    hits += keypoint[i].ranking.candidates[0].ref_id == i;
    for (const auto& c : depth[i].ranking.candidates) EXPECT_TRUE(c.ssim.has_value());
  }
  EXPECT_GE(hits, 57u);
}

TEST_F(SceneTest, ResultsIndependentOfThreadCount) {
  const auto c = small_config(RerankMode::KeypointPlusDepth);
  const auto one = serialize(run(c, *query_, 1));
  EXPECT_EQ(one, serialize(run(c, *query_, 4)));
  // Online mode: one window at a time with parallel re-ranking.
  const QueryEngine engine(c, dir_->path());
  std::vector<QueryResult> online;
  for (const auto& w : window_stream(*query_, c.query_policy())) online.push_back(engine.run(w, query_->geometry, w.index, 3));
  EXPECT_EQ(one, serialize(online));
}

TEST_F(SceneTest, ResultsRoundTripThroughRankingReader) {
  const auto results = run(small_config(RerankMode::Keypoint), *query_);
  std::istringstream in(serialize(results));
  const auto rankings = read_rankings(in);
  ASSERT_EQ(rankings.size(), results.size());
  for (size_t i = 0; i < results.size(); ++i) EXPECT_EQ(rankings[i].ref_ids, order(results[i]));

  const auto j = to_json(results[0]);
  EXPECT_EQ(j["candidates"][0]["rank"], 1);
  EXPECT_TRUE(j["candidates"][0].contains("s_prime"));
  EXPECT_FALSE(j["candidates"][0].contains("ssim"));
  EXPECT_FALSE(to_json(run(small_config(RerankMode::GlobalOnly), *query_)[0])["candidates"][0].contains("s_prime"));

  std::istringstream bad("{\"query_id\": 0, \"candidates\": []}\nnot json\n");
  try {
    read_rankings(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLine);
    EXPECT_EQ(e.context(), 2u);
  }
}

TEST_F(SceneTest, BenchReportsEveryQuery) {
  auto c = small_config(RerankMode::Keypoint);
  c.warmup = 2;
  const QueryEngine engine(c, dir_->path());
  const auto report = bench_queries(engine, *query_, 1);
  const size_t windows = window_stream(*query_, c.query_policy()).size();
  EXPECT_EQ(report.per_query.size(), windows);
  EXPECT_EQ(report.summary.measured, windows - 2);
  EXPECT_GT(report.summary.median_hz, 0.0);
  EventStream empty;
  empty.geometry = query_->geometry;
  EXPECT_TRUE(bench_queries(engine, empty, 1).per_query.empty());
}

}  // namespace
}  // namespace evpr
