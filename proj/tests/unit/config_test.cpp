#include <gtest/gtest.h>

#include <cmath>

#include "evpr/config.hpp"
#include "evpr/error.hpp"
#include "evpr/geo.hpp"

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

TEST(Config, DefaultsAreValid) {
  const PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.gamma, 5.0);
  EXPECT_EQ(c.k, 50u);
  EXPECT_EQ(c.epsilon, 5.0);
  EXPECT_EQ(c.alpha, 0.05);
  EXPECT_EQ(c.nnr_ratio, 0.8);
  EXPECT_EQ(std::get<FixedTime>(c.window).length_us, 50'000u);
  EXPECT_EQ(c.mcts_taus_us, (std::vector<double>{10'000, 20'000, 30'000, 40'000, 50'000}));
}

TEST(Config, ParseOverridesAndComments) {
  const auto c = parse_config(
      "# comment\n"
      "window_ms = 25\n"
      "gamma = 3\n"
      "k = 10\n"
      "mode = global\n"
      "mcts_taus_ms = 5,10\n"
      "depth_provider = none\n"
      "seed = 9\n");
  EXPECT_EQ(std::get<FixedTime>(c.window).length_us, 25'000u);
  EXPECT_EQ(c.gamma, 3.0);
  EXPECT_EQ(c.k, 10u);
  EXPECT_EQ(c.mode, RerankMode::GlobalOnly);
  EXPECT_EQ(c.mcts_taus_us, (std::vector<double>{5'000, 10'000}));
  EXPECT_FALSE(c.depth_provider.has_value());
  EXPECT_EQ(c.seed, 9u);
}

TEST(Config, RenderRoundTrips) {
  auto c = parse_config("window_events = 5000\nalpha = 0.125\nk_depth = 7\nmode = keypoint+depth\n"
                        "keypoint_provider.smoothing_sigma = 1.5\ntolerance_m = 3\n");
  const auto again = parse_config(render_config(c));
  EXPECT_EQ(render_config(again), render_config(c));
  EXPECT_EQ(std::get<FixedCount>(again.window).events, 5000u);
  EXPECT_EQ(again.alpha, 0.125);
  EXPECT_EQ(again.k_depth, 7u);
  EXPECT_EQ(again.mode, RerankMode::KeypointPlusDepth);
  EXPECT_EQ(again.tolerance_m, 3.0);
}

TEST(Config, RejectsBadValues) {
  EXPECT_EQ(code_of([] { parse_config("gamma = abc\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("no_such_key = 1\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("missing equals\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { parse_config("mode = fancy\n"); }), ErrorCode::ConfigError);
  for (const char* bad : {"gamma = 0.5\n", "k = 0\n", "epsilon = 0\n", "alpha = -1\n", "nnr_ratio = 1.5\n",
                          "tolerance_m = 0\n", "db_stride = 0\n", "mcts_taus_ms = 0\n", "k = 5\nk_depth = 6\n"}) {
    EXPECT_EQ(code_of([&] { parse_config(bad).validate(); }), ErrorCode::ConfigError) << bad;
  }
  EXPECT_EQ(code_of([] { parse_config("depth_provider = none\nmode = keypoint+depth\n").validate(); }),
            ErrorCode::ConfigError);
  EXPECT_EQ(category_of(ErrorCode::ConfigError), ErrorCategory::Config);
  EXPECT_EQ(category_of(ErrorCode::ProviderFailure), ErrorCategory::Provider);
  EXPECT_EQ(category_of(ErrorCode::MalformedLine), ErrorCategory::Data);
}

TEST(Config, ModeNames) {
  for (RerankMode m : {RerankMode::GlobalOnly, RerankMode::Keypoint, RerankMode::KeypointPlusDepth}) {
    EXPECT_EQ(parse_mode(to_string(m)), m);
  }
}

TEST(Geo, OriginMapsToZeroAndAxesAreEastNorth) {
  const GeodeticPoint origin{-27.47, 153.02, 10.0};
  const auto o = to_local_enu(origin, origin);
  EXPECT_NEAR(o.x, 0.0, 1e-9);
  EXPECT_NEAR(o.y, 0.0, 1e-9);

  // One arc-second of latitude is about 30.8 m; a longitude step scales by cos(lat).
  const auto north = to_local_enu({origin.lat_deg + 1.0 / 3600, origin.lon_deg, 10.0}, origin);
  EXPECT_NEAR(north.x, 0.0, 1e-3);
  EXPECT_NEAR(north.y, 30.8, 0.2);
  const auto east = to_local_enu({origin.lat_deg, origin.lon_deg + 1.0 / 3600, 10.0}, origin);
  EXPECT_NEAR(east.y, 0.0, 1e-3);
  EXPECT_NEAR(east.x, 30.9 * std::cos(origin.lat_deg * M_PI / 180.0), 0.2);
}

TEST(Geo, TrackUsesFirstPointAsOrigin) {
  const std::vector<GeodeticPoint> track{{10, 20, 0}, {10.001, 20, 0}, {10, 20.001, 0}};
  const auto local = to_local_enu(track);
  ASSERT_EQ(local.size(), 3u);
  EXPECT_NEAR(local[0].x, 0.0, 1e-9);
  EXPECT_GT(local[1].y, 100.0);
  EXPECT_GT(local[2].x, 100.0);
  EXPECT_TRUE(to_local_enu(std::vector<GeodeticPoint>{}).empty());
}

}  // namespace
}  // namespace evpr
