#include "evpr/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

#include "evpr/binary_io.hpp"

namespace evpr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& why, uint64_t line) {
  throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + why, line);
}

double to_double(const std::string& key, std::string_view v, uint64_t line) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) bad(key, "not a number", line);
  return out;
}

uint64_t to_uint(const std::string& key, std::string_view v, uint64_t line) {
  uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad(key, "not a non-negative integer", line);
  return out;
}

bool to_bool(const std::string& key, std::string_view v, uint64_t line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "not a boolean", line);
}

std::vector<double> to_list(const std::string& key, std::string_view v, uint64_t line) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_double(key, trim(v.substr(0, comma)), line));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string list(const std::vector<double>& values, double scale) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + fmt(values[i] / scale);
  return out;
}

void render_policy(std::ostringstream& s, const char* prefix, const WindowingPolicy& p) {
  if (const auto* t = std::get_if<FixedTime>(&p)) {
    s << prefix << "_us = " << t->length_us << "\n";
    s << prefix << "_stride_us = " << t->stride_us << "\n";
  } else {
    const auto& c = std::get<FixedCount>(p);
    s << prefix << "_events = " << c.events << "\n";
    s << prefix << "_stride_events = " << c.stride << "\n";
  }
}

ProviderSpec* provider_for_role(PipelineConfig& c, std::string_view role) {
  if (role == "global_provider") return &c.global_provider;
  if (role == "keypoint_provider") return &c.keypoint_provider;
  if (role == "depth_provider") return c.depth_provider ? &*c.depth_provider : nullptr;
  return nullptr;
}

}  // namespace

std::string_view to_string(RerankMode mode) noexcept {
  switch (mode) {
    case RerankMode::GlobalOnly: return "global";
    case RerankMode::Keypoint: return "keypoint";
    case RerankMode::KeypointPlusDepth: return "keypoint+depth";
  }
  return "keypoint";
}

RerankMode parse_mode(std::string_view text) {
  if (text == "global" || text == "global-only" || text == "GlobalOnly") return RerankMode::GlobalOnly;
  if (text == "keypoint" || text == "Keypoint") return RerankMode::Keypoint;
  if (text == "keypoint+depth" || text == "depth" || text == "KeypointPlusDepth") return RerankMode::KeypointPlusDepth;
  throw Error(ErrorCode::ConfigError, "unknown mode '" + std::string(text) + "' (global | keypoint | keypoint+depth)");
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ConfigError, what);
  };
  evpr::validate(window);
  if (query_window) evpr::validate(*query_window);
  require(geometry.width > 0 && geometry.height > 0, "sensor geometry must be positive");
  require(!mcts_taus_us.empty(), "mcts_taus_ms must list at least one time constant");
  for (double t : mcts_taus_us) require(t > 0.0, "mcts time constants must be positive");
  require(tencode.epsilon_us > 0.0, "tencode_epsilon_us must be positive");
  require(gamma >= 1.0, "gamma must be >= 1");
  require(k >= 1, "k must be positive");
  require(epsilon > 0.0, "epsilon must be positive");
  require(alpha >= 0.0, "alpha must be non-negative");
  require(nnr_ratio > 0.0 && nnr_ratio <= 1.0, "nnr_ratio must lie in (0, 1]");
  require(ransac_iterations >= 1, "ransac_iterations must be positive");
  require(ransac_early_exit > 0.0, "ransac_early_exit must be positive");
  require(k_depth <= k, "k_depth must not exceed k");
  require(tolerance_m > 0.0, "tolerance_m must be positive");
  require(db_stride >= 1, "db_stride must be positive");
  require(mode != RerankMode::KeypointPlusDepth || depth_provider.has_value(),
          "mode keypoint+depth requires a depth provider");
}

PipelineConfig parse_config(std::string_view text, PipelineConfig c) {
  uint64_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigError, "expected key = value", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view v = trim(line.substr(eq + 1));

    if (const auto dot = key.find('.'); dot != std::string::npos) {
      ProviderSpec* spec = provider_for_role(c, std::string_view(key).substr(0, dot));
      if (!spec) bad(key, "unknown provider role or provider disabled", line_no);
      spec->parameters[key.substr(dot + 1)] = std::string(v);
      continue;
    }

    auto* ft = std::get_if<FixedTime>(&c.window);
    auto* fc = std::get_if<FixedCount>(&c.window);
    if (key == "window_us" || key == "window_ms") {
      const auto us = static_cast<uint64_t>(std::llround(to_double(key, v, line_no) * (key == "window_ms" ? 1000.0 : 1.0)));
      c.window = FixedTime{us, ft ? ft->stride_us : 0};
    } else if (key == "window_stride_us") {
      if (!ft) bad(key, "window is event-count based", line_no);
      ft->stride_us = to_uint(key, v, line_no);
    } else if (key == "window_events") {
      c.window = FixedCount{to_uint(key, v, line_no), fc ? fc->stride : 0};
    } else if (key == "window_stride_events") {
      if (!fc) bad(key, "window is time based", line_no);
      fc->stride = to_uint(key, v, line_no);
    } else if (key == "query_window_us" || key == "query_window_ms") {
      const auto us = static_cast<uint64_t>(std::llround(to_double(key, v, line_no) * (key == "query_window_ms" ? 1000.0 : 1.0)));
      c.query_window = FixedTime{us, 0};
    } else if (key == "query_window_events") {
      c.query_window = FixedCount{to_uint(key, v, line_no), 0};
    } else if (key == "sensor_width") {
      c.geometry.width = static_cast<uint16_t>(to_uint(key, v, line_no));
    } else if (key == "sensor_height") {
      c.geometry.height = static_cast<uint16_t>(to_uint(key, v, line_no));
    } else if (key == "strict_events") {
      c.strict_events = to_bool(key, v, line_no);
    } else if (key == "text_header") {
      c.text_header = to_bool(key, v, line_no);
    } else if (key == "mcts_taus_ms") {
      c.mcts_taus_us.clear();
      for (double ms : to_list(key, v, line_no)) c.mcts_taus_us.push_back(ms * 1000.0);
    } else if (key == "tencode_epsilon_us") {
      c.tencode.epsilon_us = to_double(key, v, line_no);
    } else if (key == "tencode_background") {
      const auto bg = to_list(key, v, line_no);
      if (bg.size() != 3) bad(key, "expected three comma-separated values", line_no);
      for (size_t i = 0; i < 3; ++i) c.tencode.background[i] = static_cast<float>(bg[i]);
    } else if (key == "gamma") {
      c.gamma = to_double(key, v, line_no);
    } else if (key == "k") {
      c.k = to_uint(key, v, line_no);
    } else if (key == "epsilon") {
      c.epsilon = to_double(key, v, line_no);
    } else if (key == "alpha") {
      c.alpha = to_double(key, v, line_no);
    } else if (key == "nnr_ratio") {
      c.nnr_ratio = to_double(key, v, line_no);
    } else if (key == "ransac_iterations") {
      c.ransac_iterations = static_cast<uint32_t>(to_uint(key, v, line_no));
    } else if (key == "ransac_early_exit") {
      c.ransac_early_exit = to_double(key, v, line_no);
    } else if (key == "k_depth") {
      c.k_depth = to_uint(key, v, line_no);
    } else if (key == "mode") {
      c.mode = parse_mode(v);
    } else if (key == "global_provider") {
      c.global_provider = ProviderSpec::parse(v);
    } else if (key == "keypoint_provider") {
      c.keypoint_provider = ProviderSpec::parse(v);
    } else if (key == "depth_provider") {
      if (v == "none") {
        c.depth_provider.reset();
      } else {
        c.depth_provider = ProviderSpec::parse(v);
      }
    } else if (key == "seed") {
      c.seed = to_uint(key, v, line_no);
    } else if (key == "tolerance_m") {
      c.tolerance_m = to_double(key, v, line_no);
    } else if (key == "threads") {
      c.threads = static_cast<unsigned>(to_uint(key, v, line_no));
    } else if (key == "db_stride") {
      c.db_stride = to_uint(key, v, line_no);
    } else if (key == "warmup") {
      c.warmup = to_uint(key, v, line_no);
    } else if (key == "allow_fingerprint_mismatch") {
      c.allow_fingerprint_mismatch = to_bool(key, v, line_no);
    } else {
      bad(key, "unknown key", line_no);
    }
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base) {
  const auto bytes = io::read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), std::move(base));
}

std::string render_config(const PipelineConfig& c) {
  std::ostringstream s;
  render_policy(s, "window", c.window);
  if (c.query_window) {
    if (const auto* t = std::get_if<FixedTime>(&*c.query_window)) {
      s << "query_window_us = " << t->length_us << "\n";
    } else {
      s << "query_window_events = " << std::get<FixedCount>(*c.query_window).events << "\n";
    }
  }
  s << "sensor_width = " << c.geometry.width << "\n";
  s << "sensor_height = " << c.geometry.height << "\n";
  s << "strict_events = " << (c.strict_events ? "true" : "false") << "\n";
  s << "text_header = " << (c.text_header ? "true" : "false") << "\n";
  s << "mcts_taus_ms = " << list(c.mcts_taus_us, 1000.0) << "\n";
  s << "tencode_epsilon_us = " << fmt(c.tencode.epsilon_us) << "\n";
  s << "tencode_background = " << fmt(c.tencode.background[0]) << "," << fmt(c.tencode.background[1]) << ","
    << fmt(c.tencode.background[2]) << "\n";
  s << "gamma = " << fmt(c.gamma) << "\n";
  s << "k = " << c.k << "\n";
  s << "epsilon = " << fmt(c.epsilon) << "\n";
  s << "alpha = " << fmt(c.alpha) << "\n";
  s << "nnr_ratio = " << fmt(c.nnr_ratio) << "\n";
  s << "ransac_iterations = " << c.ransac_iterations << "\n";
  s << "ransac_early_exit = " << fmt(c.ransac_early_exit) << "\n";
  s << "k_depth = " << c.k_depth << "\n";
  s << "mode = " << to_string(c.mode) << "\n";
  auto provider = [&](const char* role, const ProviderSpec& p) {
    s << role << " = " << p.to_string() << "\n";
    for (const auto& [name, value] : p.parameters) s << role << "." << name << " = " << value << "\n";
  };
  provider("global_provider", c.global_provider);
  provider("keypoint_provider", c.keypoint_provider);
  if (c.depth_provider) {
    provider("depth_provider", *c.depth_provider);
  } else {
    s << "depth_provider = none\n";
  }
  s << "seed = " << c.seed << "\n";
  s << "tolerance_m = " << fmt(c.tolerance_m) << "\n";
  s << "db_stride = " << c.db_stride << "\n";
  s << "warmup = " << c.warmup << "\n";
  return s.str();
}

}  // namespace evpr
