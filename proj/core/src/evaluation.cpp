#include "evpr/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "evpr/binary_io.hpp"
#include "evpr/tensor.hpp"

namespace evpr {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) return out;
    line.remove_prefix(comma + 1);
  }
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end && std::isfinite(out);
}

const Position& lookup(const PositionTable& table, uint64_t id, const char* side) {
  const auto it = table.find(id);
  if (it == table.end()) {
    throw Error(ErrorCode::MissingPosition, std::string("no ") + side + " position for frame " + std::to_string(id), id);
  }
  return it->second;
}

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Uniform grid over reference positions with cell size = tolerance, so any
/// in-tolerance neighbour lies in the 3x3 block of cells around a query.
class ReferenceGrid {
 public:
  ReferenceGrid(const PositionTable& refs, double cell) : cell_(cell) {
    for (const auto& [id, p] : refs) cells_[key(cell_index(p.x), cell_index(p.y))].push_back(p);
  }

  bool any_within(const Position& q, double tolerance) const {
    const int64_t cx = cell_index(q.x), cy = cell_index(q.y);
    for (int64_t dx = -1; dx <= 1; ++dx) {
      for (int64_t dy = -1; dy <= 1; ++dy) {
        const auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (const Position& p : it->second) {
          if (distance(p, q) <= tolerance) return true;
        }
      }
    }
    return false;
  }

 private:
  int64_t cell_index(double v) const { return static_cast<int64_t>(std::floor(v / cell_)); }
  static uint64_t key(int64_t x, int64_t y) {
    return (static_cast<uint64_t>(x) * 0x9E3779B97F4A7C15ULL) ^ static_cast<uint64_t>(y);
  }

  double cell_;
  // Hash collisions only add candidates; the distance test stays exact.
  std::unordered_map<uint64_t, std::vector<Position>> cells_;
};

}  // namespace

GroundTruth GroundTruth::from_indices(size_t n_ref, size_t n_query, double tolerance) {
  GroundTruth gt;
  gt.tolerance_m = tolerance;
  for (size_t i = 0; i < n_ref; ++i) gt.reference[i] = {static_cast<double>(i), 0.0};
  for (size_t i = 0; i < n_query; ++i) gt.query[i] = {static_cast<double>(i), 0.0};
  return gt;
}

PositionTable parse_positions_csv(std::string_view text) {
  PositionTable table;
  uint64_t line_no = 0;
  bool first = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line);
    uint64_t id = 0;
    const bool id_ok = [&] {
      const auto* end = fields[0].data() + fields[0].size();
      auto [ptr, ec] = std::from_chars(fields[0].data(), end, id);
      return ec == std::errc{} && ptr == end;
    }();
    if (!id_ok && first) {
      first = false;
      continue;  // header
    }
    first = false;
    double x = 0.0, y = 0.0;
    if (!id_ok || fields.size() < 3 || fields.size() > 4 || !parse_double(fields[1], x) || !parse_double(fields[2], y)) {
      throw Error(ErrorCode::MalformedLine, "expected frame_id,x_m,y_m[,timestamp_us]", line_no);
    }
    if (!table.emplace(id, Position{x, y}).second) {
      throw Error(ErrorCode::MalformedLine, "duplicate frame id " + std::to_string(id), line_no);
    }
  }
  return table;
}

PositionTable load_positions_csv(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return parse_positions_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RecallReport recall_at_k(const std::vector<QueryRanking>& rankings, const GroundTruth& ground_truth,
                         const std::vector<size_t>& ks) {
  if (ks.empty()) throw Error(ErrorCode::InvalidArgument, "at least one K is required");
  if (!(ground_truth.tolerance_m > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be positive");
  for (size_t k : ks) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "K must be at least 1");
  }

  RecallReport report;
  report.tolerance_m = ground_truth.tolerance_m;
  report.queries = rankings.size();
  for (size_t k : ks) report.true_positives[k] = 0;

  const double tol = ground_truth.tolerance_m;
  const ReferenceGrid grid(ground_truth.reference, tol);
  for (const QueryRanking& ranking : rankings) {
    const Position& q = lookup(ground_truth.query, ranking.query_id, "query");
    if (!grid.any_within(q, tol)) continue;
    ++report.gtp;
    // Rank of the first in-tolerance candidate; a hit at rank r counts for every K > r.
    size_t first_hit = ranking.ref_ids.size();
    for (size_t r = 0; r < ranking.ref_ids.size(); ++r) {
      if (distance(lookup(ground_truth.reference, ranking.ref_ids[r], "reference"), q) <= tol) {
        first_hit = r;
        break;
      }
    }
    for (auto& [k, tp] : report.true_positives) tp += first_hit < k;
  }

  report.undefined = report.gtp == 0;
  if (report.undefined) report.warnings.emplace_back("no query has a reference within tolerance; recall undefined");
  for (const auto& [k, tp] : report.true_positives) {
    report.recall[k] = report.gtp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(report.gtp);
  }
  return report;
}

nlohmann::json to_json(const RecallReport& report) {
  nlohmann::json j;
  j["recall"] = nlohmann::json::object();
  j["true_positives"] = nlohmann::json::object();
  for (const auto& [k, r] : report.recall) j["recall"][std::to_string(k)] = r;
  for (const auto& [k, tp] : report.true_positives) j["true_positives"][std::to_string(k)] = tp;
  j["gtp"] = report.gtp;
  j["queries"] = report.queries;
  j["undefined"] = report.undefined;
  j["tolerance_m"] = report.tolerance_m;
  j["warnings"] = report.warnings;
  j["config_fingerprint"] = report.config_fingerprint;
  return j;
}

TimingSummary summarize(const std::vector<QueryTiming>& timings, size_t warmup) {
  TimingSummary s;
  if (timings.size() <= warmup) return s;
  std::vector<double> durations;
  for (size_t i = warmup; i < timings.size(); ++i) durations.push_back(timings[i].total_seconds);
  s.measured = durations.size();
  double sum = 0.0;
  for (double d : durations) sum += d;
  s.mean_seconds = sum / static_cast<double>(s.measured);
  std::sort(durations.begin(), durations.end());
  const size_t mid = durations.size() / 2;
  s.median_seconds = durations.size() % 2 ? durations[mid] : 0.5 * (durations[mid - 1] + durations[mid]);
  s.mean_hz = sum > 0.0 ? static_cast<double>(s.measured) / sum : 0.0;
  s.median_hz = s.median_seconds > 0.0 ? 1.0 / s.median_seconds : 0.0;
  return s;
}

TimingReport measure_runtime(TimedPipeline& pipeline, size_t warmup) {
  TimingReport report;
  report.warmup = warmup;
  const size_t n = pipeline.query_count();
  report.per_query.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    StageTimer timer;
    const auto start = std::chrono::steady_clock::now();
    pipeline.run_query(i, timer);
    QueryTiming t;
    t.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    t.query_id = i;
    t.stage_seconds = timer.seconds();
    report.per_query.push_back(t);
  }
  report.summary = summarize(report.per_query, warmup);
  return report;
}

nlohmann::json to_json(const TimingReport& report) {
  static constexpr const char* kNames[kStageCount] = {"representation", "embedding", "retrieval", "rerank"};
  nlohmann::json j;
  j["warmup"] = report.warmup;
  j["per_query"] = nlohmann::json::array();
  for (const auto& q : report.per_query) {
    nlohmann::json e{{"query_id", q.query_id}, {"total_s", q.total_seconds}, {"hz", q.hz()}};
    for (size_t s = 0; s < kStageCount; ++s) e["stages_s"][kNames[s]] = q.stage_seconds[s];
    j["per_query"].push_back(std::move(e));
  }
  j["summary"] = {{"measured", report.summary.measured},
                  {"mean_s", report.summary.mean_seconds},
                  {"median_s", report.summary.median_seconds},
                  {"mean_hz", report.summary.mean_hz},
                  {"median_hz", report.summary.median_hz}};
  return j;
}

void export_distance_matrix(const SimilarityMatrix& similarity, const std::filesystem::path& path,
                            MatrixFormat format) {
  if (format == MatrixFormat::TensorDump) {
    FloatTensor t({static_cast<uint32_t>(similarity.n_ref), static_cast<uint32_t>(similarity.n_query), 1, 1});
    for (size_t r = 0; r < similarity.n_ref; ++r) {
      for (size_t q = 0; q < similarity.n_query; ++q) t(r, q) = static_cast<float>(1.0 - similarity.at(r, q));
    }
    write_tensor_dump(path, t);
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  char buf[32];
  for (size_t r = 0; r < similarity.n_ref; ++r) {
    for (size_t q = 0; q < similarity.n_query; ++q) {
      std::snprintf(buf, sizeof buf, "%.9g", 1.0 - static_cast<double>(similarity.at(r, q)));
      if (q) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

void export_descriptors(const DescriptorMatrix& descriptors, const std::filesystem::path& path, MatrixFormat format) {
  const size_t rows = descriptors.rows(), cols = descriptors.cols();
  if (format == MatrixFormat::TensorDump) {
    FloatTensor t({static_cast<uint32_t>(rows), static_cast<uint32_t>(cols), 1, 1});
    for (size_t r = 0; r < rows; ++r) {
      for (size_t c = 0; c < cols; ++c) t(r, c) = descriptors.row(r)[c];
    }
    write_tensor_dump(path, t);
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  char buf[32];
  for (size_t r = 0; r < rows; ++r) {
    const auto row = descriptors.row(r);
    for (size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[c]));
      if (c) out << ',';
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "failed writing " + path.string());
}

}  // namespace evpr
