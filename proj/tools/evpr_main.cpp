// evpr: build, query, evaluate and benchmark an event-camera place recognition database.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "evpr/config.hpp"
#include "evpr/error.hpp"
#include "evpr/evaluation.hpp"
#include "evpr/geo.hpp"
#include "evpr/pipeline.hpp"

namespace {

using evpr::Error;
using evpr::ErrorCode;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> mode;
};

evpr::PipelineConfig resolve_config(const GlobalOptions& g) {
  evpr::PipelineConfig c;
  if (!g.config_path.empty()) c = evpr::load_config(g.config_path);
  for (const auto& o : g.overrides) c = evpr::parse_config(o, std::move(c));
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (g.mode) c.mode = evpr::parse_mode(*g.mode);
  c.validate();
  return c;
}

evpr::EventStream read_events(const std::string& path, const evpr::PipelineConfig& c) {
  return evpr::load_events(path, c.geometry, evpr::TextParseOptions{c.strict_events, c.text_header});
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    evpr::io::write_text_file(path, j.dump(2) + "\n");
  }
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  return out;
}

int exit_code(evpr::ErrorCategory category) {
  switch (category) {
    case evpr::ErrorCategory::Config: return 2;
    case evpr::ErrorCategory::Data: return 3;
    case evpr::ErrorCategory::Provider: return 4;
  }
  return 3;
}

int report_error(std::string_view code, std::string_view category, const std::string& message,
                 std::optional<uint64_t> context, int status) {
  nlohmann::json j{{"error", code}, {"category", category}, {"message", message}};
  if (context) j["context"] = *context;
  std::cerr << j.dump() << '\n';
  return status;
}

std::vector<evpr::GeodeticPoint> parse_geodetic_csv(const std::string& path, std::vector<uint64_t>& ids) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<evpr::GeodeticPoint> points;
  std::string line;
  uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    uint64_t id;
    evpr::GeodeticPoint p;
    if (!(s >> id >> p.lat_deg >> p.lon_deg)) {
      if (line_no == 1) continue;  // header
      throw Error(ErrorCode::MalformedLine, "expected id,lat,lon[,alt]", line_no);
    }
    s >> p.alt_m;
    ids.push_back(id);
    points.push_back(p);
  }
  return points;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-camera visual place recognition engine"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Key-value configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a configuration key (key=value), repeatable");
  app.add_option("--seed", g.seed, "RANSAC seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_option("--mode", g.mode, "global | keypoint | keypoint+depth");

  std::string events, db_dir, out, trace, gt_ref, gt_query, query_events;
  bool online = false, index_gt = false, print_config = false;
  std::vector<size_t> ks{1, 5, 10};
  std::optional<double> tolerance;
  std::string format = "csv";
  unsigned rerank_threads = 1;

  auto* build = app.add_subcommand("build", "Build a reference database from an event file");
  build->add_option("events", events, "Reference event file")->required()->check(CLI::ExistingFile);
  build->add_option("-o,--out", db_dir, "Database directory")->required();
  build->add_flag("--print-config", print_config, "Print the resolved configuration");

  auto* query = app.add_subcommand("query", "Query a database with an event file");
  query->add_option("events", events, "Query event file")->required()->check(CLI::ExistingFile);
  query->add_option("--db", db_dir, "Database directory")->required();
  query->add_option("-o,--out", out, "Results file (JSON lines); stdout when omitted");
  query->add_option("--trace", trace, "Per-candidate trace file (JSON lines)");
  auto* online_flag = query->add_flag("--online", online, "One window at a time, results flushed per query");
  query->add_flag("--batch", "Parallel over query windows (default)")->excludes(online_flag);

  auto* eval = app.add_subcommand("eval", "Compute Recall@K for a results file");
  eval->add_option("results", out, "Results file from `query`")->required()->check(CLI::ExistingFile);
  auto* ref_opt = eval->add_option("--ref-positions", gt_ref, "Reference positions CSV (id,x,y)");
  auto* qry_opt = eval->add_option("--query-positions", gt_query, "Query positions CSV (id,x,y)");
  auto* idx_opt = eval->add_flag("--index-gt", index_gt, "Ground truth: query i matches reference i");
  idx_opt->excludes(ref_opt)->excludes(qry_opt);
  ref_opt->needs(qry_opt);
  qry_opt->needs(ref_opt);
  eval->add_option("--ks", ks, "Recall cut-offs")->delimiter(',');
  eval->add_option("--tolerance", tolerance, "Distance tolerance in metres (default from config)");
  std::string report_path;
  eval->add_option("-r,--report", report_path, "Report file; stdout when omitted");

  auto* bench = app.add_subcommand("bench", "Per-query latency over a query stream");
  bench->add_option("events", events, "Query event file")->required()->check(CLI::ExistingFile);
  bench->add_option("--db", db_dir, "Database directory")->required();
  bench->add_option("--rerank-threads", rerank_threads, "Threads across shortlist candidates");
  bench->add_option("-o,--out", out, "Report file; stdout when omitted");

  auto* exp = app.add_subcommand("export", "Export descriptors or a query distance matrix");
  exp->add_option("--db", db_dir, "Database directory")->required();
  exp->add_option("--query", query_events, "Query event file; exports the distance matrix when given")
      ->check(CLI::ExistingFile);
  exp->add_option("--format", format, "csv | tensor")->check(CLI::IsMember({"csv", "tensor"}));
  exp->add_option("-o,--out", out, "Output file")->required();

  auto* gps = app.add_subcommand("convert-gps", "Project id,lat,lon[,alt] CSV to local metres (id,x,y)");
  std::string gps_in;
  gps->add_option("input", gps_in, "Geodetic CSV")->required()->check(CLI::ExistingFile);
  gps->add_option("-o,--out", out, "Output CSV; stdout when omitted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", "config", e.what(), std::nullopt, 2);
  }

  try {
    if (*gps) {
      std::vector<uint64_t> ids;
      const auto points = parse_geodetic_csv(gps_in, ids);
      std::ostringstream s;
      s.precision(12);
      s << "id,x,y\n";
      const auto local = evpr::to_local_enu(points);
      for (size_t i = 0; i < local.size(); ++i) s << ids[i] << ',' << local[i].x + 0.0 << ',' << local[i].y + 0.0 << '\n';  // no "-0"
      if (out.empty()) {
        std::cout << s.str();
      } else {
        evpr::io::write_text_file(out, s.str());
      }
      return 0;
    }

    const evpr::PipelineConfig config = resolve_config(g);

    if (*build) {
      if (print_config) std::cerr << evpr::render_config(config);
      const auto stream = read_events(events, config);
      const auto summary = evpr::build_database(stream, config, db_dir);
      for (const auto& w : summary.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << nlohmann::json{{"windows", summary.windows}, {"frames", summary.frames},
                                  {"empty_frames", summary.empty_frames}, {"database", db_dir}}
                       .dump()
                << '\n';
      return 0;
    }

    if (*query) {
      const evpr::QueryEngine engine(config, db_dir);
      const auto stream = read_events(events, config);
      std::ofstream file;
      if (!out.empty()) file = open_output(out);
      std::ostream& results = out.empty() ? std::cout : file;
      std::vector<evpr::QueryResult> all;
      if (online) {
        for (const auto& w : evpr::window_stream(stream, config.query_policy())) {
          all.push_back(engine.run(w, stream.geometry, w.index, config.threads));
          results << evpr::to_json(all.back()).dump() << '\n' << std::flush;
        }
      } else {
        all = engine.run_all(stream, config.threads);
        evpr::write_results(results, all);
      }
      if (!trace.empty()) {
        auto t = open_output(trace);
        evpr::write_trace(t, all);
      }
      return 0;
    }

    if (*eval) {
      const auto rankings = evpr::load_rankings(out);
      const double tol = tolerance.value_or(config.tolerance_m);
      evpr::GroundTruth gt;
      if (index_gt) {
        size_t n_ref = 0, n_query = 0;
        for (const auto& r : rankings) {
          n_query = std::max<size_t>(n_query, r.query_id + 1);
          for (auto id : r.ref_ids) n_ref = std::max<size_t>(n_ref, id + 1);
        }
        gt = evpr::GroundTruth::from_indices(std::max(n_ref, n_query), n_query, tol);
      } else if (!gt_ref.empty()) {
        gt.reference = evpr::load_positions_csv(gt_ref);
        gt.query = evpr::load_positions_csv(gt_query);
        gt.tolerance_m = tol;
      } else {
        throw Error(ErrorCode::ConfigError, "eval needs --index-gt or --ref-positions/--query-positions");
      }
      auto report = evpr::recall_at_k(rankings, gt, ks);
      for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
      write_json(evpr::to_json(report), report_path);
      return 0;
    }

    if (*bench) {
      const evpr::QueryEngine engine(config, db_dir);
      const auto stream = read_events(events, config);
      write_json(evpr::to_json(evpr::bench_queries(engine, stream, rerank_threads)), out);
      return 0;
    }

    if (*exp) {
      const evpr::QueryEngine engine(config, db_dir);
      const auto fmt = format == "csv" ? evpr::MatrixFormat::Csv : evpr::MatrixFormat::TensorDump;
      const auto& refs = engine.database().descriptors();
      if (!query_events.empty()) {
        const auto queries = engine.query_descriptors(read_events(query_events, config), config.threads);
        evpr::export_distance_matrix(evpr::build_similarity(refs, queries, {256, config.threads}), out, fmt);
      } else {
        evpr::export_descriptors(refs, out, fmt);
      }
      return 0;
    }
  } catch (const Error& e) {
    const auto cat = evpr::category_of(e.code());
    const char* names[] = {"config", "data", "provider"};
    return report_error(evpr::to_string(e.code()), names[static_cast<int>(cat)], e.what(), e.context(),
                        exit_code(cat));
  } catch (const std::exception& e) {
    return report_error("internal", "data", e.what(), std::nullopt, 3);
  }
  return 0;
}
