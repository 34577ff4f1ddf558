#include "evpr/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "evpr/parallel.hpp"

namespace evpr {
namespace {

Error with_window_context(const Error& e, uint64_t window) {
  return Error(e.code(), "window " + std::to_string(window) + ": " + e.what(), window);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json policy_json(const WindowingPolicy& policy) {
  if (const auto* t = std::get_if<FixedTime>(&policy)) {
    return {{"mode", "fixed_time"}, {"length_us", t->length_us}, {"stride_us", t->stride_us}};
  }
  const auto& c = std::get<FixedCount>(policy);
  return {{"mode", "fixed_count"}, {"events", c.events}, {"stride", c.stride}};
}

bool is_zero(const GlobalDescriptor& d) {
  for (double v : d.values) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

ProviderSet ProviderSet::from_config(const PipelineConfig& config) {
  ProviderSet set;
  set.global = make_global_embedder(config.global_provider);
  set.keypoints = make_keypoint_detector(config.keypoint_provider);
  if (config.depth_provider) set.depth = make_depth_estimator(*config.depth_provider);
  return set;
}

Digest256 provider_fingerprint(const GlobalEmbedder& provider) { return sha256(provider.fingerprint()); }

Digest256 config_fingerprint(const PipelineConfig& config, const ProviderSet& providers) {
  std::ostringstream s;
  s.precision(17);
  s << "gamma=" << config.gamma << ";taus=";
  for (double t : config.mcts_taus_us) s << t << ",";
  s << ";tencode_eps=" << config.tencode.epsilon_us << ";tencode_bg=" << config.tencode.background[0] << ","
    << config.tencode.background[1] << "," << config.tencode.background[2];
  s << ";global=" << providers.global->fingerprint();
  s << ";keypoint=" << providers.keypoints->fingerprint();
  s << ";depth=" << (providers.depth ? providers.depth->fingerprint() : std::string("none"));
  return sha256(s.str());
}

FrameFeatures extract_reference_frame(const EventWindow& window, SensorGeometry geometry, uint64_t frame_id,
                                      const PipelineConfig& config, const ProviderSet& providers) {
  FrameFeatures f;
  const PolarityHistogram hist = build_histogram(window, geometry);
  const GlobalFeatureMap map = embed_global(*providers.global, frame_id, hist.to_float());
  f.descriptor = gem_pool(map, config.gamma);
  if (!is_zero(f.descriptor)) f.descriptor = l2_normalize(f.descriptor);

  const MctsTensor mcts = build_mcts(window, geometry, config.mcts_taus_us);
  f.keypoints = detect_keypoints(*providers.keypoints, frame_id, mcts);

  if (providers.depth) {
    const TencodeImage tencode = build_tencode(window, geometry, config.tencode);
    f.depth = resize_depth(estimate_depth(*providers.depth, frame_id, tencode));
  }
  return f;
}

BuildSummary build_database(const EventStream& stream, const PipelineConfig& config,
                            const std::filesystem::path& out_dir) {
  config.validate();
  const ProviderSet providers = ProviderSet::from_config(config);
  const auto windows = window_stream(stream, config.window);

  std::vector<size_t> selected;
  for (size_t i = 0; i < windows.size(); i += config.db_stride) selected.push_back(i);

  std::vector<FrameFeatures> frames(selected.size());
  parallel_for(selected.size(), config.threads, [&](size_t f) {
    const EventWindow& w = windows[selected[f]];
    try {
      frames[f] = extract_reference_frame(w, stream.geometry, w.index, config, providers);
    } catch (const Error& e) {
      throw with_window_context(e, w.index);
    }
  });

  std::vector<FrameOrigin> origins;
  for (size_t i : selected) origins.push_back({windows[i].index, windows[i].t_min});
  BuildSummary summary = write_reference_database(frames, origins, stream.geometry, config, providers, out_dir);
  summary.windows = windows.size();
  return summary;
}

BuildSummary write_reference_database(const std::vector<FrameFeatures>& frames, const std::vector<FrameOrigin>& origins,
                                      SensorGeometry geometry, const PipelineConfig& config,
                                      const ProviderSet& providers, const std::filesystem::path& out_dir) {
  if (origins.size() != frames.size()) throw Error(ErrorCode::InvalidArgument, "one origin per frame is required");
  BuildSummary summary;
  summary.windows = frames.size();
  summary.frames = frames.size();

  const uint32_t dims = frames.empty() ? 0 : static_cast<uint32_t>(frames.front().descriptor.values.size());
  DescriptorDatabase db;
  db.matrix = DescriptorMatrix(Side::Reference, dims);
  db.gamma = static_cast<float>(config.gamma);
  db.provider_fingerprint = provider_fingerprint(*providers.global);

  FeatureArchiveWriter keypoints, depth;
  nlohmann::json window_index = nlohmann::json::array(), window_t_min = nlohmann::json::array();
  for (size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    try {
      if (is_zero(frame.descriptor)) {
        ++summary.empty_frames;
        db.matrix.append_zero();
      } else {
        db.matrix.append(frame.descriptor);
      }
    } catch (const Error& e) {
      throw with_window_context(e, origins[f].window_index);
    }
    keypoints.add_keypoints(f, frame.keypoints);
    if (frame.depth) depth.add_depth(f, *frame.depth);
    window_index.push_back(origins[f].window_index);
    window_t_min.push_back(origins[f].window_t_min);
  }
  if (frames.empty()) summary.warnings.emplace_back("event stream is empty; database has 0 frames");
  if (summary.empty_frames > 0) {
    summary.warnings.emplace_back(std::to_string(summary.empty_frames) + " frame(s) had no events and are stored as zero descriptors");
  }

  const DatabaseLayout layout{out_dir};
  std::filesystem::create_directories(out_dir);
  write_database(db, layout.descriptors());
  keypoints.write(layout.keypoints());
  if (providers.depth) {
    depth.write(layout.depth());
  } else {
    std::filesystem::remove(layout.depth());
  }

  nlohmann::json manifest;
  manifest["format"] = "evpr-reference-database";
  manifest["version"] = 1;
  manifest["frame_count"] = frames.size();
  manifest["descriptor_dims"] = dims;
  manifest["config_fingerprint"] = to_hex(config_fingerprint(config, providers));
  manifest["global_provider_fingerprint"] = to_hex(db.provider_fingerprint);
  manifest["gamma"] = config.gamma;
  manifest["providers"] = {{"global", providers.global->fingerprint()},
                           {"keypoint", providers.keypoints->fingerprint()},
                           {"depth", providers.depth ? nlohmann::json(providers.depth->fingerprint()) : nlohmann::json()}};
  manifest["geometry"] = {geometry.width, geometry.height};
  manifest["window"] = policy_json(config.window);
  manifest["db_stride"] = config.db_stride;
  manifest["has_depth"] = static_cast<bool>(providers.depth);
  manifest["window_index"] = std::move(window_index);
  manifest["window_t_min"] = std::move(window_t_min);
  manifest["created_utc"] = utc_now();
  io::write_text_file(layout.manifest(), manifest.dump(2) + "\n");
  return summary;
}

ReferenceDatabase ReferenceDatabase::open(const std::filesystem::path& dir, const PipelineConfig& config,
                                          const ProviderSet& providers) {
  const DatabaseLayout layout{dir};
  if (!std::filesystem::exists(layout.manifest())) {
    throw Error(ErrorCode::MissingArtifact, "no manifest.json in " + dir.string());
  }
  ReferenceDatabase db;
  {
    const auto bytes = io::read_file(layout.manifest());
    try {
      db.manifest_ = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ManifestMismatch, std::string("unreadable manifest: ") + e.what());
    }
  }
  const bool allow = config.allow_fingerprint_mismatch;
  const std::string expected = to_hex(config_fingerprint(config, providers));
  if (db.manifest_.value("config_fingerprint", std::string{}) != expected && !allow) {
    throw Error(ErrorCode::ManifestMismatch,
                "database was built with a different configuration (fingerprint " +
                    db.manifest_.value("config_fingerprint", std::string{"?"}) + ", query side " + expected + ")");
  }

  db.descriptors_ = load_database(layout.descriptors(), provider_fingerprint(*providers.global), allow);
  if (static_cast<double>(db.descriptors_.gamma) != static_cast<double>(static_cast<float>(config.gamma)) && !allow) {
    throw Error(ErrorCode::ManifestMismatch, "database gamma differs from the configured gamma");
  }
  const size_t frames = db.manifest_.value("frame_count", size_t{0});
  if (db.descriptors_.matrix.rows() != frames) {
    throw Error(ErrorCode::ManifestMismatch, "descriptor rows do not match the manifest frame count");
  }

  if (config.mode != RerankMode::GlobalOnly) {
    db.keypoints_ = std::make_shared<const FeatureArchive>(FeatureArchive::load(layout.keypoints()));
    if (db.keypoints_->count(ArchiveEntryKind::Keypoints) != frames) {
      throw Error(ErrorCode::ManifestMismatch, "keypoint archive does not match the manifest frame count");
    }
  }
  if (config.mode == RerankMode::KeypointPlusDepth) {
    if (!std::filesystem::exists(layout.depth())) {
      throw Error(ErrorCode::MissingArtifact, "database has no depth archive; rebuild with a depth provider");
    }
    db.depth_ = std::make_shared<const FeatureArchive>(FeatureArchive::load(layout.depth()));
    if (db.depth_->count(ArchiveEntryKind::Depth) != frames) {
      throw Error(ErrorCode::ManifestMismatch, "depth archive does not match the manifest frame count");
    }
  }
  return db;
}

KeypointSet ReferenceDatabase::keypoints(uint64_t ref_id) const {
  if (!keypoints_ || !keypoints_->contains(ref_id, ArchiveEntryKind::Keypoints)) {
    throw Error(ErrorCode::MissingKeypoints, "no keypoints for reference frame " + std::to_string(ref_id), ref_id);
  }
  return keypoints_->keypoints(ref_id);
}

DepthMap ReferenceDatabase::depth(uint64_t ref_id) const {
  if (!depth_ || !depth_->contains(ref_id, ArchiveEntryKind::Depth)) {
    throw Error(ErrorCode::MissingDepth, "no depth map for reference frame " + std::to_string(ref_id), ref_id);
  }
  return depth_->depth(ref_id);
}

QueryEngine::QueryEngine(PipelineConfig config, const std::filesystem::path& db_dir)
    : config_(std::move(config)), providers_(ProviderSet::from_config(config_)),
      db_(ReferenceDatabase::open(db_dir, config_, providers_)) {
  config_.validate();
}

QueryResult QueryEngine::run(const EventWindow& window, SensorGeometry geometry, uint64_t query_id,
                             unsigned rerank_threads, StageTimer* timer) const {
  StageTimer local;
  StageTimer& t = timer ? *timer : local;
  QueryResult result{query_id, window.t_min, config_.mode, {}};

  try {
    const auto hist = t.time(Stage::Representation, [&] { return build_histogram(window, geometry); });
    const auto descriptor = t.time(Stage::Embedding, [&] {
      const auto map = embed_global(*providers_.global, query_id, hist.to_float());
      auto d = gem_pool(map, config_.gamma);
      return is_zero(d) ? d : l2_normalize(d);
    });
    const Shortlist shortlist = t.time(Stage::Retrieval, [&] {
      if (db_.frame_count() == 0) return Shortlist{query_id, {}};
      if (descriptor.values.size() != db_.descriptors().cols()) {
        throw Error(ErrorCode::DimensionMismatch, "query descriptor has " + std::to_string(descriptor.values.size()) +
                                                      " dims, database has " + std::to_string(db_.descriptors().cols()));
      }
      std::vector<float> q(descriptor.values.begin(), descriptor.values.end());
      return top_k(similarity_column(db_.descriptors(), q), query_id, config_.k);
    });

    if (config_.mode == RerankMode::GlobalOnly) {
      result.ranking = passthrough(shortlist);
      return result;
    }

    const auto mcts = t.time(Stage::Representation, [&] { return build_mcts(window, geometry, config_.mcts_taus_us); });
    const auto query_kp = t.time(Stage::Embedding, [&] { return detect_keypoints(*providers_.keypoints, query_id, mcts); });
    KeypointRerankParams params;
    params.alpha = config_.alpha;
    params.nnr_ratio = config_.nnr_ratio;
    params.ransac.epsilon = config_.epsilon;
    params.ransac.iterations = config_.ransac_iterations;
    params.ransac.early_exit_ratio = config_.ransac_early_exit;
    params.ransac.seed = config_.seed;
    params.threads = rerank_threads;
    result.ranking = t.time(Stage::Rerank, [&] { return rerank_keypoints(shortlist, query_kp, db_, params); });

    if (config_.mode == RerankMode::KeypointPlusDepth) {
      const auto tencode = t.time(Stage::Representation, [&] { return build_tencode(window, geometry, config_.tencode); });
      const auto depth = t.time(Stage::Embedding, [&] { return estimate_depth(*providers_.depth, query_id, tencode); });
      result.ranking = t.time(Stage::Rerank, [&] {
        return rerank_depth(result.ranking, depth, db_, config_.k_depth, rerank_threads);
      });
    }
  } catch (const Error& e) {
    throw with_window_context(e, window.index);
  }
  return result;
}

std::vector<QueryResult> QueryEngine::run_all(const EventStream& stream, unsigned threads) const {
  const auto windows = window_stream(stream, config_.query_policy());
  std::vector<QueryResult> results(windows.size());
  parallel_for(windows.size(), threads,
               [&](size_t i) { results[i] = run(windows[i], stream.geometry, windows[i].index, 1); });
  return results;
}

DescriptorMatrix QueryEngine::query_descriptors(const EventStream& stream, unsigned threads) const {
  const auto windows = window_stream(stream, config_.query_policy());
  std::vector<GlobalDescriptor> descriptors(windows.size());
  parallel_for(windows.size(), threads, [&](size_t i) {
    const auto hist = build_histogram(windows[i], stream.geometry);
    descriptors[i] = gem_pool(embed_global(*providers_.global, windows[i].index, hist.to_float()), config_.gamma);
  });
  DescriptorMatrix out(Side::Query, db_.descriptors().cols());
  for (const auto& d : descriptors) out.append(d);
  return out;
}

nlohmann::json to_json(const QueryResult& result) {
  nlohmann::json j;
  j["query_id"] = result.query_id;
  j["window_t_min"] = result.window_t_min;
  j["candidates"] = nlohmann::json::array();
  const bool keypoint_stage = result.mode != RerankMode::GlobalOnly;
  for (size_t i = 0; i < result.ranking.candidates.size(); ++i) {
    const auto& c = result.ranking.candidates[i];
    nlohmann::json e;
    e["ref_id"] = c.ref_id;
    e["cosine"] = static_cast<double>(c.cosine);
    if (keypoint_stage) {
      e["s_prime"] = c.s_prime;
      e["inliers"] = c.inliers;
    }
    if (c.ssim) e["ssim"] = *c.ssim;
    e["rank"] = i + 1;
    j["candidates"].push_back(std::move(e));
  }
  return j;
}

void write_results(std::ostream& out, const std::vector<QueryResult>& results) {
  for (const auto& r : results) out << to_json(r).dump() << '\n';
}

void write_trace(std::ostream& out, const std::vector<QueryResult>& results) {
  for (const auto& r : results) {
    for (size_t i = 0; i < r.ranking.candidates.size(); ++i) {
      const auto& c = r.ranking.candidates[i];
      nlohmann::json e;
      e["query_id"] = r.query_id;
      e["ref_id"] = c.ref_id;
      e["cosine"] = static_cast<double>(c.cosine);
      e["inliers"] = c.inliers;
      e["s_prime"] = c.s_prime;
      e["ssim"] = c.ssim ? nlohmann::json(*c.ssim) : nlohmann::json();
      e["final_rank"] = i + 1;
      out << e.dump() << '\n';
    }
  }
}

std::vector<QueryRanking> read_rankings(std::istream& in) {
  std::vector<QueryRanking> rankings;
  std::string line;
  uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      QueryRanking r;
      r.query_id = j.at("query_id").get<uint64_t>();
      std::vector<std::pair<uint64_t, uint64_t>> by_rank;
      for (const auto& c : j.at("candidates")) by_rank.emplace_back(c.at("rank").get<uint64_t>(), c.at("ref_id").get<uint64_t>());
      std::stable_sort(by_rank.begin(), by_rank.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      for (const auto& [rank, id] : by_rank) r.ref_ids.push_back(id);
      rankings.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedLine, std::string("bad results line: ") + e.what(), line_no);
    }
  }
  return rankings;
}

std::vector<QueryRanking> load_rankings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return read_rankings(in);
}

TimingReport bench_queries(const QueryEngine& engine, const EventStream& stream, unsigned rerank_threads) {
  class Pipeline final : public TimedPipeline {
   public:
    Pipeline(const QueryEngine& engine, const EventStream& stream, unsigned threads)
        : engine_(engine), stream_(stream), threads_(threads),
          windows_(window_stream(stream, engine.config().query_policy())) {}
    size_t query_count() const override { return windows_.size(); }
    void run_query(size_t i, StageTimer& timer) override {
      engine_.run(windows_[i], stream_.geometry, windows_[i].index, threads_, &timer);
    }

   private:
    const QueryEngine& engine_;
    const EventStream& stream_;
    unsigned threads_;
    std::vector<EventWindow> windows_;
  };
  Pipeline pipeline(engine, stream, rerank_threads);
  return measure_runtime(pipeline, engine.config().warmup);
}

}  // namespace evpr
