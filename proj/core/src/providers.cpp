#include "evpr/providers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace evpr {
namespace {

template <class Fn>
auto call_provider(const Provider& provider, Fn&& fn) {
  try {
    if (provider.concurrent()) return fn();
    std::lock_guard lock(provider.call_mutex());
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderFailure, std::string("provider failed: ") + e.what());
  }
}

void require_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::ProviderFailure, std::string(what) + " contains NaN or Inf");
  }
}

std::shared_ptr<const FeatureArchive> open_archive(const ProviderSpec& spec) {
  return std::make_shared<const FeatureArchive>(FeatureArchive::load(spec.target));
}

SubprocessProvider make_runner(const ProviderSpec& spec) {
  const auto timeout = std::chrono::milliseconds(static_cast<int64_t>(spec.number("timeout_s", 10.0) * 1000.0));
  return SubprocessProvider(spec.target, timeout, spec.text("model", spec.target));
}

[[noreturn]] void wrong_role(const ProviderSpec& spec, const char* role) {
  throw Error(ErrorCode::ConfigError, "provider '" + spec.to_string() + "' cannot serve as " + role);
}

}  // namespace

// ProviderSpec ----------------------------------------------------------------

ProviderSpec ProviderSpec::parse(std::string_view text) {
  ProviderSpec spec;
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  const std::string_view tail = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (head == "builtin-grid") {
    spec.kind = ProviderKind::BuiltinGrid;
  } else if (head == "builtin-corner") {
    spec.kind = ProviderKind::BuiltinCorner;
  } else if (head == "builtin-density-depth") {
    spec.kind = ProviderKind::BuiltinDensityDepth;
  } else if (head == "archive") {
    spec.kind = ProviderKind::Archive;
  } else if (head == "subprocess") {
    spec.kind = ProviderKind::Subprocess;
  } else {
    throw Error(ErrorCode::ConfigError, "unknown provider kind '" + std::string(head) + "'");
  }
  const bool needs_target = spec.kind == ProviderKind::Archive || spec.kind == ProviderKind::Subprocess;
  if (needs_target && tail.empty()) {
    throw Error(ErrorCode::ConfigError, "provider '" + std::string(head) + "' needs a target after ':'");
  }
  if (!needs_target && !tail.empty()) {
    throw Error(ErrorCode::ConfigError, "provider '" + std::string(head) + "' takes no target");
  }
  spec.target = std::string(tail);
  return spec;
}

std::string ProviderSpec::to_string() const {
  switch (kind) {
    case ProviderKind::BuiltinGrid: return "builtin-grid";
    case ProviderKind::BuiltinCorner: return "builtin-corner";
    case ProviderKind::BuiltinDensityDepth: return "builtin-density-depth";
    case ProviderKind::Archive: return "archive:" + target;
    case ProviderKind::Subprocess: return "subprocess:" + target;
  }
  return {};
}

double ProviderSpec::number(const std::string& name, double fallback) const {
  const auto it = parameters.find(name);
  if (it == parameters.end()) return fallback;
  try {
    size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "provider parameter '" + name + "' is not a number");
  }
}

std::string ProviderSpec::text(const std::string& name, const std::string& fallback) const {
  const auto it = parameters.find(name);
  return it == parameters.end() ? fallback : it->second;
}

// Checked calls ---------------------------------------------------------------

GlobalFeatureMap embed_global(const GlobalEmbedder& provider, uint64_t frame_id, const FloatTensor& histogram) {
  auto map = call_provider(provider, [&] { return provider.embed(frame_id, histogram); });
  if (map.height() == 0 || map.width() == 0 || map.channels() == 0 || map.data.dim(3) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "global feature map must be H x W x C with non-zero extents", frame_id);
  }
  require_finite(map.data.values(), "global feature map");
  return map;
}

KeypointSet detect_keypoints(const KeypointDetector& provider, uint64_t frame_id, const MctsTensor& mcts) {
  auto kps = call_provider(provider, [&] { return provider.detect(frame_id, mcts); });
  kps.check();
  require_finite(kps.descriptors, "keypoint descriptors");
  const float h = static_cast<float>(mcts.values.dim(0)), w = static_cast<float>(mcts.values.dim(1));
  for (const Keypoint& p : kps.points) {
    if (!(p.u >= 0.0f && p.u < w && p.v >= 0.0f && p.v < h)) {
      throw Error(ErrorCode::ShapeMismatch, "keypoint outside the frame", frame_id);
    }
  }
  return kps;
}

DepthMap estimate_depth(const DepthEstimator& provider, uint64_t frame_id, const TencodeImage& tencode) {
  auto depth = call_provider(provider, [&] { return provider.estimate(frame_id, tencode); });
  if (depth.height() == 0 || depth.width() == 0 || depth.data.dim(2) != 1 || depth.data.dim(3) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "depth map must be H x W", frame_id);
  }
  for (float v : depth.data.values()) {
    if (!std::isfinite(v) || v < 0.0f) throw Error(ErrorCode::ProviderFailure, "depth must be finite and >= 0", frame_id);
  }
  return depth;
}

// Factories -------------------------------------------------------------------

std::unique_ptr<GlobalEmbedder> make_global_embedder(const ProviderSpec& spec) {
  switch (spec.kind) {
    case ProviderKind::BuiltinGrid:
      return std::make_unique<GridEmbedder>(static_cast<uint32_t>(spec.number("grid", 14)),
                                            static_cast<uint32_t>(spec.number("sub", 2)));
    case ProviderKind::Archive:
      return std::make_unique<ArchiveGlobalEmbedder>(open_archive(spec), spec.text("model", "archive"));
    case ProviderKind::Subprocess:
      return std::make_unique<SubprocessGlobalEmbedder>(make_runner(spec));
    default:
      wrong_role(spec, "global embedder");
  }
}

std::unique_ptr<KeypointDetector> make_keypoint_detector(const ProviderSpec& spec) {
  switch (spec.kind) {
    case ProviderKind::BuiltinCorner: {
      CornerParams p;
      p.nms_radius = static_cast<int>(spec.number("nms_radius", p.nms_radius));
      p.max_keypoints = static_cast<uint32_t>(spec.number("max_keypoints", p.max_keypoints));
      p.harris_k = spec.number("harris_k", p.harris_k);
      p.relative_threshold = spec.number("relative_threshold", p.relative_threshold);
      p.smoothing_sigma = spec.number("smoothing_sigma", p.smoothing_sigma);
      p.patch_step = static_cast<int>(spec.number("patch_step", p.patch_step));
      return std::make_unique<CornerDetector>(p);
    }
    case ProviderKind::Archive:
      return std::make_unique<ArchiveKeypointDetector>(open_archive(spec), spec.text("model", "archive"));
    case ProviderKind::Subprocess:
      return std::make_unique<SubprocessKeypointDetector>(make_runner(spec));
    default:
      wrong_role(spec, "keypoint detector");
  }
}

std::unique_ptr<DepthEstimator> make_depth_estimator(const ProviderSpec& spec) {
  switch (spec.kind) {
    case ProviderKind::BuiltinDensityDepth:
      return std::make_unique<DensityDepthEstimator>(static_cast<int>(spec.number("radius", 4)),
                                                     spec.number("gain", 10.0));
    case ProviderKind::Archive:
      return std::make_unique<ArchiveDepthEstimator>(open_archive(spec), spec.text("model", "archive"));
    case ProviderKind::Subprocess:
      return std::make_unique<SubprocessDepthEstimator>(make_runner(spec));
    default:
      wrong_role(spec, "depth estimator");
  }
}

// GridEmbedder ----------------------------------------------------------------

GridEmbedder::GridEmbedder(uint32_t grid, uint32_t sub) : grid_(grid), sub_(sub) {
  if (grid_ == 0 || sub_ == 0) throw Error(ErrorCode::ConfigError, "grid provider needs grid > 0 and sub > 0");
}

std::string GridEmbedder::fingerprint() const {
  return "builtin-grid(grid=" + std::to_string(grid_) + ",sub=" + std::to_string(sub_) + ")";
}

GlobalFeatureMap GridEmbedder::embed(uint64_t, const FloatTensor& input) const {
  const uint32_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  if (h == 0 || w == 0 || cin == 0 || input.dim(3) != 1) {
    throw Error(ErrorCode::ShapeMismatch, "grid provider expects an H x W x C tensor");
  }
  const uint32_t blocks = grid_ * sub_;
  const uint32_t channels = grid_ * grid_ * cin * 3;
  GlobalFeatureMap out{FloatTensor({sub_, sub_, channels, 1})};
  std::vector<double> sum(cin), peak(cin);
  std::vector<uint32_t> nonzero(cin);

  for (uint32_t br = 0; br < blocks; ++br) {
    const size_t r0 = static_cast<size_t>(br) * h / blocks, r1 = static_cast<size_t>(br + 1) * h / blocks;
    for (uint32_t bc = 0; bc < blocks; ++bc) {
      const size_t c0 = static_cast<size_t>(bc) * w / blocks, c1 = static_cast<size_t>(bc + 1) * w / blocks;
      const size_t area = (r1 - r0) * (c1 - c0);
      if (area == 0) continue;
      std::fill(sum.begin(), sum.end(), 0.0);
      std::fill(peak.begin(), peak.end(), 0.0);
      std::fill(nonzero.begin(), nonzero.end(), 0u);
      for (size_t r = r0; r < r1; ++r) {
        for (size_t c = c0; c < c1; ++c) {
          for (uint32_t ch = 0; ch < cin; ++ch) {
            const double v = input(r, c, ch);
            sum[ch] += v;
            peak[ch] = std::max(peak[ch], v);
            nonzero[ch] += v != 0.0;
          }
        }
      }
      const uint32_t cell = (br / sub_) * grid_ + bc / sub_;
      for (uint32_t ch = 0; ch < cin; ++ch) {
        const size_t base = (static_cast<size_t>(cell) * cin + ch) * 3;
        out.data(br % sub_, bc % sub_, base + 0) = static_cast<float>(sum[ch] / static_cast<double>(area));
        out.data(br % sub_, bc % sub_, base + 1) = static_cast<float>(peak[ch]);
        out.data(br % sub_, bc % sub_, base + 2) = static_cast<float>(nonzero[ch] / static_cast<double>(area));
      }
    }
  }
  return out;
}

// CornerDetector --------------------------------------------------------------

namespace {

// Separable Gaussian with clamped borders.
std::vector<double> gaussian_smooth(const FloatTensor& plane, double sigma) {
  const int h = static_cast<int>(plane.dim(0)), w = static_cast<int>(plane.dim(1));
  std::vector<double> out(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out[static_cast<size_t>(r) * w + c] = plane(static_cast<size_t>(r), static_cast<size_t>(c));
  }
  if (sigma <= 0.0 || out.empty()) return out;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= sum;
  std::vector<double> tmp(out.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double v = 0.0;
      for (int i = -radius; i <= radius; ++i) v += kernel[i + radius] * out[static_cast<size_t>(r) * w + std::clamp(c + i, 0, w - 1)];
      tmp[static_cast<size_t>(r) * w + c] = v;
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double v = 0.0;
      for (int i = -radius; i <= radius; ++i) v += kernel[i + radius] * tmp[static_cast<size_t>(std::clamp(r + i, 0, h - 1)) * w + c];
      out[static_cast<size_t>(r) * w + c] = v;
    }
  }
  return out;
}

}  // namespace

CornerDetector::CornerDetector(CornerParams params) : params_(params) {
  if (params_.nms_radius < 0 || params_.window_radius < 0) {
    throw Error(ErrorCode::ConfigError, "corner detector radii must be non-negative");
  }
  if (params_.patch_step < 1 || !(params_.smoothing_sigma >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "corner detector needs patch_step >= 1 and smoothing_sigma >= 0");
  }
}

std::string CornerDetector::fingerprint() const {
  std::ostringstream s;
  s << "builtin-corner(nms=" << params_.nms_radius << ",max=" << params_.max_keypoints << ",k=" << params_.harris_k
    << ",rel=" << params_.relative_threshold << ",abs=" << params_.absolute_threshold
    << ",win=" << params_.window_radius << ",sigma=" << params_.smoothing_sigma << ",step=" << params_.patch_step
    << ",patch=" << kPatch << ")";
  return s.str();
}

KeypointSet CornerDetector::detect(uint64_t, const MctsTensor& mcts) const { return detect_plane(mcts.max_plane()); }

KeypointSet CornerDetector::detect_plane(const FloatTensor& plane) const {
  const int h = static_cast<int>(plane.dim(0));
  const int w = static_cast<int>(plane.dim(1));
  KeypointSet out;
  out.descriptor_dim = kPatch * kPatch;
  if (h < kPatch * params_.patch_step + 2 || w < kPatch * params_.patch_step + 2) return out;

  const std::vector<double> img = gaussian_smooth(plane, params_.smoothing_sigma);
  auto at = [&](int r, int c) { return img[static_cast<size_t>(r) * w + c]; };

  // Sobel gradients; border pixels keep zero gradient.
  const size_t n = static_cast<size_t>(h) * w;
  std::vector<double> ixx(n, 0.0), iyy(n, 0.0), ixy(n, 0.0);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      const size_t i = static_cast<size_t>(r) * w + c;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  }

  // Integral images for the box-windowed structure tensor.
  const size_t iw = static_cast<size_t>(w) + 1;
  auto integrate = [&](const std::vector<double>& src) {
    std::vector<double> s((static_cast<size_t>(h) + 1) * iw, 0.0);
    for (int r = 0; r < h; ++r) {
      double row = 0.0;
      for (int c = 0; c < w; ++c) {
        row += src[static_cast<size_t>(r) * w + c];
        s[(r + 1) * iw + c + 1] = s[r * iw + c + 1] + row;
      }
    }
    return s;
  };
  const auto sxx = integrate(ixx), syy = integrate(iyy), sxy = integrate(ixy);
  const int wr = params_.window_radius;
  auto box = [&](const std::vector<double>& s, int r, int c) {
    const int r0 = std::max(0, r - wr), r1 = std::min(h, r + wr + 1);
    const int c0 = std::max(0, c - wr), c1 = std::min(w, c + wr + 1);
    return s[r1 * iw + c1] - s[r0 * iw + c1] - s[r1 * iw + c0] + s[r0 * iw + c0];
  };

  std::vector<double> response(n, 0.0);
  double max_response = 0.0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double a = box(sxx, r, c), b = box(syy, r, c), x = box(sxy, r, c);
      const double trace = a + b;
      const double resp = a * b - x * x - params_.harris_k * trace * trace;
      response[static_cast<size_t>(r) * w + c] = resp;
      max_response = std::max(max_response, resp);
    }
  }
  const double threshold = std::max(params_.absolute_threshold, params_.relative_threshold * max_response);

  // Keypoints must leave room for the descriptor patch.
  const int half = kPatch / 2;
  const int step = params_.patch_step;
  const int lo = half * step, hi_r = h - 1 - (half - 1) * step, hi_c = w - 1 - (half - 1) * step;
  const int nr = params_.nms_radius;
  struct Candidate {
    double response;
    int r, c;
  };
  std::vector<Candidate> candidates;
  for (int r = lo; r <= hi_r; ++r) {
    for (int c = lo; c <= hi_c; ++c) {
      const size_t i = static_cast<size_t>(r) * w + c;
      const double v = response[i];
      if (v <= threshold) continue;
      bool is_max = true;
      for (int dr = -nr; dr <= nr && is_max; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= h) continue;
        for (int dc = -nr; dc <= nr; ++dc) {
          const int cc = c + dc;
          if (cc < 0 || cc >= w || (dr == 0 && dc == 0)) continue;
          const double u = response[static_cast<size_t>(rr) * w + cc];
          // Ties go to the earlier pixel in raster order.
          const bool earlier = dr < 0 || (dr == 0 && dc < 0);
          if (u > v || (earlier && u == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) candidates.push_back({v, r, c});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.response > b.response; });
  if (candidates.size() > params_.max_keypoints) candidates.resize(params_.max_keypoints);

  out.points.reserve(candidates.size());
  out.descriptors.reserve(candidates.size() * kPatch * kPatch);
  std::array<double, kPatch * kPatch> patch{};
  for (const Candidate& cand : candidates) {
    double mean = 0.0;
    size_t j = 0;
    for (int dr = -half; dr < half; ++dr) {
      for (int dc = -half; dc < half; ++dc) {
        patch[j] = at(cand.r + dr * step, cand.c + dc * step);
        mean += patch[j++];
      }
    }
    mean /= static_cast<double>(patch.size());
    double norm = 0.0;
    for (double& v : patch) {
      v -= mean;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double v : patch) out.descriptors.push_back(norm > 1e-12 ? static_cast<float>(v / norm) : 0.0f);
    out.points.push_back(Keypoint{static_cast<float>(cand.c), static_cast<float>(cand.r), static_cast<float>(cand.response)});
  }
  return out;
}

// DensityDepthEstimator -------------------------------------------------------

DensityDepthEstimator::DensityDepthEstimator(int radius, double gain, std::array<float, 3> background)
    : radius_(radius), gain_(gain), background_(background) {
  if (radius_ < 0 || !(gain_ >= 0.0)) throw Error(ErrorCode::ConfigError, "density depth needs radius >= 0 and gain >= 0");
}

std::string DensityDepthEstimator::fingerprint() const {
  std::ostringstream s;
  s << "builtin-density-depth(radius=" << radius_ << ",gain=" << gain_ << ",bg=" << background_[0] << "/"
    << background_[1] << "/" << background_[2] << ")";
  return s.str();
}

DepthMap DensityDepthEstimator::estimate(uint64_t, const TencodeImage& tencode) const {
  const auto& px = tencode.pixels;
  if (px.dim(2) != 3 || px.dim(3) != 1) throw Error(ErrorCode::ShapeMismatch, "density depth expects H x W x 3 Tencode");
  const size_t h = px.dim(0), w = px.dim(1);
  const size_t iw = w + 1;
  std::vector<double> integral((h + 1) * iw, 0.0);
  for (size_t r = 0; r < h; ++r) {
    double row = 0.0;
    for (size_t c = 0; c < w; ++c) {
      const bool active = std::abs(px(r, c, 0) - background_[0]) >= 0.5f || std::abs(px(r, c, 2) - background_[2]) >= 0.5f;
      row += active ? 1.0 : 0.0;
      integral[(r + 1) * iw + c + 1] = integral[r * iw + c + 1] + row;
    }
  }
  DepthMap depth{FloatTensor({static_cast<uint32_t>(h), static_cast<uint32_t>(w), 1, 1})};
  const auto rad = static_cast<size_t>(radius_);
  for (size_t r = 0; r < h; ++r) {
    const size_t r0 = r >= rad ? r - rad : 0, r1 = std::min(h, r + rad + 1);
    for (size_t c = 0; c < w; ++c) {
      const size_t c0 = c >= rad ? c - rad : 0, c1 = std::min(w, c + rad + 1);
      const double active = integral[r1 * iw + c1] - integral[r0 * iw + c1] - integral[r1 * iw + c0] + integral[r0 * iw + c0];
      const double density = active / static_cast<double>((r1 - r0) * (c1 - c0));
      depth.data(r, c) = static_cast<float>(1.0 / (1.0 + gain_ * density));
    }
  }
  return depth;
}

// Archive-backed --------------------------------------------------------------

ArchiveGlobalEmbedder::ArchiveGlobalEmbedder(std::shared_ptr<const FeatureArchive> archive, std::string model)
    : archive_(std::move(archive)), model_(std::move(model)) {}
GlobalFeatureMap ArchiveGlobalEmbedder::embed(uint64_t frame_id, const FloatTensor&) const {
  return archive_->global_map(frame_id);
}

ArchiveKeypointDetector::ArchiveKeypointDetector(std::shared_ptr<const FeatureArchive> archive, std::string model)
    : archive_(std::move(archive)), model_(std::move(model)) {}
KeypointSet ArchiveKeypointDetector::detect(uint64_t frame_id, const MctsTensor&) const {
  return archive_->keypoints(frame_id);
}

ArchiveDepthEstimator::ArchiveDepthEstimator(std::shared_ptr<const FeatureArchive> archive, std::string model)
    : archive_(std::move(archive)), model_(std::move(model)) {}
DepthMap ArchiveDepthEstimator::estimate(uint64_t frame_id, const TencodeImage&) const {
  return archive_->depth(frame_id);
}

}  // namespace evpr
