#include <algorithm>
#include <array>
#include <cmath>

#include "evpr/rerank.hpp"

namespace evpr {
namespace {

constexpr int kWindow = 7;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_taps() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Separable Gaussian filter over the valid region: output is (h-6) x (w-6).
std::vector<double> filter_valid(const std::vector<double>& src, size_t h, size_t w) {
  static const auto taps = gaussian_taps();
  const size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> horiz(h * ow);
  for (size_t r = 0; r < h; ++r) {
    for (size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * src[r * w + c + k];
      horiz[r * ow + c] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (size_t r = 0; r < oh; ++r) {
    for (size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += taps[k] * horiz[(r + k) * ow + c];
      out[r * ow + c] = s;
    }
  }
  return out;
}

}  // namespace

DepthMap resize_depth(const DepthMap& depth, uint32_t height, uint32_t width) {
  const uint32_t sh = depth.height(), sw = depth.width();
  if (sh == 0 || sw == 0 || height == 0 || width == 0) {
    throw Error(ErrorCode::ShapeMismatch, "resize needs non-empty source and target");
  }
  if (sh == height && sw == width) return depth;

  DepthMap out{FloatTensor({height, width, 1, 1})};
  const double sy = static_cast<double>(sh) / height, sx = static_cast<double>(sw) / width;
  for (uint32_t r = 0; r < height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
    const auto y0 = static_cast<uint32_t>(fy);
    const uint32_t y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (uint32_t c = 0; c < width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
      const auto x0 = static_cast<uint32_t>(fx);
      const uint32_t x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = (1.0 - wx) * depth.data(y0, x0) + wx * depth.data(y0, x1);
      const double bottom = (1.0 - wx) * depth.data(y1, x0) + wx * depth.data(y1, x1);
      out.data(r, c) = static_cast<float>((1.0 - wy) * top + wy * bottom);
    }
  }
  return out;
}

double ssim(const DepthMap& a, const DepthMap& b) {
  if (a.data.dims() != b.data.dims()) throw Error(ErrorCode::DimensionMismatch, "SSIM inputs differ in size");
  const size_t h = a.height(), w = a.width();
  if (h < kWindow || w < kWindow) throw Error(ErrorCode::DimensionMismatch, "SSIM inputs smaller than the 7x7 window");

  const size_t n = h * w;
  std::vector<double> x(n), y(n);
  double lo = a.data.values()[0], hi = lo;
  for (size_t i = 0; i < n; ++i) {
    x[i] = a.data.values()[i];
    y[i] = b.data.values()[i];
    lo = std::min({lo, x[i], y[i]});
    hi = std::max({hi, x[i], y[i]});
  }
  const double range = hi > lo ? hi - lo : 1.0;
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  // Second moments on values shifted by the joint minimum: variance and
  // covariance are shift-invariant and the shift limits cancellation.
  std::vector<double> xs(n), ys(n), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xs[i] = x[i] - lo;
    ys[i] = y[i] - lo;
    xx[i] = xs[i] * xs[i];
    yy[i] = ys[i] * ys[i];
    xy[i] = xs[i] * ys[i];
  }
  const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
  const auto mxs = filter_valid(xs, h, w), mys = filter_valid(ys, h, w);
  const auto exx = filter_valid(xx, h, w), eyy = filter_valid(yy, h, w), exy = filter_valid(xy, h, w);
  double total = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = exx[i] - mxs[i] * mxs[i];
    const double vy = eyy[i] - mys[i] * mys[i];
    const double cov = exy[i] - mxs[i] * mys[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace evpr
