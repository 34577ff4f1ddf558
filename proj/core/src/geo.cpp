#include "evpr/geo.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace evpr {
namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kE2 = kF * (2.0 - kF);

std::array<double, 3> to_ecef(const GeodeticPoint& p) {
  const double lat = p.lat_deg * std::numbers::pi / 180.0;
  const double lon = p.lon_deg * std::numbers::pi / 180.0;
  const double s = std::sin(lat);
  const double n = kA / std::sqrt(1.0 - kE2 * s * s);
  return {(n + p.alt_m) * std::cos(lat) * std::cos(lon), (n + p.alt_m) * std::cos(lat) * std::sin(lon),
          (n * (1.0 - kE2) + p.alt_m) * s};
}

}  // namespace

Position to_local_enu(const GeodeticPoint& point, const GeodeticPoint& origin) {
  const auto p = to_ecef(point);
  const auto o = to_ecef(origin);
  const double dx = p[0] - o[0], dy = p[1] - o[1], dz = p[2] - o[2];
  const double lat = origin.lat_deg * std::numbers::pi / 180.0;
  const double lon = origin.lon_deg * std::numbers::pi / 180.0;
  const double east = -std::sin(lon) * dx + std::cos(lon) * dy;
  const double north = -std::sin(lat) * std::cos(lon) * dx - std::sin(lat) * std::sin(lon) * dy + std::cos(lat) * dz;
  return {east, north};
}

std::vector<Position> to_local_enu(const std::vector<GeodeticPoint>& track) {
  std::vector<Position> out;
  out.reserve(track.size());
  for (const auto& p : track) out.push_back(to_local_enu(p, track.front()));
  return out;
}

}  // namespace evpr
