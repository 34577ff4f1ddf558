#pragma once

#include <vector>

#include "evpr/evaluation.hpp"

namespace evpr {

struct GeodeticPoint {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt_m = 0.0;
};

/// WGS84 geodetic coordinates to a local east/north plane (metres) whose origin
/// is `origin`. Position::x is east, Position::y is north.
Position to_local_enu(const GeodeticPoint& point, const GeodeticPoint& origin);

/// Converts a whole track using its first point as the origin.
std::vector<Position> to_local_enu(const std::vector<GeodeticPoint>& track);

}  // namespace evpr
