#include "ctxmatch/pipeline/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctxmatch::pipeline {

double geo_distance(const GeoPoint& a, const GeoPoint& b) {
  const double rad = std::numbers::pi / 180.0;
  const double s_lat = std::sin((b.lat - a.lat) * rad / 2);
  const double s_lon = std::sin((b.lon - a.lon) * rad / 2);
  const double h = s_lat * s_lat + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s_lon * s_lon;
  return 2 * kEarthRadiusM * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
}

std::optional<FilterStep> distance_filter_step(const std::optional<GeoPoint>& state, const Event& e,
                                               const std::string& attribute, double threshold_m) {
  const TypedValue* v = e.find(attribute);
  if (v == nullptr || v->kind() != TypedValue::Kind::Geo) return std::nullopt;
  FilterStep step;
  if (!state) {
    step.emit = true;
  } else {
    step.moved_m = geo_distance(*state, v->as_geo());
    step.emit = *step.moved_m > threshold_m;
  }
  step.state = step.emit ? std::optional<GeoPoint>(v->as_geo()) : state;
  return step;
}

}  // namespace ctxmatch::pipeline
