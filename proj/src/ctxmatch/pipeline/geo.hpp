#pragma once

#include <optional>
#include <string>

#include "ctxmatch/core/event.hpp"
#include "ctxmatch/core/value.hpp"

namespace ctxmatch::pipeline {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Great-circle (haversine) distance in meters.
double geo_distance(const GeoPoint& a, const GeoPoint& b);

struct FilterStep {
  std::optional<GeoPoint> state;
  bool emit = false;
  /// Distance from the previous state; absent on the first event.
  std::optional<double> moved_m;
};

/// One step of the movement-threshold rule: emit when there is no previous
/// position or the distance moved exceeds `threshold_m`; the state becomes
/// the new position only on emit. Returns nullopt when `e` lacks a geo
/// value under `attribute`.
std::optional<FilterStep> distance_filter_step(const std::optional<GeoPoint>& state, const Event& e,
                                               const std::string& attribute, double threshold_m);

}  // namespace ctxmatch::pipeline
