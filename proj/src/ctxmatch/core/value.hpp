#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "ctxmatch/core/json_types.hpp"

namespace ctxmatch {

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  bool operator==(const GeoPoint&) const = default;
};

/// Exactly one of integer, decimal, string, boolean or geo coordinate.
class TypedValue {
 public:
  enum class Kind { Integer, Decimal, String, Boolean, Geo };

  TypedValue() : v_(std::int64_t{0}) {}
  TypedValue(std::int64_t v) : v_(v) {}  // NOLINT(google-explicit-constructor)
  TypedValue(int v) : v_(std::int64_t{v}) {}  // NOLINT
  TypedValue(double v) : v_(v) {}  // NOLINT
  TypedValue(std::string v) : v_(std::move(v)) {}  // NOLINT
  TypedValue(const char* v) : v_(std::string(v)) {}  // NOLINT
  TypedValue(bool v) : v_(v) {}  // NOLINT
  /// Throws InvalidArgument when the coordinate is out of range.
  TypedValue(GeoPoint g);  // NOLINT

  Kind kind() const { return static_cast<Kind>(v_.index()); }
  bool is_numeric() const { return kind() == Kind::Integer || kind() == Kind::Decimal; }
  bool is_string() const { return kind() == Kind::String; }

  std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
  double as_decimal() const { return std::get<double>(v_); }
  /// Integer or decimal widened to double.
  double as_number() const;
  const std::string& as_string() const { return std::get<std::string>(v_); }
  bool as_bool() const { return std::get<bool>(v_); }
  const GeoPoint& as_geo() const { return std::get<GeoPoint>(v_); }

  /// Natural JSON form: numbers, strings, booleans, and {"geo":[lat,lon]}.
  Json to_json() const;
  /// Inverse of to_json. Integral JSON numbers become Integer, others Decimal.
  static TypedValue from_json(const Json& j);

  std::string to_string() const;

  /// Typed equality: kinds must match exactly.
  bool operator==(const TypedValue&) const = default;

 private:
  std::variant<std::int64_t, double, std::string, bool, GeoPoint> v_;
};

std::string_view kind_name(TypedValue::Kind k);

/// Whether two values can be compared with eq/ne (numeric with numeric, otherwise same kind).
bool comparable(const TypedValue& a, const TypedValue& b);

/// Value equality across integer/decimal; false if not comparable.
bool values_equal(const TypedValue& a, const TypedValue& b);

}  // namespace ctxmatch
