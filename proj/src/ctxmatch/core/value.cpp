#include "ctxmatch/core/value.hpp"

#include <sstream>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch {

TypedValue::TypedValue(GeoPoint g) : v_(g) {
  if (!(g.lat >= -90.0 && g.lat <= 90.0) || !(g.lon >= -180.0 && g.lon <= 180.0)) {
    std::ostringstream os;
    os << "geo coordinate out of range: (" << g.lat << ", " << g.lon << ")";
    throw InvalidArgument(os.str());
  }
}

double TypedValue::as_number() const {
  if (kind() == Kind::Integer) return static_cast<double>(as_int());
  return as_decimal();
}

Json TypedValue::to_json() const {
  switch (kind()) {
    case Kind::Integer: return as_int();
    case Kind::Decimal: return as_decimal();
    case Kind::String: return as_string();
    case Kind::Boolean: return as_bool();
    case Kind::Geo: {
      Json j = Json::object();
      j["geo"] = Json::array({as_geo().lat, as_geo().lon});
      return j;
    }
  }
  return nullptr;
}

TypedValue TypedValue::from_json(const Json& j) {
  if (j.is_boolean()) return TypedValue(j.get<bool>());
  if (j.is_number_integer()) return TypedValue(j.get<std::int64_t>());
  if (j.is_number_float()) return TypedValue(j.get<double>());
  if (j.is_string()) return TypedValue(j.get<std::string>());
  if (j.is_object() && j.size() == 1 && j.contains("geo")) {
    const auto& g = j.at("geo");
    if (g.is_array() && g.size() == 2 && g[0].is_number() && g[1].is_number()) {
      return TypedValue(GeoPoint{g[0].get<double>(), g[1].get<double>()});
    }
  }
  throw InvalidArgument("not a typed value: " + j.dump());
}

std::string TypedValue::to_string() const {
  if (kind() == Kind::String) return as_string();
  return to_json().dump();
}

std::string_view kind_name(TypedValue::Kind k) {
  switch (k) {
    case TypedValue::Kind::Integer: return "integer";
    case TypedValue::Kind::Decimal: return "decimal";
    case TypedValue::Kind::String: return "string";
    case TypedValue::Kind::Boolean: return "boolean";
    case TypedValue::Kind::Geo: return "geo";
  }
  return "?";
}

bool comparable(const TypedValue& a, const TypedValue& b) {
  if (a.is_numeric() && b.is_numeric()) return true;
  return a.kind() == b.kind();
}

bool values_equal(const TypedValue& a, const TypedValue& b) {
  if (!comparable(a, b)) return false;
  if (a.kind() == TypedValue::Kind::Integer && b.kind() == TypedValue::Kind::Integer) {
    return a.as_int() == b.as_int();
  }
  if (a.is_numeric()) return a.as_number() == b.as_number();
  return a == b;
}

}  // namespace ctxmatch
