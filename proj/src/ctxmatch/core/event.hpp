#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/core/sim_time.hpp"
#include "ctxmatch/core/value.hpp"

namespace ctxmatch {

struct Attribute {
  std::string name;
  TypedValue value;

  bool operator==(const Attribute&) const = default;
};

/// Ordered attribute list with unique names.
class AttributeList {
 public:
  AttributeList() = default;
  AttributeList(std::initializer_list<Attribute> attrs);

  const TypedValue* find(std::string_view name) const;
  /// Inserts or replaces.
  void set(std::string name, TypedValue value);
  /// Throws InvalidArgument on a duplicate name.
  void add(std::string name, TypedValue value);

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }

  Json to_json() const;
  static AttributeList from_json(const Json& j);

  bool operator==(const AttributeList&) const = default;

 private:
  std::vector<Attribute> items_;
};

/// A typed, timestamped attribute set.
struct Event {
  std::string type_name;
  AttributeList attributes;
  SimTime timestamp;
  NodeId source;
  std::uint64_t event_id = 0;

  const TypedValue* find(std::string_view name) const { return attributes.find(name); }

  Json to_json() const;
  static Event from_json(const Json& j);
};

using EventPtr = std::shared_ptr<const Event>;

}  // namespace ctxmatch
