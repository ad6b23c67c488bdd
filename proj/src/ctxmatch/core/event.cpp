#include "ctxmatch/core/event.hpp"

#include <algorithm>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch {

AttributeList::AttributeList(std::initializer_list<Attribute> attrs) {
  for (const auto& a : attrs) add(a.name, a.value);
}

const TypedValue* AttributeList::find(std::string_view name) const {
  auto it = std::find_if(items_.begin(), items_.end(), [&](const Attribute& a) { return a.name == name; });
  return it == items_.end() ? nullptr : &it->value;
}

void AttributeList::set(std::string name, TypedValue value) {
  auto it = std::find_if(items_.begin(), items_.end(), [&](const Attribute& a) { return a.name == name; });
  if (it != items_.end()) {
    it->value = std::move(value);
  } else {
    items_.push_back({std::move(name), std::move(value)});
  }
}

void AttributeList::add(std::string name, TypedValue value) {
  if (find(name)) throw InvalidArgument("duplicate attribute '" + name + "'");
  items_.push_back({std::move(name), std::move(value)});
}

Json AttributeList::to_json() const {
  Json j = Json::object();
  for (const auto& a : items_) j[a.name] = a.value.to_json();
  return j;
}

AttributeList AttributeList::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("attributes must be an object");
  AttributeList out;
  for (const auto& [k, v] : j.items()) out.add(k, TypedValue::from_json(v));
  return out;
}

Json Event::to_json() const {
  Json j = Json::object();
  j["id"] = event_id;
  j["type"] = type_name;
  j["ts"] = timestamp.millis;
  j["source"] = source.hex();
  j["attributes"] = attributes.to_json();
  return j;
}

Event Event::from_json(const Json& j) {
  Event e;
  e.event_id = j.at("id").get<std::uint64_t>();
  e.type_name = j.at("type").get<std::string>();
  e.timestamp = SimTime{j.at("ts").get<Millis>()};
  e.source = Guid::parse(j.at("source").get<std::string>());
  e.attributes = AttributeList::from_json(j.at("attributes"));
  return e;
}

}  // namespace ctxmatch
