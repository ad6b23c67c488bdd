#include "ctxmatch/knowledge/fact.hpp"

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::knowledge {

std::string Fact::canonical() const {
  nlohmann::json body_json = nlohmann::json::object();
  for (const auto& a : body) body_json[a.name] = nlohmann::json::parse(a.value.to_json().dump());
  nlohmann::json j = nlohmann::json::object();
  j["kind"] = kind;
  j["body"] = std::move(body_json);
  if (subject) j["subject"] = *subject;
  return j.dump();
}

Fact Fact::from_canonical(std::string_view bytes) {
  Json j;
  try {
    j = Json::parse(bytes);
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("fact bytes: ") + e.what());
  }
  return from_json(j);
}

Json Fact::to_json() const {
  Json j = Json::object();
  j["guid"] = guid().hex();
  j["kind"] = kind;
  if (subject) j["subject"] = *subject;
  j["body"] = body.to_json();
  return j;
}

Fact Fact::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("fact must be an object");
  if (!j.contains("kind") || !j["kind"].is_string() || j["kind"].get<std::string>().empty()) {
    throw InvalidArgument("kind: expected a non-empty string");
  }
  Fact f;
  f.kind = j["kind"].get<std::string>();
  if (j.contains("body")) {
    try {
      f.body = AttributeList::from_json(j["body"]);
    } catch (const Error& e) {
      throw InvalidArgument(std::string("body: ") + e.what());
    }
  }
  if (j.contains("subject") && !j["subject"].is_null()) {
    if (!j["subject"].is_string()) throw InvalidArgument("subject: expected a string");
    f.subject = j["subject"].get<std::string>();
  }
  return f;
}

}  // namespace ctxmatch::knowledge
