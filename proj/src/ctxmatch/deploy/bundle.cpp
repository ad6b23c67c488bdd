#include "ctxmatch/deploy/bundle.hpp"

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::deploy {

Bundle Bundle::make(std::string id, std::string type, const Json& payload, int compute, int storage) {
  Bundle b;
  b.bundle_id = std::move(id);
  b.component_type = std::move(type);
  b.payload = payload.dump();
  b.checksum = guid_of(b.payload);
  b.compute_slots = compute;
  b.storage_slots = storage;
  return b;
}

Json Bundle::to_json() const {
  Json j = Json::object();
  j["bundle_id"] = bundle_id;
  j["component_type"] = component_type;
  j["payload"] = payload;
  j["checksum"] = checksum.hex();
  j["slots"] = Json{{"compute", compute_slots}, {"storage", storage_slots}};
  return j;
}

Bundle Bundle::from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("bundle must be an object");
  for (const char* f : {"bundle_id", "component_type", "payload"}) {
    if (!j.contains(f)) throw InvalidArgument(std::string("bundle: missing ") + f);
  }
  Bundle b;
  try {
    b.bundle_id = j["bundle_id"].get<std::string>();
    b.component_type = j["component_type"].get<std::string>();
    b.payload = j["payload"].is_string() ? j["payload"].get<std::string>() : j["payload"].dump();
    b.checksum = j.contains("checksum") ? Guid::parse(j["checksum"].get<std::string>()) : guid_of(b.payload);
    if (j.contains("slots")) {
      b.compute_slots = j["slots"].value("compute", 1);
      b.storage_slots = j["slots"].value("storage", 0);
    }
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("bundle: ") + e.what());
  }
  if (b.bundle_id.empty()) throw InvalidArgument("bundle: empty bundle_id");
  if (b.compute_slots < 0 || b.storage_slots < 0) throw InvalidArgument("bundle: negative slots");
  return b;
}

}  // namespace ctxmatch::deploy
