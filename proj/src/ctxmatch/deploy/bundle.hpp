#pragma once

#include <string>

#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/json_types.hpp"

namespace ctxmatch::deploy {

/// A verified unit of deployable component definition.
struct Bundle {
  std::string bundle_id;
  /// "matchlet", "storelet", "replication-service", "filter", "bus" or any
  /// registered pipeline component type.
  std::string component_type;
  /// Serialized component definition.
  std::string payload;
  Guid checksum;
  int compute_slots = 1;
  int storage_slots = 0;

  /// Builds a bundle whose checksum matches `payload`.
  static Bundle make(std::string id, std::string type, const Json& payload, int compute = 1, int storage = 0);

  bool verify() const { return guid_of(payload) == checksum; }

  Json to_json() const;
  /// Accepts {"bundle_id", "component_type", "payload", "checksum"?, "slots"?}.
  /// The payload may be a JSON value (serialized here) or a string. A
  /// missing checksum is computed. Throws InvalidArgument.
  static Bundle from_json(const Json& j);
};

}  // namespace ctxmatch::deploy
