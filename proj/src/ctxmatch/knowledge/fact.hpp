#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "ctxmatch/core/event.hpp"
#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/sim_time.hpp"

namespace ctxmatch::knowledge {

/// Immutable, content-addressed knowledge item.
struct Fact {
  std::string kind;
  AttributeList body;
  std::optional<std::string> subject;
  /// Not part of the identity.
  SimTime created_at;

  /// Key-sorted JSON of {body, kind, subject?}; attribute order does not matter.
  std::string canonical() const;
  Guid guid() const { return guid_of(canonical()); }

  /// Throws InvalidArgument on malformed bytes.
  static Fact from_canonical(std::string_view bytes);

  /// {"guid", "kind", "subject"?, "body"} for traces and reports.
  Json to_json() const;
  /// Scenario form {kind, body, subject?}. Throws InvalidArgument.
  static Fact from_json(const Json& j);
};

}  // namespace ctxmatch::knowledge
