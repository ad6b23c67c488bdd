#pragma once

#include <json.hpp>  // vendored nlohmann/json

namespace ctxmatch {

// Insertion-ordered so trace detail objects serialize in the order they were built.
using Json = nlohmann::ordered_json;

}  // namespace ctxmatch
