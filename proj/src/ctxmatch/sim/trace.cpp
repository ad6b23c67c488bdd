#include "ctxmatch/sim/trace.hpp"

#include <istream>
#include <ostream>

#include "ctxmatch/core/error.hpp"

namespace ctxmatch::sim {

std::string TraceRecord::to_line() const {
  std::string out = "{\"t\":";
  out += std::to_string(t.millis);
  out += ",\"kind\":";
  out += Json(kind).dump();
  out += ",\"node\":";
  out += node ? Json(node->hex()).dump() : std::string("null");
  out += ",\"detail\":";
  out += detail.dump();
  out += "}";
  return out;
}

TraceRecord TraceRecord::parse(const std::string& line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("t") || !j.contains("kind") || !j.contains("detail")) {
    throw InvalidArgument("trace record needs t, kind, node, detail");
  }
  TraceRecord r;
  try {
    r.t = SimTime{j.at("t").get<Millis>()};
    r.kind = j.at("kind").get<std::string>();
    if (j.contains("node") && !j.at("node").is_null()) r.node = Guid::parse(j.at("node").get<std::string>());
    r.detail = j.at("detail");
  } catch (const Json::exception& e) {
    throw InvalidArgument(std::string("bad trace field: ") + e.what());
  }
  return r;
}

void Trace::write_jsonl(std::ostream& os) const {
  for (const auto& r : records_) os << r.to_line() << '\n';
}

Trace Trace::read_jsonl(std::istream& is) {
  Trace trace;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      trace.append(TraceRecord::parse(line));
    } catch (const Error& e) {
      throw InvalidArgument("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace ctxmatch::sim
