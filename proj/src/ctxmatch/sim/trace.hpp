#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxmatch/core/guid.hpp"
#include "ctxmatch/core/json_types.hpp"
#include "ctxmatch/core/sim_time.hpp"

namespace ctxmatch::sim {

struct TraceRecord {
  SimTime t;
  std::string kind;
  std::optional<NodeId> node;
  Json detail = Json::object();

  /// One JSON object with keys in the fixed order t, kind, node, detail.
  std::string to_line() const;
  /// Throws InvalidArgument on malformed input.
  static TraceRecord parse(const std::string& line);
};

/// Append-only list of trace records.
class Trace {
 public:
  void append(TraceRecord r) { records_.push_back(std::move(r)); }

  std::size_t size() const { return records_.size(); }
  const TraceRecord& back() const { return records_.back(); }
  bool empty() const { return records_.empty(); }
  const TraceRecord& operator[](std::size_t i) const { return records_[i]; }
  std::span<const TraceRecord> records() const { return records_; }
  std::span<const TraceRecord> since(std::size_t first) const {
    return std::span<const TraceRecord>(records_).subspan(std::min(first, records_.size()));
  }
  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  void write_jsonl(std::ostream& os) const;
  /// Throws InvalidArgument naming the 1-based line number of the first bad line.
  static Trace read_jsonl(std::istream& is);

 private:
  std::vector<TraceRecord> records_;
};

}  // namespace ctxmatch::sim
