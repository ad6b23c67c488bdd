#include "ctxmatch/harness/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace ctxmatch::harness {

namespace {

Millis rank(const std::vector<Millis>& sorted, int p) {
  const std::size_t n = sorted.size();
  std::size_t r = (static_cast<std::size_t>(p) * n + 99) / 100;
  return sorted[std::max<std::size_t>(r, 1) - 1];
}

struct Placed {
  std::string node;
  std::string type;
  std::string region;
};

// Replays component placement; `visit` sees the count after each record.
template <typename Visit>
void replay(const sim::Trace& trace, const Json& constraint, Visit visit) {
  const std::string type = constraint.value("component_type", "");
  const std::string region = constraint.value("region", "");
  std::map<std::string, Placed> placed;
  std::set<std::string> dead;
  auto count = [&] {
    std::size_t n = 0;
    for (const auto& [id, p] : placed) n += p.type == type && p.region == region && !dead.count(p.node);
    return n;
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    bool changed = false;
    if (r.kind == "deploy.accept" && r.node) {
      placed[r.detail.value("component", "")] = Placed{r.node->hex(), r.detail.value("type", ""), r.detail.value("region", "")};
      changed = true;
    } else if (r.kind == "deploy.undeploy") {
      changed = placed.erase(r.detail.value("component", "")) != 0;
    } else if ((r.kind == "sim.crash" || r.kind == "sim.leave") && r.node) {
      changed = dead.insert(r.node->hex()).second;
    }
    if (changed) visit(i, r.t.millis, count());
  }
}

}  // namespace

Json Summary::to_json() const { return Json{{"count", count}, {"p50", p50}, {"p95", p95}, {"max", max}}; }

Summary summarize(std::vector<Millis> samples) {
  Summary s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.count = samples.size();
  s.p50 = rank(samples, 50);
  s.p95 = rank(samples, 95);
  s.max = samples.back();
  return s;
}

std::vector<InstancePoint> instance_series(const sim::Trace& trace, const Json& constraint) {
  std::vector<InstancePoint> out;
  replay(trace, constraint, [&](std::size_t i, Millis t, std::size_t n) {
    if (!out.empty() && out.back().t == t) {
      out.back().count = n;
      out.back().record = i;
    } else {
      out.push_back(InstancePoint{t, n, i});
    }
  });
  return out;
}

std::size_t instances_at(const sim::Trace& trace, const Json& constraint, Millis t) {
  std::size_t n = 0;
  for (const auto& p : instance_series(trace, constraint)) {
    if (p.t > t) break;
    n = p.count;
  }
  return n;
}

std::optional<std::size_t> census_at(const sim::Trace& trace, Millis t) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < trace.size() && trace[i].t.millis <= t; ++i) {
    if (trace[i].kind == "kb.census") found = i;
  }
  return found;
}

Json stats(const sim::Trace& trace) {
  Json records = Json::object();
  std::vector<Millis> delivery, match;
  Json messages{{"sent", 0}, {"delivered", 0}, {"dropped", 0}, {"sent_by_kind", Json::object()}};
  std::map<std::string, std::uint64_t> drop_reasons;
  std::uint64_t drops = 0;
  std::vector<std::size_t> censuses;
  std::vector<std::size_t> constraints;

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& r = trace[i];
    records[r.kind] = records.value(r.kind, 0) + 1;
    if (r.kind == "pubsub.deliver") {
      delivery.push_back(r.detail.value("latency_ms", Millis{0}));
    } else if (r.kind == "match.emit") {
      match.push_back(r.t.millis - r.detail.value("trigger_time", r.t.millis));
    } else if (r.kind == "sim.drop") {
      ++drops;
      ++drop_reasons[r.detail.value("reason", "unknown")];
    } else if (r.kind == "sim.summary") {
      for (const char* k : {"sent", "delivered", "dropped", "sent_by_kind"}) {
        if (r.detail.contains(k)) messages[k] = r.detail[k];
      }
    } else if (r.kind == "kb.census") {
      censuses.push_back(i);
    } else if (r.kind == "deploy.constraint") {
      constraints.push_back(i);
    }
  }

  // Availability on a 1 s grid: the latest census at or before each second.
  Json series = Json::array();
  double min_ratio = 0;
  if (!censuses.empty()) {
    min_ratio = 1.0;
    const Millis first = (trace[censuses.front()].t.millis + kSecond - 1) / kSecond * kSecond;
    const Millis last = trace[censuses.back()].t.millis;
    std::size_t c = 0;
    for (Millis s = first; s <= last; s += kSecond) {
      while (c + 1 < censuses.size() && trace[censuses[c + 1]].t.millis <= s) ++c;
      const auto& d = trace[censuses[c]].detail;
      const auto total = d.value("total", std::size_t{0});
      const auto available = d.value("available", std::size_t{0});
      const double ratio = total == 0 ? 1.0 : static_cast<double>(available) / static_cast<double>(total);
      min_ratio = std::min(min_ratio, ratio);
      series.push_back(Json{{"t", s}, {"available", available}, {"total", total}});
    }
  }

  Json violations = Json::array();
  Millis worst = 0;
  const Millis end = trace.empty() ? 0 : trace.back().t.millis;
  for (const auto ci : constraints) {
    const Json& c = trace[ci].detail["constraint"];
    if (c.value("kind", "") != "min_instances") continue;
    const auto need = c.value("n", std::size_t{0});
    const Millis from = trace[ci].t.millis;
    std::optional<Millis> open;
    auto close = [&](Millis t, bool still_open) {
      if (t > *open) {
        violations.push_back(Json{{"constraint", trace[ci].detail["index"]}, {"from", *open}, {"to", t}, {"duration_ms", t - *open}, {"open", still_open}});
        worst = std::max(worst, t - *open);
      }
      open.reset();
    };
    const auto series_c = instance_series(trace, c);
    std::size_t before = 0;
    for (const auto& p : series_c) {
      if (p.t >= from) break;
      before = p.count;
    }
    if (before < need) open = from;
    for (const auto& p : series_c) {
      if (p.t < from) continue;
      if (p.count < need && !open) open = p.t;
      if (p.count >= need && open) close(p.t, false);
    }
    if (open) close(end, true);
  }

  Json drop_json{{"total", drops}, {"by_reason", Json::object()}};
  for (const auto& [reason, n] : drop_reasons) drop_json["by_reason"][reason] = n;

  Json m = Json::object();
  m["records"] = std::move(records);
  m["messages"] = std::move(messages);
  m["delivery_latency_ms"] = summarize(std::move(delivery)).to_json();
  m["match_latency_ms"] = summarize(std::move(match)).to_json();
  m["availability"] = Json{{"min_ratio", min_ratio}, {"series", std::move(series)}};
  m["violations"] = std::move(violations);
  m["violation_max_ms"] = worst;
  m["drops"] = std::move(drop_json);
  return m;
}

std::optional<double> metric_value(const Json& metrics, const std::string& name) {
  const Json* cur = &metrics;
  std::stringstream ss(name);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (!cur->is_object() || !cur->contains(part)) return std::nullopt;
    cur = &(*cur)[part];
  }
  if (!cur->is_number()) return std::nullopt;
  return cur->get<double>();
}

}  // namespace ctxmatch::harness
