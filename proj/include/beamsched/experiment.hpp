#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "beamsched/config.hpp"
#include "beamsched/simulator.hpp"
#include "beamsched/whittle.hpp"

namespace beamsched {

struct PolicyOutcome {
  PolicyKind policy;
  ReplicationSet result;
};

struct PointOutcome {
  SystemConfig config;  // policy field is that of the first requested policy
  std::string fingerprint;
  int point = 0;
  std::vector<PolicyOutcome> policies;

  const ReplicationSet& of(PolicyKind p) const {
    for (const auto& o : policies)
      if (o.policy == p) return o.result;
    throw ValidationError("policy not run at this point");
  }
};

struct RunControls {
  unsigned workers = default_workers();
  // Precomputed tables, used instead of building them when non-empty.
  std::vector<WhittleTable> tables;
};

/// All requested policies at one configuration. Every policy sees the same
/// replication seeds, hence identical arrival and channel sample paths.
inline PointOutcome run_point(const SystemConfig& cfg, std::span<const PolicyKind> policies, int reps,
                              std::uint64_t seed_stride, const RunControls& ctl = {}, int point = 0) {
  cfg.validate();
  PointOutcome out;
  out.config = cfg;
  out.fingerprint = fingerprint(cfg);
  out.point = point;
  std::vector<WhittleTable> tables = ctl.tables;
  const bool needs_tables = std::find(policies.begin(), policies.end(), PolicyKind::Whittle) != policies.end();
  if (needs_tables && tables.empty()) tables = build_tables(cfg);
  for (PolicyKind p : policies) {
    SystemConfig c = cfg;
    c.policy = p;
    out.policies.push_back({p, run_replications(c, reps, seed_stride, tables, ctl.workers)});
  }
  return out;
}

inline int axis_value(const SystemConfig& c, SweepAxis axis) {
  switch (axis) {
    case SweepAxis::NumUsers: return c.num_users();
    case SweepAxis::NumBeams: return c.num_beams;
    case SweepAxis::None: return 0;
  }
  return 0;
}

inline std::vector<PointOutcome> run_experiment(const ExperimentSpec& e, const RunControls& ctl = {}) {
  e.validate();
  std::vector<PointOutcome> out;
  RunControls shared = ctl;
  const bool whittle = std::find(e.policies.begin(), e.policies.end(), PolicyKind::Whittle) != e.policies.end();
  // Tables depend on the users only, so a beam sweep builds them once.
  if (whittle && shared.tables.empty() && e.axis != SweepAxis::NumUsers) shared.tables = build_tables(e.base);
  for (const auto& c : e.points()) {
    RunControls local = shared;
    if (e.axis == SweepAxis::NumUsers) local.tables.clear();
    out.push_back(run_point(c, e.policies, e.reps, e.seed_stride, local, axis_value(c, e.axis)));
  }
  return out;
}

inline std::vector<ResultRecord> to_records(const std::vector<PointOutcome>& points, SweepAxis axis) {
  std::vector<ResultRecord> recs;
  for (const auto& pt : points) {
    for (const auto& po : pt.policies) {
      auto add = [&](const char* metric, const MetricStat& s) {
        recs.push_back({pt.fingerprint, to_string(axis), pt.point, std::string(to_string(po.policy)), metric, s.mean,
                        s.ci_half_width, s.n, pt.config.seed});
      };
      add("avg_cost", po.result.avg_cost);
      if (po.result.avg_delay) add("avg_delay", *po.result.avg_delay);
      add("avg_active_beams", po.result.avg_active_beams);
    }
  }
  return recs;
}

inline json summary_json(const std::string& name, const std::vector<PointOutcome>& points, SweepAxis axis) {
  json j;
  j["name"] = name;
  j["axis"] = to_string(axis);
  json pts = json::array();
  for (const auto& pt : points) {
    json p;
    p["point"] = pt.point;
    p["fingerprint"] = pt.fingerprint;
    p["config"] = config_to_json(pt.config);
    json pol = json::object();
    for (const auto& po : pt.policies) {
      json m;
      auto stat = [](const MetricStat& s) { return json{{"mean", s.mean}, {"ci_half_width", s.ci_half_width}, {"n", s.n}}; };
      m["avg_cost"] = stat(po.result.avg_cost);
      m["avg_delay"] = po.result.avg_delay ? stat(*po.result.avg_delay) : json(nullptr);
      m["avg_active_beams"] = stat(po.result.avg_active_beams);
      pol[std::string(to_string(po.policy))] = m;
    }
    p["policies"] = pol;
    pts.push_back(p);
  }
  j["points"] = pts;
  return j;
}

/// Writes `<path>` (records) and `<path>.json` (summary). With `append` the
/// records are added to an existing file and the header is written only if
/// the file was empty.
inline void write_results(const std::string& path, const std::vector<ResultRecord>& recs, const json& summary,
                          bool append = false) {
  namespace fs = std::filesystem;
  const bool fresh = !append || !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  if (fresh) out << kResultHeader << '\n';
  for (const auto& r : recs) out << to_csv(r) << '\n';
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw ValidationError("cannot write '" + path + ".json'");
  js << summary.dump(2) << '\n';
}

/// Writes one table file per user, `user_<i>.tbl`, into `dir`.
inline std::vector<std::string> write_tables(const std::string& dir, const std::vector<WhittleTable>& tables) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& t : tables) {
    const std::string p = (std::filesystem::path(dir) / ("user_" + std::to_string(t.user_id) + ".tbl")).string();
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + p + "'");
    write_table(out, t);
    paths.push_back(p);
  }
  return paths;
}

inline std::vector<WhittleTable> read_tables(const std::string& dir, const SystemConfig& cfg) {
  std::vector<WhittleTable> out;
  for (int i = 0; i < cfg.num_users(); ++i) {
    const std::string p = (std::filesystem::path(dir) / ("user_" + std::to_string(i) + ".tbl")).string();
    std::ifstream in(p);
    if (!in) throw ParseError("cannot open '" + p + "'");
    out.push_back(read_table(in));
  }
  return out;
}

}  // namespace beamsched
