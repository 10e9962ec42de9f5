#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamsched/error.hpp"
#include "beamsched/model.hpp"
#include "beamsched/system.hpp"

namespace beamsched {

using nlohmann::json;

namespace detail {

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw ParseError(where + ": unknown key '" + k + "'");
}

template <class T>
T get_field(const json& obj, const std::string& key, const std::string& where) {
  const json& v = obj.at(key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError("field '" + where + key + "': wrong type (" + v.type_name() + ")");
  }
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& where) {
  if (obj.contains(key)) out = get_field<T>(obj, key, where);
}

template <class T>
std::vector<T> per_user(const json& obj, const char* key, std::size_t k, const std::string& where) {
  if (!obj.contains(key)) throw ParseError("missing field '" + where + key + "'");
  const json& v = obj.at(key);
  if (v.is_array()) {
    if (v.size() != k)
      throw ValidationError("field '" + where + key + "' has " + std::to_string(v.size()) + " entries, expected " +
                            std::to_string(k));
    return get_field<std::vector<T>>(obj, key, where);
  }
  return std::vector<T>(k, get_field<T>(obj, key, where));
}

inline int line_of(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < text.size() && i < byte; ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace detail

/// JSON schema of a system configuration. Per-user fields are arrays of
/// length K or a scalar shared by all users:
///   { "num_beams": 4, "num_users": 6,
///     "arrival_prob": [...], "channel_prob": [...], "beam_cost": [...],
///     "holding_coeff": [...], "buffer_size": 400,
///     "horizon": 20000, "warmup": 10000, "seed": 1, "policy": "whittle",
///     "wfq_weights": [...], "solver": {...}, "index": {...} }
/// num_users is optional and, when present, must equal the array lengths.
inline SystemConfig config_from_json(const json& j) {
  detail::reject_unknown(j, "config",
                         {"num_users", "num_beams", "arrival_prob", "channel_prob", "beam_cost", "holding_coeff",
                          "buffer_size", "horizon", "warmup", "seed", "policy", "wfq_weights", "solver", "index"});
  if (!j.contains("arrival_prob") || !j.at("arrival_prob").is_array())
    throw ParseError("field 'arrival_prob' must be an array with one entry per user");
  const std::size_t k = j.at("arrival_prob").size();
  if (j.contains("num_users") && detail::get_field<std::size_t>(j, "num_users", "") != k)
    throw ValidationError("num_users does not match the length of arrival_prob");
  SystemConfig c;
  const auto a = detail::per_user<double>(j, "arrival_prob", k, "");
  const auto d = detail::per_user<double>(j, "channel_prob", k, "");
  const auto p = detail::per_user<double>(j, "beam_cost", k, "");
  const auto q = detail::per_user<double>(j, "holding_coeff", k, "");
  const auto n = detail::per_user<int>(j, "buffer_size", k, "");
  for (std::size_t i = 0; i < k; ++i) c.users.push_back({a[i], d[i], p[i], q[i], n[i]});
  if (!j.contains("num_beams")) throw ParseError("missing field 'num_beams'");
  c.num_beams = detail::get_field<int>(j, "num_beams", "");
  detail::read_opt(j, "horizon", c.horizon, "");
  if (j.contains("warmup"))
    c.warmup = detail::get_field<long>(j, "warmup", "");
  else
    c.warmup = c.horizon / 2;
  detail::read_opt(j, "seed", c.seed, "");
  if (j.contains("policy")) c.policy = policy_from_string(detail::get_field<std::string>(j, "policy", ""));
  detail::read_opt(j, "wfq_weights", c.wfq_weights, "");
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    detail::reject_unknown(s, "solver", {"rvi_tol", "rvi_max_iter", "discount", "linear_solve_pivot_tol"});
    detail::read_opt(s, "rvi_tol", c.solver.rvi_tol, "solver.");
    detail::read_opt(s, "rvi_max_iter", c.solver.rvi_max_iter, "solver.");
    detail::read_opt(s, "discount", c.solver.discount, "solver.");
    detail::read_opt(s, "linear_solve_pivot_tol", c.solver.linear_solve_pivot_tol, "solver.");
  }
  if (j.contains("index")) {
    const json& s = j.at("index");
    detail::reject_unknown(s, "index",
                           {"method", "step", "lambda_init", "fp_tol", "fp_max_iter", "sample_stride", "bisection_tol"});
    if (s.contains("method")) c.index.method = index_method_from_string(detail::get_field<std::string>(s, "method", "index."));
    detail::read_opt(s, "step", c.index.step, "index.");
    detail::read_opt(s, "lambda_init", c.index.lambda_init, "index.");
    detail::read_opt(s, "fp_tol", c.index.fp_tol, "index.");
    detail::read_opt(s, "fp_max_iter", c.index.fp_max_iter, "index.");
    detail::read_opt(s, "sample_stride", c.index.sample_stride, "index.");
    detail::read_opt(s, "bisection_tol", c.index.bisection_tol, "index.");
  }
  c.validate();
  return c;
}

inline json config_to_json(const SystemConfig& c) {
  json j;
  j["num_users"] = c.num_users();
  j["num_beams"] = c.num_beams;
  std::vector<double> a, d, p, q;
  std::vector<int> n;
  for (const auto& u : c.users) {
    a.push_back(u.arrival_prob);
    d.push_back(u.channel_prob);
    p.push_back(u.beam_cost);
    q.push_back(u.holding_coeff);
    n.push_back(u.buffer_size);
  }
  j["arrival_prob"] = a;
  j["channel_prob"] = d;
  j["beam_cost"] = p;
  j["holding_coeff"] = q;
  if (std::all_of(n.begin(), n.end(), [&](int v) { return v == n.front(); }))
    j["buffer_size"] = n.front();
  else
    j["buffer_size"] = n;
  j["horizon"] = c.horizon;
  j["warmup"] = c.warmup;
  j["seed"] = c.seed;
  j["policy"] = std::string(to_string(c.policy));
  if (!c.wfq_weights.empty()) j["wfq_weights"] = c.wfq_weights;
  j["solver"] = {{"rvi_tol", c.solver.rvi_tol},
                 {"rvi_max_iter", c.solver.rvi_max_iter},
                 {"discount", c.solver.discount},
                 {"linear_solve_pivot_tol", c.solver.linear_solve_pivot_tol}};
  j["index"] = {{"method", to_string(c.index.method)}, {"step", c.index.step},
                {"lambda_init", c.index.lambda_init},  {"fp_tol", c.index.fp_tol},
                {"fp_max_iter", c.index.fp_max_iter},  {"sample_stride", c.index.sample_stride},
                {"bisection_tol", c.index.bisection_tol}};
  return j;
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ":" + std::to_string(detail::line_of(text, e.byte)) + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Hash of the resolved model and run parameters; seed and policy are
/// excluded because every record carries them separately.
inline std::string fingerprint(const SystemConfig& c) {
  json j = config_to_json(c);
  j.erase("seed");
  j.erase("policy");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Experiments

enum class SweepAxis { None, NumUsers, NumBeams };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::None: return "none";
    case SweepAxis::NumUsers: return "num_users";
    case SweepAxis::NumBeams: return "num_beams";
  }
  return "?";
}

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "none") return SweepAxis::None;
  if (s == "num_users") return SweepAxis::NumUsers;
  if (s == "num_beams") return SweepAxis::NumBeams;
  throw ValidationError("unknown sweep axis '" + s + "'");
}

/// Named user-list generators: the first K users of a family whose later
/// members follow a closed-form rule in the 1-based user number i.
struct UserGenerator {
  std::vector<UserParams> seed_users;
  std::function<UserParams(int)> extra;

  std::vector<UserParams> users(int k) const {
    if (k < 1) throw ValidationError("generator needs K >= 1");
    std::vector<UserParams> out;
    for (int i = 1; i <= k; ++i)
      out.push_back(i <= static_cast<int>(seed_users.size()) ? seed_users[i - 1] : extra(i));
    return out;
  }
};

inline std::vector<UserParams> zip_users(const std::vector<double>& a, const std::vector<double>& d,
                                         const std::vector<double>& p, const std::vector<double>& q, int n) {
  std::vector<UserParams> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back({a[i], d[i], p[i], q[i], n});
  return out;
}

inline UserGenerator named_generator(const std::string& name) {
  UserGenerator g;
  if (name == "fig4a") {
    g.seed_users = zip_users({0.52, 0.51, 0.5, 0.49, 0.48}, {0.30, 0.28, 0.29, 0.31, 0.28}, {60, 57, 54, 51, 48},
                             {80, 75, 70, 65, 60}, 200);
    g.extra = [](int i) {
      return UserParams{0.53 - 0.01 * i, 0.28 * (i % 2) + 0.29 * ((i + 1) % 2), 63.0 - 3.0 * i, 85.0 - 5.0 * i, 200};
    };
  } else if (name == "fig5a") {
    g.seed_users = zip_users({0.56, 0.53, 0.50, 0.47, 0.44}, {0.29, 0.285, 0.28, 0.275, 0.27}, {56, 52, 48, 44, 40},
                             {82, 78, 74, 70, 66}, 200);
    g.extra = [](int i) { return UserParams{0.59 - 0.03 * i, 0.295 - 0.005 * i, 60.0 - 4.0 * i, 86.0 - 4.0 * i, 200}; };
  } else if (name == "table2") {
    std::vector<double> a, d, p, q;
    for (int i = 1; i <= 16; ++i) {
      const int r = (i - 1) % 5;
      a.push_back(0.64 - 0.005 * r);
      d.push_back(0.74 - 0.005 * r);
      p.push_back(60.0 - 5.0 * r);
      q.push_back(40.0 - 5.0 * r);
    }
    g.seed_users = zip_users(a, d, p, q, 100);
    g.extra = [](int i) {
      const int r = (i - 1) % 5;
      return UserParams{0.64 - 0.005 * r, 0.74 - 0.005 * r, 60.0 - 5.0 * r, 40.0 - 5.0 * r, 100};
    };
  } else {
    throw ValidationError("unknown generator '" + name + "'");
  }
  return g;
}

struct ExperimentSpec {
  std::string name;
  SystemConfig base;
  SweepAxis axis = SweepAxis::None;
  std::vector<int> values;
  std::string generator;  // required for a num_users sweep
  std::vector<PolicyKind> policies{kAllPolicies.begin(), kAllPolicies.end()};
  int reps = 20;
  std::uint64_t seed_stride = 1'000'003;
  std::string output;

  /// Resolved configuration of every sweep point.
  std::vector<SystemConfig> points() const {
    std::vector<SystemConfig> out;
    if (axis == SweepAxis::None) {
      out.push_back(base);
    } else {
      for (int v : values) {
        SystemConfig c = base;
        if (axis == SweepAxis::NumBeams) {
          c.num_beams = v;
        } else {
          c.users = named_generator(generator).users(v);
        }
        out.push_back(std::move(c));
      }
    }
    for (const auto& c : out) c.validate();
    return out;
  }

  void validate() const {
    if (reps < 1) throw ValidationError("reps must be >= 1");
    if (policies.empty()) throw ValidationError("at least one policy required");
    if (axis != SweepAxis::None && values.empty()) throw ValidationError("sweep needs at least one value");
    if (axis == SweepAxis::NumUsers && generator.empty()) throw ValidationError("num_users sweep needs a generator");
    (void)points();
  }
};

/// Experiment schema: { "name": ..., "base": <config>, "sweep": { "axis": ...,
/// "values": [...], "generator": ... }, "policies": [...], "reps": 20,
/// "seed_stride": ..., "output": ... }. With a generator the base config may
/// omit the per-user arrays; they are filled from the generator at the first
/// sweep value.
inline ExperimentSpec experiment_from_json(const json& j) {
  detail::reject_unknown(j, "experiment", {"name", "base", "sweep", "policies", "reps", "seed_stride", "output"});
  ExperimentSpec e;
  detail::read_opt(j, "name", e.name, "");
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::reject_unknown(s, "sweep", {"axis", "values", "generator"});
    if (s.contains("axis")) e.axis = sweep_axis_from_string(detail::get_field<std::string>(s, "axis", "sweep."));
    detail::read_opt(s, "values", e.values, "sweep.");
    detail::read_opt(s, "generator", e.generator, "sweep.");
  }
  if (!j.contains("base")) throw ParseError("missing field 'base'");
  json base = j.at("base");
  if (!e.generator.empty() && !base.contains("arrival_prob")) {
    if (e.values.empty()) throw ValidationError("generator needs sweep values");
    const auto users = named_generator(e.generator).users(e.values.front());
    std::vector<double> a, d, p, q;
    for (const auto& u : users) {
      a.push_back(u.arrival_prob);
      d.push_back(u.channel_prob);
      p.push_back(u.beam_cost);
      q.push_back(u.holding_coeff);
    }
    base["arrival_prob"] = a;
    base["channel_prob"] = d;
    base["beam_cost"] = p;
    base["holding_coeff"] = q;
    base["buffer_size"] = users.front().buffer_size;
  }
  e.base = config_from_json(base);
  if (j.contains("policies")) {
    e.policies.clear();
    for (const auto& s : detail::get_field<std::vector<std::string>>(j, "policies", "")) e.policies.push_back(policy_from_string(s));
  }
  detail::read_opt(j, "reps", e.reps, "");
  detail::read_opt(j, "seed_stride", e.seed_stride, "");
  detail::read_opt(j, "output", e.output, "");
  e.validate();
  return e;
}

inline json experiment_to_json(const ExperimentSpec& e) {
  json j;
  j["name"] = e.name;
  j["base"] = config_to_json(e.base);
  j["sweep"] = {{"axis", to_string(e.axis)}, {"values", e.values}};
  if (!e.generator.empty()) j["sweep"]["generator"] = e.generator;
  std::vector<std::string> pol;
  for (auto p : e.policies) pol.emplace_back(to_string(p));
  j["policies"] = pol;
  j["reps"] = e.reps;
  j["seed_stride"] = e.seed_stride;
  if (!e.output.empty()) j["output"] = e.output;
  return j;
}

/// A file holds either a bare config or an experiment (detected by "base").
struct ParsedFile {
  std::optional<SystemConfig> config;
  std::optional<ExperimentSpec> experiment;

  ExperimentSpec as_experiment() const {
    if (experiment) return *experiment;
    ExperimentSpec e;
    e.base = *config;
    return e;
  }
};

inline ParsedFile parse_config_text(const std::string& text, const std::string& origin = "<input>") {
  const json j = parse_json_text(text, origin);
  ParsedFile f;
  try {
    if (j.is_object() && j.contains("base"))
      f.experiment = experiment_from_json(j);
    else
      f.config = config_from_json(j);
  } catch (const ParseError& e) {
    throw ParseError(origin + ": " + e.what());
  }
  return f;
}

inline ParsedFile parse_config(const std::string& path) { return parse_config_text(read_file(path), path); }

// ---------------------------------------------------------------------------
// Results

struct ResultRecord {
  std::string fingerprint;
  std::string axis;
  int point = 0;
  std::string policy;
  std::string metric;
  double mean = 0.0;
  double ci_half_width = 0.0;
  int n_reps = 0;
  std::uint64_t seed = 0;
};

inline const char* kResultHeader = "fingerprint,axis,point,policy,metric,mean,ci_half_width,n_reps,seed";

inline std::string to_csv(const ResultRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%s,%d,%s,%s,%.10g,%.10g,%d,%llu", r.fingerprint.c_str(), r.axis.c_str(), r.point,
                r.policy.c_str(), r.metric.c_str(), r.mean, r.ci_half_width, r.n_reps,
                static_cast<unsigned long long>(r.seed));
  return buf;
}

}  // namespace beamsched
