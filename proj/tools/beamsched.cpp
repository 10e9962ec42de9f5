// beamsched: index tables, simulation runs, sweeps and the structural
// property suite for Whittle-index beam scheduling.
//
// Exit codes: 0 success, 1 invalid input, 2 solver failure, 3 property failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "beamsched/config.hpp"
#include "beamsched/experiment.hpp"
#include "beamsched/verify.hpp"

namespace bs = beamsched;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitSolver = 2;
constexpr int kExitProperty = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<long> warmup;
  std::optional<long> horizon;
  std::optional<int> reps;
  std::optional<int> stride;
  std::optional<std::string> method;
  std::vector<std::string> policies;

  void apply(bs::SystemConfig& c) const {
    if (seed) c.seed = *seed;
    if (horizon) c.horizon = *horizon;
    if (warmup) c.warmup = *warmup;
    if (stride) c.index.sample_stride = *stride;
    if (method) c.index.method = bs::index_method_from_string(*method);
    c.validate();
  }

  void apply(bs::ExperimentSpec& e) const {
    apply(e.base);
    if (reps) e.reps = *reps;
    if (!policies.empty()) {
      e.policies.clear();
      for (const auto& p : policies) e.policies.push_back(bs::policy_from_string(p));
    }
    e.validate();
  }
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--warmup", o.warmup, "slots excluded from cost averaging");
  cmd->add_option("--horizon", o.horizon, "slots per replication");
  cmd->add_option("--reps", o.reps, "replications per policy");
  cmd->add_option("--policies", o.policies, "subset of whittle,lqf,mws,wfq,random")->delimiter(',');
  cmd->add_option("--stride", o.stride, "index anchor stride");
  cmd->add_option("--method", o.method, "index method: bisection or fixed_point");
}

void print_point(const bs::PointOutcome& pt) {
  std::printf("point %d  fingerprint %s\n", pt.point, pt.fingerprint.c_str());
  std::printf("  %-8s %16s %12s %12s %10s %10s\n", "policy", "avg_cost", "+/-", "avg_delay", "+/-", "beams");
  for (const auto& po : pt.policies) {
    const auto& r = po.result;
    std::printf("  %-8s %16.6g %12.4g %12.6g %10.4g %10.6g\n", std::string(bs::to_string(po.policy)).c_str(),
                r.avg_cost.mean, r.avg_cost.ci_half_width, r.avg_delay ? r.avg_delay->mean : 0.0,
                r.avg_delay ? r.avg_delay->ci_half_width : 0.0, r.avg_active_beams.mean);
  }
}

int cmd_index(const std::string& path, const std::string& out_dir, const Overrides& o) {
  auto cfg = bs::parse_config(path).as_experiment().base;
  o.apply(cfg);
  const auto tables = bs::build_tables(cfg);
  for (const auto& p : bs::write_tables(out_dir, tables)) std::printf("wrote %s\n", p.c_str());
  for (const auto& t : tables)
    std::printf("user %d  index(1)=%.6g  index(N)=%.6g  anchors=%zu\n", t.user_id, bs::lookup_index(t, 1),
                bs::lookup_index(t, t.max_state()), t.anchors.size());
  return 0;
}

int cmd_run(const std::string& path, const std::string& out, const std::string& tables_dir,
            const std::string& trace_path, bool append, const Overrides& o, bool sweep) {
  auto parsed = bs::parse_config(path);
  if (sweep && !parsed.experiment) throw bs::ValidationError("sweep needs an experiment file (with \"base\")");
  auto spec = parsed.as_experiment();
  if (!sweep) spec.axis = bs::SweepAxis::None;
  o.apply(spec);
  bs::RunControls ctl;
  if (!tables_dir.empty()) ctl.tables = bs::read_tables(tables_dir, spec.base);
  if (!trace_path.empty()) {
    std::ofstream tr(trace_path, std::ios::trunc);
    if (!tr) throw bs::ValidationError("cannot write '" + trace_path + "'");
    auto c = spec.base;
    c.policy = spec.policies.front();
    const auto tables = c.policy == bs::PolicyKind::Whittle && ctl.tables.empty() ? bs::build_tables(c) : ctl.tables;
    bs::SimOptions opt;
    opt.trace = &tr;
    bs::simulate(c, tables, opt);
  }
  const auto points = bs::run_experiment(spec, ctl);
  for (const auto& pt : points) print_point(pt);
  const std::string target = !out.empty() ? out : spec.output;
  if (!target.empty()) {
    bs::write_results(target, bs::to_records(points, spec.axis), bs::summary_json(spec.name, points, spec.axis), append);
    std::printf("wrote %s and %s.json\n", target.c_str(), target.c_str());
  }
  return 0;
}

int cmd_verify(const std::optional<std::uint64_t>& seed, const std::optional<int>& tuples, bool skip_index,
               const std::string& out) {
  bs::VerifyGrid g;
  if (seed) g.seed = *seed;
  if (tuples) g.tuples = *tuples;
  bs::VerifySelection sel;
  sel.index = !skip_index;
  const auto rep = bs::run_verify(g, sel);
  bs::write_report(std::cout, rep);
  if (!out.empty()) {
    std::ofstream f(out, std::ios::trunc);
    if (!f) throw bs::ValidationError("cannot write '" + out + "'");
    bs::write_report(f, rep);
  }
  return rep.passed() ? 0 : kExitProperty;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whittle-index beam scheduling: index tables, simulation and property checks"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path, out, tables_dir, trace_path;
  bool append = false;

  auto* index = app.add_subcommand("index", "build and write per-user index tables");
  index->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
  index->add_option("-o,--out", out, "output directory")->required();
  index->add_option("--stride", ov.stride, "index anchor stride");
  index->add_option("--method", ov.method, "bisection or fixed_point");

  auto* simulate = app.add_subcommand("simulate", "run every requested policy on one configuration");
  simulate->add_option("config", config_path, "config or experiment file")->required()->check(CLI::ExistingFile);
  simulate->add_option("-o,--out", out, "result records (CSV); a .json summary is written next to it");
  simulate->add_option("--tables", tables_dir, "directory of precomputed index tables");
  simulate->add_option("--trace", trace_path, "per-slot trace of the first policy, first replication");
  simulate->add_flag("--append", append, "append records instead of overwriting");
  add_run_flags(simulate, ov);

  auto* sweep = app.add_subcommand("sweep", "run an experiment's sweep axis");
  sweep->add_option("experiment", config_path, "experiment file")->required()->check(CLI::ExistingFile);
  sweep->add_option("-o,--out", out, "result records (CSV)");
  sweep->add_flag("--append", append, "append records instead of overwriting");
  add_run_flags(sweep, ov);

  std::optional<std::uint64_t> vseed;
  std::optional<int> vtuples;
  bool skip_index = false;
  auto* verify = app.add_subcommand("verify", "structural property suite on random parameter tuples");
  verify->add_option("--seed", vseed, "grid seed");
  verify->add_option("--tuples", vtuples, "number of parameter tuples");
  verify->add_flag("--skip-index", skip_index, "skip the index-iteration equivalence checks");
  verify->add_option("-o,--out", out, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*index) return cmd_index(config_path, out, ov);
    if (*simulate) return cmd_run(config_path, out, tables_dir, trace_path, append, ov, false);
    if (*sweep) return cmd_run(config_path, out, tables_dir, trace_path, append, ov, true);
    if (*verify) return cmd_verify(vseed, vtuples, skip_index, out);
  } catch (const bs::SolverError& e) {
    std::fprintf(stderr, "solver error (%s): %s\n", bs::to_string(e.kind()), e.what());
    return kExitSolver;
  } catch (const bs::ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitInvalid;
  } catch (const bs::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitInvalid;
  }
  return 0;
}
