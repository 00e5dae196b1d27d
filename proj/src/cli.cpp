#include "ncache/cli.hpp"

#include "ncache/config.hpp"
#include "ncache/dataset.hpp"
#include "ncache/io.hpp"
#include "ncache/metrics.hpp"
#include "ncache/simulator.hpp"
#include "ncache/sweep.hpp"
#include "ncache/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <thread>

namespace ncache {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Options {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string path;
  std::optional<double> target;
  bool no_traces = false;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_stats(const Dataset& ds, const DatasetStats& s, std::ostream& out) {
  out << "dataset            " << ds.manifest.name << "\n"
      << "classes            " << ds.num_classes() << "\n"
      << "online / test      " << ds.online.size() << " / " << ds.test.size() << "\n"
      << "teacher accuracy   " << fixed(s.teacher_accuracy, 3) << "\n"
      << "average margin     " << fixed(s.avg_margin, 2) << "\n"
      << "margin when wrong  " << (s.avg_margin_when_wrong ? fixed(*s.avg_margin_when_wrong, 2) : "-") << "\n";
}

fs::path dataset_arg(const Options& o) {
  if (!o.path.empty()) return resolve_dataset_path(o.path, {});
  if (!o.config.empty()) return load_experiment_config(o.config, o.overrides).dataset;
  throw ValidationError("a dataset directory or --config is required");
}

ExperimentConfig require_config(const Options& o) {
  if (o.config.empty()) throw ValidationError("--config is required");
  return load_experiment_config(o.config, o.overrides);
}

std::string cell_name(const RunConfig& c) {
  std::string budget = format_real(c.budget);
  while (budget.back() == '0') budget.pop_back();
  if (budget.back() == '.') budget.pop_back();
  std::string name = c.policy.label() + "-" + budget + "-" + std::to_string(c.seed);
  if (c.oracle_filter) name += "-oracle";
  return name;
}

int cmd_validate(const Options& o, std::ostream& out) {
  const Dataset ds = load_dataset(dataset_arg(o));
  out << "ok\n";
  print_stats(ds, dataset_stats(ds), out);
  return kExitOk;
}

int cmd_stats(const Options& o, std::ostream& out) {
  const Dataset ds = load_dataset(dataset_arg(o));
  json j = stats_to_json(dataset_stats(ds), ds.manifest.class_names);
  j["dataset"] = ds.manifest.name;
  j["online"] = stats_to_json(instance_stats(ds.online, ds.num_classes()), ds.manifest.class_names);
  j["test"] = stats_to_json(instance_stats(ds.test, ds.num_classes()), ds.manifest.class_names);
  const std::string text = j.dump(2) + "\n";
  if (!o.out.empty()) write_file_atomic(fs::path(o.out) / "stats.json", text);
  out << text;
  return kExitOk;
}

int cmd_run(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = require_config(o);
  const Dataset ds = load_dataset(cfg.dataset);
  const RunConfig rc = cfg.cell(cfg.policies.front(), cfg.budgets.front(), cfg.seeds.front());
  const RunRecord record = run_experiment(ds, rc);
  const RunMetrics m = compute_metrics(record, ds);
  json j;
  j["cell"] = cell_name(rc);
  j["metrics"] = metrics_to_json(m);
  j["llm_data_size"] = record.llm_data_size;
  j["oracle_dropped"] = record.oracle_dropped;
  j["degenerate_committee_decisions"] = record.degenerate_committee_decisions;
  const std::string text = j.dump(2) + "\n";
  if (!o.out.empty()) {
    write_file_atomic(fs::path(o.out) / "run.json", text);
    if (!o.no_traces) write_trace_jsonl(record, fs::path(o.out) / "traces" / (cell_name(rc) + ".jsonl"));
  }
  out << text;
  return kExitOk;
}

void print_report(const SweepReport& r, std::ostream& out) {
  out << r.dataset << " (" << r.regime << ")\n";
  out << "policy               online_auc  final_auc\n";
  for (const auto& p : r.policies) {
    std::string name = p.policy;
    name.resize(std::max<std::size_t>(name.size(), 20), ' ');
    out << name << " " << fixed(p.online_auc, 4) << "      " << fixed(p.final_auc, 4);
    if (p.oracle) {
      out << "  oracle delta online " << fixed(p.oracle->online, 4) << " final " << fixed(p.oracle->final_accuracy, 4);
    }
    out << "\n";
  }
}

void write_report(const SweepReport& r, const fs::path& dir) {
  write_file_atomic(dir / "report.json", report_to_json(r).dump(2) + "\n");
  write_file_atomic(dir / "curves.csv", curves_csv(r));
  write_file_atomic(dir / "cells.csv", cells_csv(r));
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const ExperimentConfig cfg = require_config(o);
  if (o.out.empty()) throw ValidationError("--out is required for sweep");
  const Dataset ds = load_dataset(cfg.dataset);
  const auto cells = run_sweep(ds, cfg, o.jobs);
  const SweepReport report = build_report(ds, cfg, cells);
  const fs::path dir(o.out);
  write_report(report, dir);
  write_file_atomic(dir / "config.json", experiment_config_to_json(cfg).dump(2) + "\n");
  if (!o.no_traces) {
    for (const auto& c : cells) write_trace_jsonl(c.record, dir / "traces" / (cell_name(c.config) + ".jsonl"));
  }
  print_report(report, out);
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  fs::path dir = o.path.empty() ? fs::path(o.out) : fs::path(o.path);
  if (dir.empty()) throw ValidationError("a sweep output directory is required");
  const fs::path file = fs::is_directory(dir) ? dir / "report.json" : dir;
  const std::string raw = read_file(file);
  SweepReport report;
  try {
    report = report_from_json(json::parse(raw));
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  write_report(report, o.out.empty() ? file.parent_path() : fs::path(o.out));
  print_report(report, out);
  return kExitOk;
}

int cmd_synth_check(const Options& o, std::ostream& out) {
  if (o.path.empty()) throw ValidationError("a synthetic spec file or dataset directory is required");
  Dataset ds;
  double target = 0.0;
  if (fs::is_directory(o.path)) {
    ds = load_dataset(o.path);
    if (o.target) {
      target = *o.target;
    } else if (const auto g = ds.manifest.extra.find("generator"); g != ds.manifest.extra.end()) {
      target = synthetic_spec_from_json(*g).teacher_accuracy;
    } else {
      throw ValidationError("--target is required for datasets without a generator record");
    }
  } else {
    const std::string raw = read_file(o.path);
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ValidationError(o.path + ":" + std::to_string(line_of_offset(raw, e.byte)) + ": malformed JSON");
    }
    const SyntheticSpec spec = synthetic_spec_from_json(j);
    ds = generate_synthetic(spec);
    target = o.target.value_or(spec.teacher_accuracy);
    if (!o.out.empty()) save_dataset(ds, o.out);
  }
  const SynthCheck c = check_synthetic(ds, target);
  out << "target accuracy      " << fixed(c.target_accuracy, 3) << "\n"
      << "realized accuracy    " << fixed(c.realized_accuracy, 4) << (c.accuracy_ok ? "  ok" : "  FAIL") << "\n"
      << "margin when correct  " << fixed(c.mean_margin_correct, 3) << "\n"
      << "margin when wrong    " << (c.mean_margin_wrong ? fixed(*c.mean_margin_wrong, 3) : "-")
      << (c.calibration_ok ? "  ok" : "  FAIL") << "\n";
  return c.passed() ? kExitOk : kExitInvalid;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Student/teacher routing replay simulator", "ncache"};
  app.require_subcommand(1);
  app.footer("\n" + config_help() + "\nRelative dataset paths fall back to $" + kDataDirEnv + ".");
  Options o;

  const auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config,-c", o.config, "experiment config file (JSON)");
    sub->add_option("--set,-s", o.overrides, "override a config key, key=value (repeatable)");
  };
  auto* validate = app.add_subcommand("validate", "check a dataset directory and print teacher statistics");
  validate->add_option("dataset", o.path, "dataset directory");
  add_config(validate);
  auto* stats = app.add_subcommand("stats", "teacher statistics as JSON");
  stats->add_option("dataset", o.path, "dataset directory");
  stats->add_option("--out,-o", o.out, "also write stats.json here");
  add_config(stats);
  auto* run = app.add_subcommand("run", "one run: first policy, budget and seed of the config");
  add_config(run);
  run->add_option("--out,-o", o.out, "output directory");
  run->add_flag("--no-traces", o.no_traces, "skip per-instance trace files");
  auto* sweep = app.add_subcommand("sweep", "all policy x budget x seed cells");
  add_config(sweep);
  sweep->add_option("--out,-o", o.out, "output directory");
  sweep->add_option("--jobs,-j", o.jobs, "worker threads (default: available cores)")->check(CLI::PositiveNumber);
  sweep->add_flag("--no-traces", o.no_traces, "skip per-instance trace files");
  auto* report = app.add_subcommand("report", "re-render CSV tables from a report.json");
  report->add_option("report", o.path, "sweep output directory or report.json");
  report->add_option("--out,-o", o.out, "directory for regenerated tables");
  auto* synth = app.add_subcommand("synth-check", "generate from a synthetic spec (or load a dataset) and check teacher calibration");
  synth->add_option("input", o.path, "synthetic spec JSON or dataset directory");
  synth->add_option("--out,-o", o.out, "write the generated dataset here");
  synth->add_option("--target", o.target, "target teacher accuracy");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (validate->parsed()) return cmd_validate(o, out);
    if (stats->parsed()) return cmd_stats(o, out);
    if (run->parsed()) return cmd_run(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (report->parsed()) return cmd_report(o, out);
    if (synth->parsed()) return cmd_synth_check(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitInvalid;
}

}  // namespace ncache
