// Copyright 2026 The MalLight Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: dataset generation, runs, sweeps and reports.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mallight/error.hpp"
#include "mallight/harness.hpp"

namespace fs = std::filesystem;
using namespace mallight;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string seed, controller, malfunction, ablation, features;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "flat key=value configuration file");
  cmd->add_option("--set", c.overrides, "extra key=value override (repeatable)");
  cmd->add_option("--seed", c.seed, "run seed (u64)");
  cmd->add_option("--controller", c.controller, "fixedtime|sotl|maxpressure|idqn|mallight");
  cmd->add_option("--malfunction", c.malfunction, "comma-separated intersection ids or 'none'");
  cmd->add_option("--ablation", c.ablation, "S|R|M");
  cmd->add_option("--features", c.features, "full|lanes-only");
}

KeyValueConfig layered(const Common& c) {
  KeyValueConfig kv = c.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(c.config);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ArgumentError("--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (!c.seed.empty()) kv.set("seed", c.seed);
  if (!c.controller.empty()) kv.set("controller", c.controller);
  if (!c.malfunction.empty()) kv.set("malfunction", c.malfunction);
  if (!c.ablation.empty()) kv.set("ablation", c.ablation);
  if (!c.features.empty()) kv.set("features", c.features);
  return kv;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::string cell;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      if (cell.empty()) throw ArgumentError("empty value in list '" + text + "'");
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw ArgumentError("bad value '" + cell + "'");
      out.push_back(v);
      cell.clear();
    } else {
      cell += text[i];
    }
  }
  return out;
}

RoadNetwork network_for(const ExperimentConfig& cfg) {
  return cfg.network_file.empty() ? generate_grid(cfg.grid_rows, cfg.grid_cols, cfg.grid_block)
                                  : load_network(cfg.network_file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traffic-signal control under signal malfunction"};
  app.require_subcommand(1);

  int rows = 4, cols = 4;
  double block = 300.0;
  std::string out;
  bool resume = false;
  auto* gen_grid = app.add_subcommand("gen-grid", "write a lattice road network");
  gen_grid->add_option("--rows", rows)->capture_default_str();
  gen_grid->add_option("--cols", cols)->capture_default_str();
  gen_grid->add_option("--block", block, "block length in meters")->capture_default_str();
  gen_grid->add_option("--out", out, "output network file")->required();

  std::string network_file, od = "all";
  FlowSpec spec;
  std::uint64_t flow_seed = 0;
  auto* gen_flow = app.add_subcommand("gen-flow", "write a synthetic flow file");
  gen_flow->add_option("--network", network_file, "network file (default: 4x4 grid)");
  gen_flow->add_option("--rate", spec.rate, "vehicles per 300 s")->capture_default_str();
  gen_flow->add_option("--duration", spec.duration, "seconds")->capture_default_str();
  gen_flow->add_option("--od", od, "all|boundary")->capture_default_str();
  gen_flow->add_option("--seed", flow_seed)->capture_default_str();
  gen_flow->add_option("--out", out, "output flow file")->required();

  Common run_opts;
  auto* run = app.add_subcommand("run", "train and evaluate one controller");
  add_common(run, run_opts);
  run->add_option("--out", out, "output directory")->required();
  run->add_flag("--resume", resume, "continue training from <out>/checkpoint.txt");

  Common sweep_opts;
  std::string axis, values, seeds = "0,1,2,3,4";
  auto* sweep_cmd = app.add_subcommand("sweep", "reduction ratio across K or #malfunctions");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--axis", axis, "K|malfunction-count")->required();
  sweep_cmd->add_option("--values", values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds")->capture_default_str();
  sweep_cmd->add_option("--out", out, "output directory")->required();

  Common infl_opts;
  int source = 0, steps = 10;
  double alpha = 0.15;
  std::string mask;
  auto* influence = app.add_subcommand("influence", "mean diffusion weight per hop distance");
  add_common(influence, infl_opts);
  influence->add_option("--source", source)->capture_default_str();
  influence->add_option("--steps", steps, "diffusion steps K")->capture_default_str();
  influence->add_option("--alpha", alpha, "restart probability")->capture_default_str();
  influence->add_option("--mask", mask, "keep only these source columns (ids)");
  influence->add_option("--out", out, "output CSV")->required();

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "compare metrics files of one scenario");
  report->add_option("files", inputs, "metrics CSV files")->required();
  report->add_option("--out", out, "output CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_grid->parsed()) {
      save_network(generate_grid(rows, cols, block), out);
    } else if (gen_flow->parsed()) {
      const RoadNetwork net =
          network_file.empty() ? generate_grid(4, 4, 300.0) : load_network(network_file);
      spec.od = parse_od_policy(od);
      spec.seed = flow_seed;
      save_flow(generate_flow(net, spec), out);
    } else if (run->parsed()) {
      const auto cfg = ExperimentConfig::from(layered(run_opts));
      fs::create_directories(out);
      RunPaths paths;
      if (is_learning(cfg.controller)) {
        paths.checkpoint = (fs::path(out) / "checkpoint.txt").string();
        paths.curve = (fs::path(out) / "learning_curve.csv").string();
        paths.resume = resume;
      }
      write_text_file((fs::path(out) / "config.txt").string(), cfg.to_config().canonical());
      const auto r = run_experiment(cfg, paths);
      write_text_file((fs::path(out) / "metrics.csv").string(), format_metrics_csv(r));
      write_text_file((fs::path(out) / "accidents.csv").string(),
                      format_accident_csv(r.malfunction.accidents));
      std::cout << format_metrics_csv(r);
    } else if (sweep_cmd->parsed()) {
      const auto cfg = ExperimentConfig::from(layered(sweep_opts));
      const auto ax = parse_sweep_axis(axis);
      std::vector<std::uint64_t> seed_list;
      for (double s : parse_values(seeds)) seed_list.push_back(static_cast<std::uint64_t>(s));
      const auto rows_out = sweep(cfg, ax, parse_values(values), seed_list);
      fs::create_directories(out);
      write_text_file((fs::path(out) / "sweep.csv").string(), format_sweep_csv(ax, rows_out));
      for (const auto& r : rows_out)
        for (const auto& e : r.errors) std::cerr << "value " << r.value << ": " << e << '\n';
      std::cout << format_sweep_csv(ax, rows_out);
    } else if (influence->parsed()) {
      const auto cfg = ExperimentConfig::from(layered(infl_opts));
      std::optional<std::set<NodeId>> m;
      if (!mask.empty()) m = parse_node_list(mask);
      const auto csv = format_influence_csv(influence_report(network_for(cfg), source, steps, alpha, m));
      write_text_file(out, csv);
      std::cout << csv;
    } else if (report->parsed()) {
      std::vector<std::vector<MetricsRow>> files;
      for (const auto& f : inputs) files.push_back(parse_metrics_csv(read_text_file(f), f));
      const auto csv = compare_metrics(files);
      if (out.empty()) std::cout << csv;
      else write_text_file(out, csv);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
