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

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mallight/config.hpp"
#include "mallight/controllers.hpp"
#include "mallight/network.hpp"
#include "mallight/rl.hpp"
#include "mallight/simulator.hpp"

namespace mallight {

// Square lattice, ids row-major (id = r * cols + c), every block `block` m.
RoadNetwork generate_grid(int rows, int cols, double block);

enum class OdPolicy { All, Boundary };
OdPolicy parse_od_policy(const std::string& name);
std::string od_policy_name(OdPolicy p);

struct FlowSpec {
  double rate = 1200.0;     // vehicles per 300 s, network-wide
  double duration = 7200.0; // s
  OdPolicy od = OdPolicy::All;
  std::uint64_t seed = 0;

  void validate() const;
};

// floor(rate * duration / 300) trips at evenly spaced departure times with
// (origin, destination) drawn uniformly over ordered pairs o != d.
Flow generate_flow(const RoadNetwork& net, const FlowSpec& spec);

// Trips departing in [begin, end), optionally re-timed so `begin` becomes 0.
Flow slice_flow(const Flow& flow, double begin, double end, bool shift);

enum class ControllerKind { FixedTime, Sotl, MaxPressure, Idqn, MalLight };
ControllerKind parse_controller(const std::string& name);
std::string controller_name(ControllerKind k);
bool is_learning(ControllerKind k);

// MalLight variants: fixed filters, no reward aggregation, mask of ones.
enum class Ablation { None, S, R, M };
Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation a);

std::set<NodeId> parse_node_list(const std::string& text);
std::string format_node_list(const std::set<NodeId>& nodes);

/// Every knob of one run. Built from a flat key=value file; keys absent from
/// the file take the defaults below.
struct ExperimentConfig {
  ControllerKind controller = ControllerKind::MalLight;
  Ablation ablation = Ablation::None;
  FeatureMode features = FeatureMode::Full;
  std::uint64_t seed = 0;

  std::string network_file;  // empty: generated grid
  int grid_rows = 4;
  int grid_cols = 4;
  double grid_block = 300.0;
  std::string flow_file;     // empty: generated flow
  FlowSpec flow;             // flow.seed is replaced by the run seed
  bool flow_seed_from_run = true;
  double split = 3600.0;     // train on [0, split), test on [split, 2 split)

  std::set<NodeId> malfunction{5};
  SimConfig sim;
  TrainConfig train;
  int diffusion_steps = 10;
  double learning_rate = 0.001;
  double reward_scale = 0.05;
  bool idqn_shared = true;

  double fixed_split = 30.0;
  double fixed_offset = 0.0;
  SotlParams sotl;

  static ExperimentConfig from(const KeyValueConfig& kv);
  KeyValueConfig to_config() const;
  // Digest of the complete configuration (including seed and controller).
  std::string config_digest() const;
  // Digest of the environment only: network, flow, signals, malfunction set and
  // evaluation windows. Runs are only comparable when these agree.
  std::string scenario_digest() const;
  void validate() const;
};

// Keys ExperimentConfig understands; anything else in a file is an error.
bool is_known_key(const std::string& key);

struct ScenarioResult {
  ExperimentMetrics metrics;
  std::vector<AccidentRecord> accidents;
  bool conserved = true;
};

struct ExperimentResult {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string scenario_digest;
  std::string controller;  // name plus ablation suffix
  ScenarioResult no_malfunction;
  ScenarioResult malfunction;
  std::optional<double> intersection_rr;
  std::optional<double> network_rr;
  std::vector<EpisodeStats> curve;
};

// 100 (a - b) / a, absent when a <= 0.
std::optional<double> reduction_ratio(double no_malfunction, double malfunction);

struct RunPaths {
  std::string checkpoint;  // optional agent checkpoint
  std::string curve;       // optional learning-curve CSV
  bool resume = false;     // continue from `checkpoint` when it exists
};

/// Train (learning controllers only) on the first split with the malfunction
/// set present, then evaluate greedily on the second split twice: without
/// and with the malfunction set. Intersection metrics use the malfunction set
/// as focus, or every intersection when the set is empty.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunPaths& paths = {});

// Greedy evaluation of a trained agent on an arbitrary simulation.
ScenarioResult evaluate(const ExperimentConfig& cfg, const RoadNetwork& net, const Flow& flow,
                        const std::set<NodeId>& malfunction, const std::set<NodeId>& focus,
                        Agent* agent);

AgentConfig agent_config(const ExperimentConfig& cfg);

std::string format_metrics_csv(const ExperimentResult& r);
struct MetricsRow {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string scenario_digest;
  std::string controller;
  std::string scenario;
  ExperimentMetrics metrics;
  std::optional<double> intersection_rr;
  std::optional<double> network_rr;
};
std::vector<MetricsRow> parse_metrics_csv(const std::string& text,
                                          const std::string& source = "<string>");
// Per-controller mean/std of reduction ratios; throws if scenario digests differ.
std::string compare_metrics(const std::vector<std::vector<MetricsRow>>& files);

enum class SweepAxis { DiffusionSteps, MalfunctionCount };
SweepAxis parse_sweep_axis(const std::string& name);

// Intersections ordered by distance to the grid centroid, ties by id.
std::vector<NodeId> central_order(const RoadNetwork& net);

struct SweepRow {
  double value = 0.0;
  std::vector<double> intersection_rr;  // defined seeds only
  std::vector<double> network_rr;
  std::vector<std::string> errors;
};

/// One run per (value, seed); failures are recorded and the sweep goes on.
/// Runs are independent and execute in parallel when OpenMP is available.
std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds);
std::string format_sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows);

struct InfluenceRow {
  int hop = 0;
  int nodes = 0;
  double mean_weight = 0.0;
};
// Mean diffusion weight from `source` to the nodes at each hop distance,
// optionally with the columns of non-masked nodes zeroed.
std::vector<InfluenceRow> influence_report(const RoadNetwork& net, NodeId source, int steps,
                                           double alpha,
                                           const std::optional<std::set<NodeId>>& mask = {});
std::string format_influence_csv(const std::vector<InfluenceRow>& rows);

// Writes through a temporary file and a rename.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace mallight
