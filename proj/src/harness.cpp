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

#include "mallight/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "mallight/diffusion.hpp"
#include "mallight/error.hpp"
#include "mallight/kernels.hpp"

namespace mallight {
namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Independent streams from one run seed (splitmix64 finalizer).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kFlow = 1, kAgent = 2, kEval = 3, kTrain = 1000 };

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::string optional_cell(const std::optional<double>& v) {
  return v ? fixed(*v, 6) : std::string("NA");
}

}  // namespace

RoadNetwork generate_grid(int rows, int cols, double block) {
  if (rows < 2 || cols < 2)
    throw ArgumentError("grid needs at least 2 rows and 2 columns, got " +
                        std::to_string(rows) + "x" + std::to_string(cols));
  if (!(block > 0.0)) throw ArgumentError("grid block length must be positive");
  std::vector<Intersection> nodes;
  std::vector<RoadSegment> edges;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      nodes.push_back({r * cols + c, c * block, r * block});
  auto link = [&](int a, int b) {
    edges.push_back({a, b, block, 3});
    edges.push_back({b, a, block, 3});
  };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int id = r * cols + c;
      if (c + 1 < cols) link(id, id + 1);
      if (r + 1 < rows) link(id, id + cols);
    }
  return RoadNetwork(std::move(nodes), std::move(edges));
}

OdPolicy parse_od_policy(const std::string& name) {
  if (name == "all") return OdPolicy::All;
  if (name == "boundary") return OdPolicy::Boundary;
  throw ArgumentError("unknown od policy '" + name + "' (all|boundary)");
}

std::string od_policy_name(OdPolicy p) { return p == OdPolicy::All ? "all" : "boundary"; }

void FlowSpec::validate() const {
  if (!(rate > 0.0)) throw ArgumentError("flow rate must be positive");
  if (!(duration >= 0.0)) throw ArgumentError("flow duration must be >= 0");
}

Flow generate_flow(const RoadNetwork& net, const FlowSpec& spec) {
  spec.validate();
  std::vector<NodeId> pool;
  for (const auto& n : net.nodes())
    if (spec.od == OdPolicy::All || net.out_arcs(n.id).size() < 4) pool.push_back(n.id);
  if (pool.size() < 2) throw ArgumentError("flow needs at least two candidate endpoints");

  const auto count = static_cast<std::size_t>(std::floor(spec.rate * spec.duration / 300.0 + 1e-9));
  Flow flow;
  flow.reserve(count);
  if (count == 0) return flow;
  std::mt19937_64 rng(spec.seed);
  const std::uint64_t m = pool.size();
  const double spacing = spec.duration / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t pair = uniform_below(rng, m * (m - 1));
    const std::uint64_t o = pair / (m - 1);
    std::uint64_t d = pair % (m - 1);
    if (d >= o) ++d;
    // Three decimals so that the text format round-trips exactly.
    const double depart = std::round(static_cast<double>(i) * spacing * 1000.0) / 1000.0;
    flow.push_back({pool[o], pool[d], depart});
  }
  return flow;
}

Flow slice_flow(const Flow& flow, double begin, double end, bool shift) {
  Flow out;
  for (const auto& t : flow)
    if (t.depart >= begin && t.depart < end)
      out.push_back({t.origin, t.dest, shift ? t.depart - begin : t.depart});
  return out;
}

ControllerKind parse_controller(const std::string& name) {
  if (name == "fixedtime") return ControllerKind::FixedTime;
  if (name == "sotl") return ControllerKind::Sotl;
  if (name == "maxpressure") return ControllerKind::MaxPressure;
  if (name == "idqn") return ControllerKind::Idqn;
  if (name == "mallight") return ControllerKind::MalLight;
  throw ArgumentError("unknown controller '" + name +
                      "' (fixedtime|sotl|maxpressure|idqn|mallight)");
}

std::string controller_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::FixedTime: return "fixedtime";
    case ControllerKind::Sotl: return "sotl";
    case ControllerKind::MaxPressure: return "maxpressure";
    case ControllerKind::Idqn: return "idqn";
    case ControllerKind::MalLight: return "mallight";
  }
  return "?";
}

bool is_learning(ControllerKind k) {
  return k == ControllerKind::Idqn || k == ControllerKind::MalLight;
}

Ablation parse_ablation(const std::string& name) {
  if (name.empty() || name == "none") return Ablation::None;
  if (name == "S" || name == "s") return Ablation::S;
  if (name == "R" || name == "r") return Ablation::R;
  if (name == "M" || name == "m") return Ablation::M;
  throw ArgumentError("unknown ablation '" + name + "' (S|R|M|none)");
}

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::S: return "S";
    case Ablation::R: return "R";
    case Ablation::M: return "M";
  }
  return "?";
}

std::set<NodeId> parse_node_list(const std::string& text) {
  std::set<NodeId> out;
  const std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  for (const auto& part : split(t, ',')) {
    const std::string p = trim(part);
    if (p.empty()) throw ArgumentError("empty entry in intersection list '" + text + "'");
    std::size_t used = 0;
    int id = 0;
    try {
      id = std::stoi(p, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != p.size() || id < 0)
      throw ArgumentError("bad intersection id '" + p + "' in '" + text + "'");
    out.insert(id);
  }
  return out;
}

std::string format_node_list(const std::set<NodeId>& nodes) {
  if (nodes.empty()) return "none";
  std::string out;
  for (NodeId id : nodes) {
    if (!out.empty()) out += ',';
    out += std::to_string(id);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

const char* const kTopKeys[] = {
    "controller", "ablation",      "features",       "seed",        "network",
    "flow",       "grid.rows",     "grid.cols",      "grid.block",  "flow.rate",
    "flow.duration", "flow.od",    "flow.seed",      "split_s",     "malfunction",
    "idqn.shared", "fixed.split_s", "fixed.offset_s", "sotl.theta", "sotl.min_green",
    "rl.episodes", "rl.updates_per_episode", "rl.gamma", "rl.epsilon_start",
    "rl.epsilon_end", "rl.epsilon_decay_episodes", "rl.buffer_capacity",
    "rl.diffusion_steps", "rl.learning_rate", "rl.reward_scale"};

// Keys that define the environment rather than the controller.
bool is_scenario_key(const std::string& key) {
  if (key.rfind("sim.", 0) == 0) return true;
  for (const char* k : {"network", "flow", "grid.rows", "grid.cols", "grid.block",
                        "flow.rate", "flow.duration", "flow.od", "flow.seed", "split_s",
                        "malfunction"})
    if (key == k) return true;
  return false;
}

}  // namespace

bool is_known_key(const std::string& key) {
  if (key.rfind("sim.", 0) == 0) {
    static const auto sim_keys = SimConfig{}.to_config();
    return sim_keys.contains(key.substr(4));
  }
  for (const char* k : kTopKeys)
    if (key == k) return true;
  return false;
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.values())
    if (!is_known_key(key)) throw ArgumentError("unknown configuration key '" + key + "'");
  ExperimentConfig c;
  c.controller = parse_controller(kv.get_string("controller", controller_name(c.controller)));
  c.ablation = parse_ablation(kv.get_string("ablation", "none"));
  c.features = parse_feature_mode(kv.get_string("features", feature_mode_name(c.features)));
  c.seed = kv.get_u64("seed", c.seed);
  c.network_file = kv.get_string("network", "");
  c.grid_rows = static_cast<int>(kv.get_int("grid.rows", c.grid_rows));
  c.grid_cols = static_cast<int>(kv.get_int("grid.cols", c.grid_cols));
  c.grid_block = kv.get_double("grid.block", c.grid_block);
  c.flow_file = kv.get_string("flow", "");
  c.flow.rate = kv.get_double("flow.rate", c.flow.rate);
  c.flow.duration = kv.get_double("flow.duration", c.flow.duration);
  c.flow.od = parse_od_policy(kv.get_string("flow.od", od_policy_name(c.flow.od)));
  if (kv.contains("flow.seed")) {
    c.flow.seed = kv.get_u64("flow.seed", 0);
    c.flow_seed_from_run = false;
  }
  c.split = kv.get_double("split_s", c.split);
  if (kv.contains("malfunction")) c.malfunction = parse_node_list(*kv.get("malfunction"));
  c.sim = SimConfig::from(kv.subset("sim."));
  c.train.episodes = static_cast<int>(kv.get_int("rl.episodes", c.train.episodes));
  c.train.updates_per_episode =
      static_cast<int>(kv.get_int("rl.updates_per_episode", c.train.updates_per_episode));
  c.train.gamma = kv.get_double("rl.gamma", c.train.gamma);
  c.train.epsilon_start = kv.get_double("rl.epsilon_start", c.train.epsilon_start);
  c.train.epsilon_end = kv.get_double("rl.epsilon_end", c.train.epsilon_end);
  c.train.epsilon_decay_episodes = static_cast<int>(
      kv.get_int("rl.epsilon_decay_episodes", c.train.epsilon_decay_episodes));
  c.train.buffer_capacity = static_cast<std::size_t>(
      kv.get_int("rl.buffer_capacity", static_cast<std::int64_t>(c.train.buffer_capacity)));
  c.diffusion_steps = static_cast<int>(kv.get_int("rl.diffusion_steps", c.diffusion_steps));
  c.learning_rate = kv.get_double("rl.learning_rate", c.learning_rate);
  c.reward_scale = kv.get_double("rl.reward_scale", c.reward_scale);
  c.idqn_shared = kv.get_bool("idqn.shared", c.idqn_shared);
  c.fixed_split = kv.get_double("fixed.split_s", c.fixed_split);
  c.fixed_offset = kv.get_double("fixed.offset_s", c.fixed_offset);
  c.sotl.theta = kv.get_double("sotl.theta", c.sotl.theta);
  c.sotl.min_green = kv.get_double("sotl.min_green", c.sotl.min_green);
  c.validate();
  return c;
}

KeyValueConfig ExperimentConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("controller", controller_name(controller));
  kv.set("ablation", ablation_name(ablation));
  kv.set("features", feature_mode_name(features));
  kv.set("seed", std::to_string(seed));
  if (!network_file.empty()) kv.set("network", network_file);
  kv.set("grid.rows", std::to_string(grid_rows));
  kv.set("grid.cols", std::to_string(grid_cols));
  kv.set("grid.block", num(grid_block));
  if (!flow_file.empty()) kv.set("flow", flow_file);
  kv.set("flow.rate", num(flow.rate));
  kv.set("flow.duration", num(flow.duration));
  kv.set("flow.od", od_policy_name(flow.od));
  if (!flow_seed_from_run) kv.set("flow.seed", std::to_string(flow.seed));
  kv.set("split_s", num(split));
  kv.set("malfunction", format_node_list(malfunction));
  const KeyValueConfig sim_kv = sim.to_config();
  for (const auto& [k, v] : sim_kv.values()) kv.set("sim." + k, v);
  kv.set("rl.episodes", std::to_string(train.episodes));
  kv.set("rl.updates_per_episode", std::to_string(train.updates_per_episode));
  kv.set("rl.gamma", num(train.gamma));
  kv.set("rl.epsilon_start", num(train.epsilon_start));
  kv.set("rl.epsilon_end", num(train.epsilon_end));
  kv.set("rl.epsilon_decay_episodes", std::to_string(train.epsilon_decay_episodes));
  kv.set("rl.buffer_capacity", std::to_string(train.buffer_capacity));
  kv.set("rl.diffusion_steps", std::to_string(diffusion_steps));
  kv.set("rl.learning_rate", num(learning_rate));
  kv.set("rl.reward_scale", num(reward_scale));
  kv.set("idqn.shared", idqn_shared ? "true" : "false");
  kv.set("fixed.split_s", num(fixed_split));
  kv.set("fixed.offset_s", num(fixed_offset));
  kv.set("sotl.theta", num(sotl.theta));
  kv.set("sotl.min_green", num(sotl.min_green));
  return kv;
}

std::string ExperimentConfig::config_digest() const { return to_config().digest(); }

std::string ExperimentConfig::scenario_digest() const {
  KeyValueConfig kv;
  const KeyValueConfig all = to_config();
  for (const auto& [k, v] : all.values())
    if (is_scenario_key(k)) kv.set(k, v);
  // The generated flow depends on the run seed unless it is pinned.
  if (flow_file.empty() && flow_seed_from_run) kv.set("flow.seed", "run:" + std::to_string(seed));
  return kv.digest();
}

void ExperimentConfig::validate() const {
  sim.validate();
  train.validate();
  flow.validate();
  if (!(split > 0.0)) throw ArgumentError("split_s must be positive");
  if (diffusion_steps < 1) throw ArgumentError("rl.diffusion_steps must be >= 1");
  if (!(learning_rate > 0.0)) throw ArgumentError("rl.learning_rate must be positive");
  if (!(reward_scale > 0.0)) throw ArgumentError("rl.reward_scale must be positive");
  default_fixed_plan(fixed_split, fixed_offset).validate(sim.decision_interval);
  sotl.validate(sim.decision_interval);
  if (ablation != Ablation::None && controller != ControllerKind::MalLight)
    throw ArgumentError("ablations apply to the mallight controller only");
}

AgentConfig agent_config(const ExperimentConfig& cfg) {
  AgentConfig a = cfg.controller == ControllerKind::Idqn ? AgentConfig::idqn(cfg.idqn_shared)
                                                         : AgentConfig::mallight();
  a.features = cfg.features;
  a.diffusion_steps = cfg.diffusion_steps;
  a.learning_rate = cfg.learning_rate;
  a.reward_scale = cfg.reward_scale;
  a.seed = stream_seed(cfg.seed, kAgent);
  switch (cfg.ablation) {
    case Ablation::None: break;
    case Ablation::S: a.trainable_filters = false; break;
    case Ablation::R: a.aggregate_reward = false; break;
    case Ablation::M: a.mask_everything = true; break;
  }
  return a;
}

std::optional<double> reduction_ratio(double no_malfunction, double malfunction) {
  if (!(no_malfunction > 0.0)) return std::nullopt;
  return 100.0 * (no_malfunction - malfunction) / no_malfunction;
}

// ---------------------------------------------------------------------------

ScenarioResult evaluate(const ExperimentConfig& cfg, const RoadNetwork& net, const Flow& flow,
                        const std::set<NodeId>& malfunction, const std::set<NodeId>& focus,
                        Agent* agent) {
  SimConfig sc = cfg.sim;
  sc.seed = stream_seed(cfg.seed, kEval);
  Simulation sim(net, flow, sc);
  sim.inject_malfunction(malfunction);
  const std::size_t n = net.size();
  const double dt = sc.decision_interval;
  const int steps = static_cast<int>(std::lround(cfg.split / dt));

  const FixedTimePlan plan = default_fixed_plan(cfg.fixed_split, cfg.fixed_offset);
  std::vector<double> green_elapsed(n, 0.0);
  std::vector<Phase> actions(n);
  if (agent) agent->set_malfunction(malfunction);

  ScenarioResult result;
  auto obs = sim.observe();
  for (int s = 0; s < steps; ++s) {
    if (agent) {
      const auto agg = agent->aggregate(build_state_matrix(sim, obs, agent->config().features));
      for (std::size_t i = 0; i < n; ++i)
        actions[i] = agent->act(static_cast<int>(i), agg.state.row(i), 0.0,
                                sim.is_malfunctioning(static_cast<NodeId>(i)));
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (sim.is_malfunctioning(static_cast<NodeId>(i))) {
          actions[i] = Phase::off();
          continue;
        }
        switch (cfg.controller) {
          case ControllerKind::FixedTime:
            actions[i] = fixed_time_action(plan, sim.clock());
            break;
          case ControllerKind::Sotl:
            actions[i] = sotl_action(obs[i], cfg.sotl, green_elapsed[i]);
            break;
          case ControllerKind::MaxPressure: {
            const auto down = downstream_per_movement(obs[i]);
            actions[i] = max_pressure_action(obs[i], down);
            break;
          }
          default:
            throw ArgumentError("controller " + controller_name(cfg.controller) +
                                " needs a trained agent");
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      green_elapsed[i] = actions[i] == obs[i].phase ? green_elapsed[i] + dt : dt;
    auto step = sim.step(actions);
    obs = std::move(step.observations);
    result.conserved = result.conserved && sim.conservation_holds();
  }
  result.metrics = sim.metrics(0.0, sim.clock(), focus);
  // Accidents anywhere in the network, not only at the focus set.
  result.metrics.accidents = static_cast<long>(sim.accident_log().size());
  result.accidents = sim.accident_log();
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunPaths& paths) {
  cfg.validate();
  const RoadNetwork net = cfg.network_file.empty()
                              ? generate_grid(cfg.grid_rows, cfg.grid_cols, cfg.grid_block)
                              : load_network(cfg.network_file);
  for (NodeId id : cfg.malfunction)
    if (!net.contains(id))
      throw ArgumentError("malfunction set names unknown intersection " + std::to_string(id));
  Flow flow;
  if (cfg.flow_file.empty()) {
    FlowSpec spec = cfg.flow;
    if (cfg.flow_seed_from_run) spec.seed = stream_seed(cfg.seed, kFlow);
    flow = generate_flow(net, spec);
  } else {
    flow = load_flow(cfg.flow_file);
  }
  const Flow train_flow = slice_flow(flow, 0.0, cfg.split, false);
  const Flow test_flow = slice_flow(flow, cfg.split, 2.0 * cfg.split, true);

  ExperimentResult r;
  r.seed = cfg.seed;
  r.config_digest = cfg.config_digest();
  r.scenario_digest = cfg.scenario_digest();
  r.controller = controller_name(cfg.controller);
  if (cfg.ablation != Ablation::None) r.controller += "-" + ablation_name(cfg.ablation);

  std::optional<Agent> agent;
  if (is_learning(cfg.controller)) {
    const auto transition = transition_matrix(build_edge_weights(net, default_sigma(net)));
    if (paths.resume && !paths.checkpoint.empty() && std::filesystem::exists(paths.checkpoint)) {
      agent.emplace(Agent::load_file(paths.checkpoint, transition));
      const AgentConfig want = agent_config(cfg);
      const AgentConfig& got = agent->config();
      if (got.seed != want.seed || got.diffusion_steps != want.diffusion_steps ||
          got.features != want.features || got.aggregate_state != want.aggregate_state ||
          got.aggregate_reward != want.aggregate_reward ||
          got.trainable_filters != want.trainable_filters ||
          got.mask_everything != want.mask_everything ||
          got.shared_parameters != want.shared_parameters ||
          got.learning_rate != want.learning_rate || got.reward_scale != want.reward_scale)
        throw ValidationError("checkpoint '" + paths.checkpoint +
                              "' was written by a different configuration");
    } else {
      agent.emplace(agent_config(cfg), transition);
    }
    TrainConfig tc = cfg.train;
    tc.episode_seconds = cfg.split;
    EnvFactory make_env = [&]() {
      SimConfig sc = cfg.sim;
      sc.seed = stream_seed(cfg.seed, kTrain + static_cast<std::uint64_t>(agent->episodes_done()));
      Simulation sim(net, train_flow, sc);
      sim.inject_malfunction(cfg.malfunction);
      return sim;
    };
    r.curve = train(make_env, *agent, tc, paths.checkpoint, paths.curve).curve;
  }

  const std::set<NodeId> focus = [&] {
    if (!cfg.malfunction.empty()) return cfg.malfunction;
    std::set<NodeId> all;
    for (const auto& node : net.nodes()) all.insert(node.id);
    return all;
  }();
  Agent* a = agent ? &*agent : nullptr;
  r.no_malfunction = evaluate(cfg, net, test_flow, {}, focus, a);
  r.malfunction = evaluate(cfg, net, test_flow, cfg.malfunction, focus, a);
  r.intersection_rr = reduction_ratio(r.no_malfunction.metrics.intersection_throughput,
                                      r.malfunction.metrics.intersection_throughput);
  r.network_rr = reduction_ratio(r.no_malfunction.metrics.network_throughput,
                                 r.malfunction.metrics.network_throughput);
  return r;
}

// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMetricsHeader =
    "seed,config_digest,scenario_digest,controller,scenario,network_throughput,"
    "intersection_throughput,accidents,intersection_rr,network_rr";
}

std::string format_metrics_csv(const ExperimentResult& r) {
  std::string out = std::string(kMetricsHeader) + "\n";
  auto row = [&](const char* scenario, const ScenarioResult& s, bool with_rr) {
    out += std::to_string(r.seed) + "," + r.config_digest + "," + r.scenario_digest + "," +
           r.controller + "," + scenario + "," + fixed(s.metrics.network_throughput, 3) + "," +
           fixed(s.metrics.intersection_throughput, 3) + "," +
           std::to_string(s.metrics.accidents) + "," +
           (with_rr ? optional_cell(r.intersection_rr) : "NA") + "," +
           (with_rr ? optional_cell(r.network_rr) : "NA") + "\n";
  };
  row("no_malfunction", r.no_malfunction, false);
  row("malfunction", r.malfunction, true);
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<MetricsRow> rows;
  auto number = [&](const std::string& cell) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || *end != '\0') throw ParseError(source, lineno, "bad number '" + cell + "'");
    return v;
  };
  auto maybe = [&](const std::string& cell) -> std::optional<double> {
    if (cell == "NA") return std::nullopt;
    return number(cell);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (lineno == 1) {
      if (line != kMetricsHeader) throw ParseError(source, lineno, "unexpected metrics header");
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 10)
      throw ParseError(source, lineno, "expected 10 fields, got " + std::to_string(cells.size()));
    MetricsRow r;
    r.seed = static_cast<std::uint64_t>(number(cells[0]));
    r.config_digest = cells[1];
    r.scenario_digest = cells[2];
    r.controller = cells[3];
    r.scenario = cells[4];
    r.metrics.network_throughput = number(cells[5]);
    r.metrics.intersection_throughput = number(cells[6]);
    r.metrics.accidents = static_cast<long>(number(cells[7]));
    r.intersection_rr = maybe(cells[8]);
    r.network_rr = maybe(cells[9]);
    rows.push_back(std::move(r));
  }
  if (lineno == 0) throw ParseError(source, 1, "empty metrics file");
  return rows;
}

std::string compare_metrics(const std::vector<std::vector<MetricsRow>>& files) {
  // Files from different seeds carry different scenario digests when the
  // flow follows the run seed; compare digests among runs of one seed.
  std::map<std::uint64_t, std::string> digest_by_seed;
  std::map<std::string, std::vector<double>> irr, nrr;
  std::vector<std::string> order;
  for (const auto& file : files)
    for (const auto& row : file) {
      auto [it, fresh] = digest_by_seed.emplace(row.seed, row.scenario_digest);
      if (!fresh && it->second != row.scenario_digest)
        throw ValidationError("metrics for seed " + std::to_string(row.seed) +
                              " come from different scenarios (digest " + it->second +
                              " vs " + row.scenario_digest + ")");
      if (row.scenario != "malfunction") continue;
      if (!irr.count(row.controller)) order.push_back(row.controller);
      if (row.intersection_rr) irr[row.controller].push_back(*row.intersection_rr);
      else irr[row.controller];
      if (row.network_rr) nrr[row.controller].push_back(*row.network_rr);
    }
  std::string out = "controller,runs,intersection_rr_mean,intersection_rr_std,network_rr_mean,network_rr_std\n";
  for (const auto& c : order) {
    out += c + "," + std::to_string(irr[c].size()) + "," + fixed(mean_of(irr[c]), 4) + "," +
           fixed(stddev_of(irr[c]), 4) + "," + fixed(mean_of(nrr[c]), 4) + "," +
           fixed(stddev_of(nrr[c]), 4) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "K" || name == "k" || name == "diffusion_steps") return SweepAxis::DiffusionSteps;
  if (name == "malfunction-count" || name == "malfunction_count")
    return SweepAxis::MalfunctionCount;
  throw ArgumentError("unknown sweep axis '" + name + "' (K|malfunction-count)");
}

std::vector<NodeId> central_order(const RoadNetwork& net) {
  double cx = 0.0, cy = 0.0;
  for (const auto& n : net.nodes()) {
    cx += n.x;
    cy += n.y;
  }
  cx /= static_cast<double>(net.size());
  cy /= static_cast<double>(net.size());
  std::vector<NodeId> ids(net.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto d2 = [&](NodeId id) {
    const auto& n = net.node(id);
    return (n.x - cx) * (n.x - cx) + (n.y - cy) * (n.y - cy);
  };
  std::stable_sort(ids.begin(), ids.end(), [&](NodeId a, NodeId b) {
    return d2(a) < d2(b) - 1e-9;
  });
  return ids;
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis,
                            const std::vector<double>& values,
                            const std::vector<std::uint64_t>& seeds) {
  const RoadNetwork net = base.network_file.empty()
                              ? generate_grid(base.grid_rows, base.grid_cols, base.grid_block)
                              : load_network(base.network_file);
  const auto order = central_order(net);
  for (double v : values) {
    if (v != std::floor(v)) throw ArgumentError("sweep values must be integers");
    if (axis == SweepAxis::DiffusionSteps && v < 1) throw ArgumentError("K must be >= 1");
    if (axis == SweepAxis::MalfunctionCount && (v < 0 || v > static_cast<double>(net.size())))
      throw ArgumentError("malfunction count must lie in [0, N]");
  }

  struct Cell {
    std::optional<double> irr, nrr;
    std::string error;
  };
  const long total = static_cast<long>(values.size() * seeds.size());
  std::vector<Cell> cells(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic, 1)
  for (long job = 0; job < total; ++job) {
    const std::size_t vi = static_cast<std::size_t>(job) / seeds.size();
    const std::size_t si = static_cast<std::size_t>(job) % seeds.size();
    ExperimentConfig cfg = base;
    cfg.seed = seeds[si];
    const int v = static_cast<int>(values[vi]);
    if (axis == SweepAxis::DiffusionSteps) {
      cfg.diffusion_steps = v;
    } else {
      cfg.malfunction = std::set<NodeId>(order.begin(), order.begin() + v);
    }
    try {
      const auto r = run_experiment(cfg);
      cells[job].irr = r.intersection_rr;
      cells[job].nrr = r.network_rr;
    } catch (const std::exception& e) {
      cells[job].error = "seed " + std::to_string(cfg.seed) + ": " + e.what();
    }
  }

  std::vector<SweepRow> rows;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    SweepRow row;
    row.value = values[vi];
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& c = cells[vi * seeds.size() + si];
      if (!c.error.empty()) row.errors.push_back(c.error);
      if (c.irr) row.intersection_rr.push_back(*c.irr);
      if (c.nrr) row.network_rr.push_back(*c.nrr);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_sweep_csv(SweepAxis axis, const std::vector<SweepRow>& rows) {
  std::string out = axis == SweepAxis::DiffusionSteps ? "K" : "malfunction_count";
  out += ",runs,intersection_rr_mean,intersection_rr_std,network_rr_mean,network_rr_std,errors\n";
  for (const auto& r : rows)
    out += std::to_string(static_cast<long>(r.value)) + "," +
           std::to_string(r.intersection_rr.size()) + "," + fixed(mean_of(r.intersection_rr), 4) +
           "," + fixed(stddev_of(r.intersection_rr), 4) + "," + fixed(mean_of(r.network_rr), 4) +
           "," + fixed(stddev_of(r.network_rr), 4) + "," + std::to_string(r.errors.size()) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::vector<InfluenceRow> influence_report(const RoadNetwork& net, NodeId source, int steps,
                                           double alpha,
                                           const std::optional<std::set<NodeId>>& mask) {
  if (!net.contains(source))
    throw ArgumentError("influence source " + std::to_string(source) + " is not in the network");
  const auto t = transition_matrix(build_edge_weights(net, default_sigma(net)));
  Matrix p = stationary_distribution(t, alpha, steps);
  if (mask) {
    const auto m = MalfunctionMask::from_set(net.size(), *mask);
    p = kernels::mask_columns(p, m.values);
  }
  const auto hops = hop_distances(net, source);
  const int max_hop = *std::max_element(hops.begin(), hops.end());
  std::vector<InfluenceRow> rows;
  for (int h = 1; h <= max_hop; ++h) {
    InfluenceRow row;
    row.hop = h;
    double sum = 0.0;
    for (std::size_t j = 0; j < net.size(); ++j)
      if (hops[j] == h) {
        sum += p(static_cast<std::size_t>(source), j);
        ++row.nodes;
      }
    row.mean_weight = row.nodes ? sum / row.nodes : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string format_influence_csv(const std::vector<InfluenceRow>& rows) {
  std::string out = "hop,nodes,mean_weight\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.12e\n", r.hop, r.nodes, r.mean_weight);
    out += buf;
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArgumentError("cannot write '" + tmp + "'");
    out << text;
    if (!out.flush()) throw ArgumentError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mallight
