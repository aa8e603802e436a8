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

#include "mallight/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mallight/error.hpp"

namespace mallight {
namespace {

constexpr int kNoEdge = -1;

constexpr std::array<std::array<int, 2>, kPhaseCount> kPhaseTable{{
    {movement_index(Approach::N, Turn::Through), movement_index(Approach::S, Turn::Through)},
    {movement_index(Approach::E, Turn::Left), movement_index(Approach::W, Turn::Left)},
    {movement_index(Approach::E, Turn::Through), movement_index(Approach::W, Turn::Through)},
    {movement_index(Approach::N, Turn::Left), movement_index(Approach::S, Turn::Left)},
    {movement_index(Approach::N, Turn::Through), movement_index(Approach::N, Turn::Left)},
    {movement_index(Approach::S, Turn::Through), movement_index(Approach::S, Turn::Left)},
    {movement_index(Approach::E, Turn::Through), movement_index(Approach::E, Turn::Left)},
    {movement_index(Approach::W, Turn::Through), movement_index(Approach::W, Turn::Left)},
}};

// Turn made by a vehicle arriving on side `from` and leaving toward `to`.
Turn turn_between(Approach from, Approach to) {
  const int heading = (static_cast<int>(from) + 2) % 4;
  const int exit = static_cast<int>(to);
  if (exit == heading) return Turn::Through;
  if (exit == (heading + 3) % 4) return Turn::Left;
  if (exit == (heading + 1) % 4) return Turn::Right;
  throw ArgumentError("route makes a U-turn");
}

long ceil_ticks(double seconds, double tick) {
  return static_cast<long>(std::ceil(seconds / tick - 1e-9));
}

}  // namespace

std::string movement_name(int m) {
  static constexpr char kSide[] = {'N', 'E', 'S', 'W'};
  static constexpr char kTurn[] = {'L', 'T', 'R'};
  return {kSide[m / kTurns], kTurn[m % kTurns]};
}

const std::array<std::array<int, 2>, kPhaseCount>& phase_movements() {
  return kPhaseTable;
}

bool phase_serves(Phase p, int movement) {
  if (movement_turn(movement) == Turn::Right) return !p.is_off();
  if (p.is_off()) return false;
  const auto& pair = kPhaseTable[p.index()];
  return pair[0] == movement || pair[1] == movement;
}

bool movements_conflict(int a, int b) {
  if (a == b) return false;
  if (movement_turn(a) == Turn::Right || movement_turn(b) == Turn::Right)
    return false;
  for (const auto& pair : kPhaseTable)
    if ((pair[0] == a && pair[1] == b) || (pair[0] == b && pair[1] == a))
      return false;
  return true;
}

double local_reward(const IntersectionObservation& obs) {
  long in = 0;
  long out = 0;
  for (int v : obs.incoming) in += v;
  for (int v : obs.outgoing) out += v;
  return -static_cast<double>(std::labs(in - out));
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw ArgumentError("SimConfig: " + what);
  };
  if (!(tick > 0)) fail("tick must be positive");
  if (!(decision_interval >= tick)) fail("decision_interval must be >= tick");
  const double ratio = decision_interval / tick;
  if (std::abs(ratio - std::round(ratio)) > 1e-9)
    fail("tick must divide decision_interval");
  if (!(max_speed > 0)) fail("max_speed must be positive");
  if (!(vehicle_length > 0) || !(min_gap >= 0)) fail("bad vehicle geometry");
  if (!(accel > 0) || !(decel > 0)) fail("accel/decel must be positive");
  if (!(discharge_rate > 0 && discharge_rate <= 1.0))
    fail("discharge_rate must be in (0, 1]");
  if (!(foe_ignore_prob >= 0 && foe_ignore_prob <= 1))
    fail("foe_ignore_prob must be in [0, 1]");
  if (!(collision_block >= 0)) fail("collision_block must be >= 0");
  if (!(malfunction_capacity_factor > 0 && malfunction_capacity_factor <= 1))
    fail("malfunction_capacity_factor must be in (0, 1]");
}

SimConfig SimConfig::from(const KeyValueConfig& kv) {
  SimConfig c;
  c.tick = kv.get_double("tick", c.tick);
  c.decision_interval = kv.get_double("decision_interval", c.decision_interval);
  c.max_speed = kv.get_double("max_speed", c.max_speed);
  c.vehicle_length = kv.get_double("vehicle_length", c.vehicle_length);
  c.min_gap = kv.get_double("min_gap", c.min_gap);
  c.accel = kv.get_double("accel", c.accel);
  c.decel = kv.get_double("decel", c.decel);
  c.discharge_rate = kv.get_double("discharge_rate", c.discharge_rate);
  c.foe_ignore_prob = kv.get_double("foe_ignore_prob", c.foe_ignore_prob);
  c.collision_block = kv.get_double("collision_block", c.collision_block);
  c.malfunction_capacity_factor =
      kv.get_double("malfunction_capacity_factor", c.malfunction_capacity_factor);
  c.seed = kv.get_u64("seed", c.seed);
  c.validate();
  return c;
}

KeyValueConfig SimConfig::to_config() const {
  KeyValueConfig kv;
  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  kv.set("tick", num(tick));
  kv.set("decision_interval", num(decision_interval));
  kv.set("max_speed", num(max_speed));
  kv.set("vehicle_length", num(vehicle_length));
  kv.set("min_gap", num(min_gap));
  kv.set("accel", num(accel));
  kv.set("decel", num(decel));
  kv.set("discharge_rate", num(discharge_rate));
  kv.set("foe_ignore_prob", num(foe_ignore_prob));
  kv.set("collision_block", num(collision_block));
  kv.set("malfunction_capacity_factor", num(malfunction_capacity_factor));
  kv.set("seed", std::to_string(seed));
  return kv;
}

// ---------------------------------------------------------------------------
// Flow and accident files

Flow parse_flow(const std::string& text, const std::string& source) {
  Flow flow;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    std::istringstream fields(raw);
    fields.imbue(std::locale::classic());
    std::string kind;
    if (!(fields >> kind)) continue;
    Trip t;
    if (kind != "veh" || !(fields >> t.origin >> t.dest >> t.depart))
      throw ParseError(source, line, "expected 'veh <origin> <dest> <depart_s>'");
    std::string extra;
    if (fields >> extra)
      throw ParseError(source, line, "trailing token '" + extra + "'");
    if (!(t.depart >= 0) || !std::isfinite(t.depart))
      throw ParseError(source, line, "departure time must be >= 0");
    flow.push_back(t);
  }
  return flow;
}

Flow load_flow(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open flow file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_flow(buf.str(), path);
}

std::string format_flow(const Flow& flow) {
  std::string out;
  out.reserve(flow.size() * 24);
  char buf[96];
  for (const auto& t : flow) {
    std::snprintf(buf, sizeof buf, "veh %d %d %.3f\n", t.origin, t.dest, t.depart);
    out += buf;
  }
  return out;
}

void save_flow(const Flow& flow, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write flow file '" + path + "'");
  out << format_flow(flow);
  if (!out) throw ArgumentError("write failed for '" + path + "'");
}

std::string format_accident_csv(const std::vector<AccidentRecord>& log) {
  std::string out = "time_s,intersection,lane_a,lane_b\n";
  char buf[96];
  for (const auto& a : log) {
    std::snprintf(buf, sizeof buf, "%.1f,%d,%s,%s\n", a.time, a.intersection,
                  movement_name(a.lane_a).c_str(), movement_name(a.lane_b).c_str());
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lane FIFOs keep a head index; storage is compacted once the dead prefix
// dominates.

void Simulation::Lane::pop_queue() {
  if (++queue_head > 256 && queue_head * 2 > queue.size()) {
    queue.erase(queue.begin(), queue.begin() + static_cast<long>(queue_head));
    queue_head = 0;
  }
}

void Simulation::Lane::pop_traveling() {
  if (++traveling_head > 256 && traveling_head * 2 > traveling.size()) {
    traveling.erase(traveling.begin(),
                    traveling.begin() + static_cast<long>(traveling_head));
    traveling_head = 0;
  }
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(const RoadNetwork& net, Flow flow, SimConfig config)
    : net_(&net), config_(config), rng_(config.seed) {
  config_.validate();
  const std::size_t n = net.size();
  ticks_per_decision_ =
      static_cast<int>(std::lround(config_.decision_interval / config_.tick));
  block_ticks_ = ceil_ticks(config_.collision_block, config_.tick);

  const double speed = config_.max_speed / 3.6;
  const double slot = config_.vehicle_length + config_.min_gap;
  for (const auto& e : net.edges()) {
    travel_ticks_.push_back(std::max(1L, ceil_ticks(e.length / speed, config_.tick)));
    capacity_.push_back(std::max(1, static_cast<int>(std::floor(e.length / slot + 1e-9))));
  }

  links_.assign(n, {});
  for (std::size_t e = 0; e < net.edges().size(); ++e) {
    const auto& s = net.edges()[e];
    const Approach out_side = side_of(s.from, s.to);
    const Approach in_side = side_of(s.to, s.from);
    auto& out = links_[s.from].out_edge[static_cast<int>(out_side)];
    auto& in = links_[s.to].in_edge[static_cast<int>(in_side)];
    if (out != kNoEdge || in != kNoEdge)
      throw ArgumentError("simulation needs grid-like topology: node " +
                          std::to_string(s.from) + " has two neighbors on one side");
    out = static_cast<int>(e);
    in = static_cast<int>(e);
  }
  lanes_.assign(net.edges().size() * kTurns, {});

  // Trips: validate, sort by departure (stable), and share routes per OD pair.
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const auto& t = flow[i];
    if (!net.contains(t.origin) || !net.contains(t.dest))
      throw ArgumentError("flow record " + std::to_string(i) +
                          " references an unknown node");
    if (t.origin == t.dest)
      throw ArgumentError("flow record " + std::to_string(i) +
                          " has origin == destination (" +
                          std::to_string(t.origin) + ")");
  }
  std::stable_sort(flow.begin(), flow.end(),
                   [](const Trip& a, const Trip& b) { return a.depart < b.depart; });
  std::map<std::pair<NodeId, NodeId>, std::uint32_t> route_ids;
  vehicles_.reserve(flow.size());
  depart_.reserve(flow.size());
  for (const auto& t : flow) {
    auto [it, fresh] = route_ids.try_emplace({t.origin, t.dest},
                                             static_cast<std::uint32_t>(routes_.size()));
    if (fresh) routes_.push_back(shortest_path(net, t.origin, t.dest));
    Vehicle v;
    v.route = it->second;
    vehicles_.push_back(v);
    depart_.push_back(t.depart);
  }
  // Routes must be expressible as turns (no U-turns on simple paths).
  for (const auto& r : routes_)
    for (std::size_t h = 1; h + 1 < r.size(); ++h)
      (void)turn_between(side_of(r[h], r[h - 1]), side_of(r[h], r[h + 1]));

  pending_.assign(n, {});
  pending_head_.assign(n, 0);
  phases_.assign(n, Phase(0));
  blackout_.assign(n, false);
  round_robin_.assign(n, 0);
  crossings_.assign(n, {});
}

Approach Simulation::side_of(NodeId at, NodeId other) const {
  const auto& a = net_->node(at);
  const auto& b = net_->node(other);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  if (std::abs(dx) >= std::abs(dy)) return dx > 0 ? Approach::E : Approach::W;
  return dy > 0 ? Approach::N : Approach::S;
}

int Simulation::entry_lane(const Vehicle& v) const {
  const auto& r = routes_[v.route];
  const NodeId from = r[v.hop];
  const NodeId to = r[v.hop + 1];
  const auto edge = static_cast<std::size_t>(
      links_[from].out_edge[static_cast<int>(side_of(from, to))]);
  if (static_cast<std::size_t>(v.hop) + 2 >= r.size())
    return lane_on(edge, Turn::Through);  // final segment
  const Turn t = turn_between(side_of(to, from), side_of(to, r[v.hop + 2]));
  return lane_on(edge, t);
}

double Simulation::draw_unit() {
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

void Simulation::inject_malfunction(const std::set<NodeId>& nodes) {
  for (NodeId id : nodes)
    if (!net_->contains(id))
      throw ArgumentError("inject_malfunction: unknown intersection " +
                          std::to_string(id));
  malfunction_ = nodes;
  std::fill(blackout_.begin(), blackout_.end(), false);
  for (NodeId id : nodes) {
    blackout_[id] = true;
    phases_[id] = Phase::off();
  }
  for (NodeId id = 0; id < static_cast<NodeId>(net_->size()); ++id)
    if (!blackout_[id] && phases_[id].is_off()) phases_[id] = Phase(0);
}

void Simulation::set_phases(const std::vector<Phase>& actions) {
  if (actions.size() != net_->size())
    throw ArgumentError("expected " + std::to_string(net_->size()) +
                        " actions, got " + std::to_string(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Phase p = actions[i];
    if (!p.valid())
      throw ArgumentError("invalid phase for intersection " + std::to_string(i));
    if (blackout_[i] && !p.is_off())
      throw ArgumentError("intersection " + std::to_string(i) +
                          " is malfunctioning; only MalfunctionOff is allowed");
    if (!blackout_[i] && p.is_off())
      throw ArgumentError("intersection " + std::to_string(i) +
                          " is functioning; MalfunctionOff not allowed");
  }
  phases_ = actions;
}

StepResult Simulation::step(const std::vector<Phase>& actions) {
  set_phases(actions);
  const long finished_before = finished_count_;
  const std::size_t accidents_before = accidents_.size();
  long crossings_before = 0;
  for (const auto& c : crossings_) crossings_before += static_cast<long>(c.size());

  for (int t = 0; t < ticks_per_decision_; ++t) advance_tick();

  StepResult out;
  out.observations = observe();
  out.rewards.reserve(out.observations.size());
  for (const auto& o : out.observations) out.rewards.push_back(local_reward(o));
  long crossings_after = 0;
  for (const auto& c : crossings_) crossings_after += static_cast<long>(c.size());
  out.stats.finished = finished_count_ - finished_before;
  out.stats.crossings = crossings_after - crossings_before;
  out.stats.accidents = static_cast<long>(accidents_.size() - accidents_before);
  return out;
}

void Simulation::advance_tick() {
  release_departures();
  advance_segments();
  clear_collisions();
  for (NodeId id = 0; id < static_cast<NodeId>(net_->size()); ++id) {
    if (blackout_[id])
      discharge_blackout(id);
    else
      discharge_signalized(id);
  }
  insert_pending();
  ++tick_;
}

void Simulation::release_departures() {
  const double now = clock();
  while (next_departure_ < vehicles_.size() && depart_[next_departure_] <= now + 1e-9) {
    const int vid = static_cast<int>(next_departure_++);
    auto& v = vehicles_[vid];
    v.status = Status::Pending;
    pending_[routes_[v.route].front()].push_back(vid);
    ++pending_count_;
  }
}

void Simulation::advance_segments() {
  for (std::size_t li = 0; li < lanes_.size(); ++li) {
    auto& lane = lanes_[li];
    while (lane.has_traveling()) {
      const int vid = lane.traveling[lane.traveling_head];
      auto& v = vehicles_[vid];
      if (v.ready > tick_) break;
      lane.pop_traveling();
      ++v.hop;
      if (static_cast<std::size_t>(v.hop) + 1 >= routes_[v.route].size()) {
        v.status = Status::Finished;
        --lane.occupancy;
        --in_network_;
        ++finished_count_;
        finish_ticks_.push_back(tick_);
      } else {
        v.status = Status::Queued;
        lane.queue.push_back(vid);
      }
    }
  }
}

void Simulation::clear_collisions() {
  for (auto& lane : lanes_) {
    if (lane.blocked_until < 0 || tick_ < lane.blocked_until) continue;
    while (lane.has_queue() && vehicles_[lane.queue_front()].status == Status::Crashed) {
      vehicles_[lane.queue_front()].status = Status::Removed;
      lane.pop_queue();
      --lane.occupancy;
      --in_network_;
      ++crashed_removed_;
    }
    lane.blocked_until = -1;
  }
}

bool Simulation::try_cross(NodeId id, int lane_index) {
  auto& lane = lanes_[lane_index];
  const int vid = lane.queue_front();
  auto& v = vehicles_[vid];
  const int target = entry_lane(v);
  auto& next = lanes_[target];
  const auto edge = static_cast<std::size_t>(target / kTurns);
  if (next.occupancy >= capacity_[edge]) return false;
  lane.pop_queue();
  --lane.occupancy;
  v.status = Status::Traveling;
  v.ready = tick_ + travel_ticks_[edge];
  next.traveling.push_back(vid);
  ++next.occupancy;
  note_occupancy(next, edge);
  crossings_[id].push_back(tick_);
  return true;
}

void Simulation::discharge_signalized(NodeId id) {
  const auto& links = links_[id];
  const Phase phase = phases_[id];
  for (int m = 0; m < kLanesPerNode; ++m) {
    const int edge = links.in_edge[static_cast<int>(movement_approach(m))];
    if (edge == kNoEdge) continue;
    auto& lane = lanes_[lane_on(edge, movement_turn(m))];
    if (!phase_serves(phase, m) || blocked(lane) || !lane.has_queue()) {
      lane.credit = 0.0;
      continue;
    }
    lane.credit += config_.discharge_rate;
    while (lane.credit >= 1.0 && lane.has_queue()) {
      if (!try_cross(id, lane_on(edge, movement_turn(m)))) {
        lane.credit = std::min(lane.credit, 1.0);
        break;
      }
      lane.credit -= 1.0;
    }
    if (!lane.has_queue()) lane.credit = 0.0;
  }
}

void Simulation::discharge_blackout(NodeId id) {
  const auto& links = links_[id];
  auto lane_of = [&](int m) -> Lane* {
    const int edge = links.in_edge[static_cast<int>(movement_approach(m))];
    return edge == kNoEdge ? nullptr : &lanes_[lane_on(edge, movement_turn(m))];
  };
  auto ready = [&](int m) {
    const Lane* l = lane_of(m);
    return l && !blocked(*l) && l->has_queue() &&
           vehicles_[l->queue_front()].status == Status::Queued;
  };

  // Right of way rotates over approaches holding a dischargeable vehicle.
  int active = -1;
  for (int k = 0; k < kApproaches; ++k) {
    const int a = (round_robin_[id] + k) % kApproaches;
    for (int t = 0; t < kTurns && active < 0; ++t)
      if (ready(movement_index(Approach(a), Turn(t)))) active = a;
    if (active >= 0) break;
  }
  for (int m = 0; m < kLanesPerNode; ++m) {
    Lane* l = lane_of(m);
    if (l && (blocked(*l) || !l->has_queue())) l->credit = 0.0;
  }
  if (active < 0) return;
  round_robin_[id] = (active + 1) % kApproaches;

  const double rate = config_.discharge_rate * config_.malfunction_capacity_factor;
  for (int t = 0; t < kTurns; ++t) {
    const int m = movement_index(Approach(active), Turn(t));
    Lane* lane = lane_of(m);
    if (!ready(m)) continue;
    lane->credit += rate;
    while (lane->credit >= 1.0 && ready(m)) {
      // A waiting head on a conflicting movement may ignore the crossing
      // vehicle and enter the box at the same time.
      int foe = -1;
      if (config_.foe_ignore_prob > 0.0) {
        for (int f = 0; f < kLanesPerNode && foe < 0; ++f) {
          if (static_cast<int>(movement_approach(f)) == active) continue;
          if (!movements_conflict(m, f) || !ready(f)) continue;
          if (draw_unit() < config_.foe_ignore_prob) foe = f;
        }
      }
      if (foe >= 0) {
        Lane* other = lane_of(foe);
        vehicles_[lane->queue_front()].status = Status::Crashed;
        vehicles_[other->queue_front()].status = Status::Crashed;
        lane->blocked_until = tick_ + block_ticks_;
        other->blocked_until = tick_ + block_ticks_;
        lane->credit = 0.0;
        other->credit = 0.0;
        accidents_.push_back({clock(), id, m, foe});
        break;
      }
      if (!try_cross(id, static_cast<int>(lane - lanes_.data()))) {
        lane->credit = std::min(lane->credit, 1.0);
        break;
      }
      lane->credit -= 1.0;
    }
  }
}

void Simulation::insert_pending() {
  for (NodeId o = 0; o < static_cast<NodeId>(net_->size()); ++o) {
    auto& q = pending_[o];
    auto& head = pending_head_[o];
    while (head < q.size()) {
      auto& v = vehicles_[q[head]];
      const int target = entry_lane(v);
      auto& lane = lanes_[target];
      const auto edge = static_cast<std::size_t>(target / kTurns);
      if (lane.occupancy >= capacity_[edge]) break;
      v.status = Status::Traveling;
      v.ready = tick_ + travel_ticks_[edge];
      lane.traveling.push_back(q[head]);
      ++lane.occupancy;
      note_occupancy(lane, edge);
      ++head;
      --pending_count_;
      ++generated_;
      ++in_network_;
    }
    if (head > 256 && head * 2 > q.size()) {
      q.erase(q.begin(), q.begin() + static_cast<long>(head));
      head = 0;
    }
  }
}

void Simulation::note_occupancy(const Lane& l, std::size_t edge) {
  peak_ratio_ = std::max(peak_ratio_, static_cast<double>(l.occupancy) / capacity_[edge]);
}

IntersectionObservation Simulation::observe(NodeId id) const {
  IntersectionObservation obs;
  obs.phase = phases_.at(id);
  const auto& links = links_[id];
  for (int a = 0; a < kApproaches; ++a)
    for (int t = 0; t < kTurns; ++t) {
      const int slot = a * kTurns + t;
      if (links.in_edge[a] != kNoEdge)
        obs.incoming[slot] = lanes_[lane_on(links.in_edge[a], Turn(t))].queued();
      if (links.out_edge[a] != kNoEdge)
        obs.outgoing[slot] = lanes_[lane_on(links.out_edge[a], Turn(t))].queued();
    }
  return obs;
}

std::array<int, kLanesPerNode> Simulation::incoming_capacity(NodeId id) const {
  std::array<int, kLanesPerNode> out{};
  const auto& links = links_.at(id);
  for (int a = 0; a < kApproaches; ++a)
    if (links.in_edge[a] != kNoEdge)
      for (int t = 0; t < kTurns; ++t) out[a * kTurns + t] = capacity_[links.in_edge[a]];
  return out;
}

std::vector<IntersectionObservation> Simulation::observe() const {
  std::vector<IntersectionObservation> out;
  out.reserve(net_->size());
  for (NodeId id = 0; id < static_cast<NodeId>(net_->size()); ++id)
    out.push_back(observe(id));
  return out;
}

ExperimentMetrics Simulation::metrics(double window_begin, double window_end,
                                      const std::set<NodeId>& focus) const {
  if (!(window_begin <= window_end) || window_begin < 0 ||
      window_end > clock() + 1e-9)
    throw ArgumentError("metrics window outside simulated time");
  for (NodeId id : focus)
    if (!net_->contains(id))
      throw ArgumentError("metrics: unknown focus intersection " + std::to_string(id));
  auto in_window = [&](long tick) {
    const double t = static_cast<double>(tick) * config_.tick;
    return t >= window_begin && t < window_end;
  };
  ExperimentMetrics m;
  m.network_throughput = static_cast<double>(
      std::count_if(finish_ticks_.begin(), finish_ticks_.end(), in_window));
  if (!focus.empty()) {
    double total = 0.0;
    for (NodeId id : focus)
      total += static_cast<double>(
          std::count_if(crossings_[id].begin(), crossings_[id].end(), in_window));
    m.intersection_throughput = total / static_cast<double>(focus.size());
  }
  for (const auto& a : accidents_)
    if (focus.count(a.intersection) && a.time >= window_begin && a.time < window_end)
      ++m.accidents;
  return m;
}

VehicleCounts Simulation::counts() const {
  VehicleCounts c;
  c.staged = static_cast<long>(vehicles_.size() - next_departure_);
  c.pending = pending_count_;
  c.generated = generated_;
  c.finished = finished_count_;
  c.crashed_removed = crashed_removed_;
  c.in_network = in_network_;
  return c;
}

bool Simulation::conservation_holds() const {
  long present = 0;
  for (std::size_t li = 0; li < lanes_.size(); ++li) {
    const auto& l = lanes_[li];
    const long here = static_cast<long>(l.traveling.size() - l.traveling_head) +
                      static_cast<long>(l.queue.size() - l.queue_head);
    if (here != l.occupancy) return false;
    if (l.occupancy > capacity_[li / kTurns]) return false;
    present += here;
  }
  if (present != in_network_) return false;
  if (generated_ != finished_count_ + crashed_removed_ + present) return false;
  const auto c = counts();
  return c.staged + c.pending + c.generated == static_cast<long>(vehicles_.size());
}

}  // namespace mallight
