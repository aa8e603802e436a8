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

#include <array>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mallight/config.hpp"
#include "mallight/network.hpp"

namespace mallight {

// Approach sides in clockwise order. A vehicle on approach N entered the
// intersection from its northern neighbor.
enum class Approach : int { N = 0, E = 1, S = 2, W = 3 };
enum class Turn : int { Left = 0, Through = 1, Right = 2 };

inline constexpr int kApproaches = 4;
inline constexpr int kTurns = 3;
inline constexpr int kLanesPerNode = kApproaches * kTurns;  // 12
inline constexpr int kPhaseCount = 8;

// Movement / lane slot inside an intersection: approach * 3 + turn.
constexpr int movement_index(Approach a, Turn t) {
  return static_cast<int>(a) * kTurns + static_cast<int>(t);
}
constexpr Approach movement_approach(int m) { return Approach(m / kTurns); }
constexpr Turn movement_turn(int m) { return Turn(m % kTurns); }
std::string movement_name(int m);  // "NT", "EL", ...

/// Signal phase: one of eight two-movement green sets, or the blackout state
/// of a malfunctioning signal.
class Phase {
 public:
  constexpr Phase() = default;
  constexpr explicit Phase(int index) : index_(index) {}
  static constexpr Phase off() { return Phase(kOff); }

  constexpr bool is_off() const noexcept { return index_ == kOff; }
  constexpr bool valid() const noexcept {
    return is_off() || (index_ >= 0 && index_ < kPhaseCount);
  }
  constexpr int index() const noexcept { return index_; }

  friend constexpr bool operator==(Phase, Phase) = default;

 private:
  static constexpr int kOff = -1;
  int index_ = 0;
};

// Green movements of each phase: NT+ST, EL+WL, ET+WT, NL+SL, NT+NL, ST+SL,
// ET+EL, WT+WL. Right turns are always permitted and are not listed.
const std::array<std::array<int, 2>, kPhaseCount>& phase_movements();
bool phase_serves(Phase p, int movement);
// Two left/through movements conflict iff no phase serves both.
bool movements_conflict(int a, int b);

struct IntersectionObservation {
  Phase phase;
  std::array<int, kLanesPerNode> incoming{};  // vehicles per incoming lane
  std::array<int, kLanesPerNode> outgoing{};  // per exit side * lane
};

/// Negated pressure: -|sum incoming - sum outgoing|.
double local_reward(const IntersectionObservation& obs);

struct SimConfig {
  double tick = 1.0;                // s
  double decision_interval = 10.0;  // s
  double max_speed = 40.0;          // km/h
  double vehicle_length = 5.0;      // m
  double min_gap = 2.5;             // m
  double accel = 2.0;               // m/s^2
  double decel = 4.5;               // m/s^2
  double discharge_rate = 0.5;      // vehicles per lane per green tick
  double foe_ignore_prob = 0.05;
  double collision_block = 30.0;  // s
  double malfunction_capacity_factor = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  static SimConfig from(const KeyValueConfig& kv);  // keys = field names
  KeyValueConfig to_config() const;
};

struct Trip {
  NodeId origin = 0;
  NodeId dest = 0;
  double depart = 0.0;  // s
};
using Flow = std::vector<Trip>;

Flow parse_flow(const std::string& text, const std::string& source = "<string>");
Flow load_flow(const std::string& path);
std::string format_flow(const Flow& flow);
void save_flow(const Flow& flow, const std::string& path);

struct AccidentRecord {
  double time = 0.0;  // s
  NodeId intersection = 0;
  int lane_a = 0;  // movement index of the crossing vehicle
  int lane_b = 0;  // movement index of the foe
};
std::string format_accident_csv(const std::vector<AccidentRecord>& log);

struct ExperimentMetrics {
  double network_throughput = 0.0;
  double intersection_throughput = 0.0;
  long accidents = 0;
};

struct StepStats {
  long finished = 0;
  long crossings = 0;
  long accidents = 0;
};

struct StepResult {
  std::vector<IntersectionObservation> observations;
  std::vector<double> rewards;
  StepStats stats;
};

struct VehicleCounts {
  long staged = 0;   // departure time not reached
  long pending = 0;  // departed, waiting for room on the first segment
  long generated = 0;
  long finished = 0;
  long crashed_removed = 0;
  long in_network = 0;
};

/// Tick-based point-queue simulation of a signalized grid. Vehicles follow
/// precomputed shortest routes, spend a fixed free-flow time on each segment,
/// then queue in the lane of their next turn. Green lanes discharge at a
/// fractional deterministic rate; blackout intersections serve approaches
/// round-robin at reduced rate and can produce collisions.
class Simulation {
 public:
  Simulation(const RoadNetwork& net, Flow flow, SimConfig config);

  const RoadNetwork& network() const noexcept { return *net_; }
  const SimConfig& config() const noexcept { return config_; }
  double clock() const noexcept { return static_cast<double>(tick_) * config_.tick; }
  long tick_index() const noexcept { return tick_; }
  int ticks_per_decision() const noexcept { return ticks_per_decision_; }
  int lane_capacity(std::size_t edge) const { return capacity_.at(edge); }
  // Capacity of each incoming lane slot of an intersection; 0 where the
  // approach does not exist.
  std::array<int, kLanesPerNode> incoming_capacity(NodeId id) const;

  void inject_malfunction(const std::set<NodeId>& nodes);
  const std::set<NodeId>& malfunctioning() const noexcept { return malfunction_; }
  bool is_malfunctioning(NodeId id) const { return blackout_.at(id); }

  // Set the active phases, then advance one decision interval.
  StepResult step(const std::vector<Phase>& actions);
  // Lower-level hooks: set phases and advance a single tick.
  void set_phases(const std::vector<Phase>& actions);
  void advance_tick();

  std::vector<IntersectionObservation> observe() const;
  IntersectionObservation observe(NodeId id) const;
  std::vector<Phase> phases() const { return phases_; }

  ExperimentMetrics metrics(double window_begin, double window_end,
                            const std::set<NodeId>& focus) const;
  const std::vector<AccidentRecord>& accident_log() const noexcept {
    return accidents_;
  }
  VehicleCounts counts() const;
  // Recounts vehicles lane by lane and checks the conservation identity.
  bool conservation_holds() const;
  long served(NodeId id) const { return static_cast<long>(crossings_.at(id).size()); }
  long finished() const noexcept { return finished_count_; }
  // Largest lane occupancy seen relative to capacity since start (<= 1).
  double peak_occupancy_ratio() const noexcept { return peak_ratio_; }

 private:
  enum class Status : std::uint8_t { Staged, Pending, Traveling, Queued, Crashed, Finished, Removed };

  struct Vehicle {
    std::uint32_t route = 0;  // index into routes_
    std::uint16_t hop = 0;    // route_[hop] is the segment's tail node
    Status status = Status::Staged;
    long ready = 0;           // tick the vehicle reaches the segment end
  };

  struct Lane {
    std::vector<int> traveling;  // FIFO, head at traveling_head
    std::size_t traveling_head = 0;
    std::vector<int> queue;      // FIFO, head at queue_head
    std::size_t queue_head = 0;
    double credit = 0.0;
    long blocked_until = -1;
    int occupancy = 0;

    bool has_queue() const { return queue_head < queue.size(); }
    int queued() const { return static_cast<int>(queue.size() - queue_head); }
    int queue_front() const { return queue[queue_head]; }
    void pop_queue();
    bool has_traveling() const { return traveling_head < traveling.size(); }
    void pop_traveling();
  };

  struct NodeLinks {
    std::array<int, kApproaches> in_edge{-1, -1, -1, -1};   // edge from neighbor on side a
    std::array<int, kApproaches> out_edge{-1, -1, -1, -1};  // edge toward side a
  };

  Approach side_of(NodeId at, NodeId other) const;
  int lane_on(std::size_t edge, Turn t) const {
    return static_cast<int>(edge) * kTurns + static_cast<int>(t);
  }
  // Lane a vehicle joins when it enters the segment starting at route[hop].
  int entry_lane(const Vehicle& v) const;
  bool blocked(const Lane& l) const { return tick_ < l.blocked_until; }
  double draw_unit();

  void release_departures();
  void advance_segments();
  void clear_collisions();
  void discharge_signalized(NodeId id);
  void discharge_blackout(NodeId id);
  // Moves the queue head of `lane` across node `id`. False if no room.
  bool try_cross(NodeId id, int lane);
  void insert_pending();
  void note_occupancy(const Lane& l, std::size_t edge);

  const RoadNetwork* net_;
  SimConfig config_;
  int ticks_per_decision_ = 10;
  long block_ticks_ = 30;
  std::vector<long> travel_ticks_;  // per edge
  std::vector<int> capacity_;       // per edge (each lane)
  std::vector<NodeLinks> links_;

  std::vector<std::vector<NodeId>> routes_;
  std::vector<Vehicle> vehicles_;
  std::vector<double> depart_;   // per vehicle, sorted
  std::size_t next_departure_ = 0;
  std::vector<std::vector<int>> pending_;  // per origin node
  std::vector<std::size_t> pending_head_;
  std::vector<Lane> lanes_;                // edge * 3 + turn

  std::vector<Phase> phases_;
  std::set<NodeId> malfunction_;
  std::vector<bool> blackout_;
  std::vector<int> round_robin_;

  std::mt19937_64 rng_;
  long tick_ = 0;
  long generated_ = 0;
  long finished_count_ = 0;
  long crashed_removed_ = 0;
  long in_network_ = 0;
  long pending_count_ = 0;
  double peak_ratio_ = 0.0;

  std::vector<std::vector<long>> crossings_;  // per node: tick of each crossing
  std::vector<long> finish_ticks_;
  std::vector<AccidentRecord> accidents_;
};

}  // namespace mallight
