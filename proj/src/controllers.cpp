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

#include "mallight/controllers.hpp"

#include <cmath>
#include <limits>

#include "mallight/error.hpp"

namespace mallight {

double FixedTimePlan::cycle_length() const {
  double total = 0.0;
  for (const auto& [phase, duration] : cycle) total += duration;
  return total;
}

void FixedTimePlan::validate(double decision_interval) const {
  if (cycle.empty()) throw ArgumentError("fixed-time plan has an empty cycle");
  for (const auto& [phase, duration] : cycle) {
    if (phase.is_off() || !phase.valid())
      throw ArgumentError("fixed-time plan holds an invalid phase");
    const double ratio = duration / decision_interval;
    if (!(duration > 0) || std::abs(ratio - std::round(ratio)) > 1e-9)
      throw ArgumentError("fixed-time durations must be positive multiples of "
                          "the decision interval");
  }
}

FixedTimePlan default_fixed_plan(double split_s, double offset_s) {
  FixedTimePlan plan;
  for (int p = 0; p < kPhaseCount; ++p) plan.cycle.push_back({Phase(p), split_s});
  plan.offset = offset_s;
  return plan;
}

Phase fixed_time_action(const FixedTimePlan& plan, double clock) {
  const double length = plan.cycle_length();
  double t = std::fmod(clock + plan.offset, length);
  if (t < 0) t += length;
  for (const auto& [phase, duration] : plan.cycle) {
    if (t < duration) return phase;
    t -= duration;
  }
  return plan.cycle.back().first;
}

void SotlParams::validate(double decision_interval) const {
  if (!(theta >= 1)) throw ArgumentError("sotl theta must be >= 1");
  if (!(min_green >= decision_interval))
    throw ArgumentError("sotl min_green must be >= the decision interval");
}

int phase_demand(const IntersectionObservation& obs, int phase) {
  const auto& pair = phase_movements()[phase];
  return obs.incoming[pair[0]] + obs.incoming[pair[1]];
}

Phase sotl_action(const IntersectionObservation& obs, const SotlParams& params,
                  double elapsed_green) {
  const Phase current = obs.phase;
  if (current.is_off()) return current;
  if (elapsed_green < params.min_green) return current;
  int best = -1;
  int best_demand = 0;
  for (int p = 0; p < kPhaseCount; ++p) {
    if (p == current.index()) continue;
    const int d = phase_demand(obs, p);
    if (best < 0 || d > best_demand) {
      best = p;
      best_demand = d;
    }
  }
  if (best_demand == 0) return current;
  const int own = phase_demand(obs, current.index());
  if (own > 0 && best_demand < params.theta) return current;
  return Phase(best);
}

std::array<int, kLanesPerNode> downstream_per_movement(
    const IntersectionObservation& obs) {
  std::array<int, kLanesPerNode> out{};
  for (int m = 0; m < kLanesPerNode; ++m) {
    const int heading = (static_cast<int>(movement_approach(m)) + 2) % 4;
    int exit = heading;
    if (movement_turn(m) == Turn::Left) exit = (heading + 3) % 4;
    if (movement_turn(m) == Turn::Right) exit = (heading + 1) % 4;
    for (int lane = 0; lane < kTurns; ++lane) out[m] += obs.outgoing[exit * kTurns + lane];
  }
  return out;
}

Phase max_pressure_action(const IntersectionObservation& obs,
                          std::span<const int, kLanesPerNode> downstream) {
  int best = 0;
  long best_pressure = std::numeric_limits<long>::min();
  for (int p = 0; p < kPhaseCount; ++p) {
    long pressure = 0;
    for (int m : phase_movements()[p]) pressure += obs.incoming[m] - downstream[m];
    if (pressure > best_pressure) {
      best_pressure = pressure;
      best = p;
    }
  }
  return Phase(best);
}

}  // namespace mallight
