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
#include <span>
#include <utility>
#include <vector>

#include "mallight/simulator.hpp"

namespace mallight {

struct FixedTimePlan {
  std::vector<std::pair<Phase, double>> cycle;  // (phase, duration s)
  double offset = 0.0;                          // s

  double cycle_length() const;
  // Durations must be positive multiples of the decision interval.
  void validate(double decision_interval) const;
};

// Equal splits over all eight phases in index order.
FixedTimePlan default_fixed_plan(double split_s, double offset_s);

Phase fixed_time_action(const FixedTimePlan& plan, double clock);

struct SotlParams {
  double theta = 3.0;       // vehicles
  double min_green = 10.0;  // s

  void validate(double decision_interval) const;
};

// Vehicles waiting on the two green movements of a phase.
int phase_demand(const IntersectionObservation& obs, int phase);

/// Self-organizing rule: hold the current phase through min-green and while
/// it still has demand and no competitor has reached theta; otherwise switch
/// to the competitor with the most demand (lowest index on ties). With no
/// competing demand at all the current phase is kept.
Phase sotl_action(const IntersectionObservation& obs, const SotlParams& params,
                  double elapsed_green);

// Exit-side vehicle count for each movement, taken from the observation's
// outgoing lanes (the same attribution as the pressure reward).
std::array<int, kLanesPerNode> downstream_per_movement(
    const IntersectionObservation& obs);

// argmax over phases of sum over green movements of (upstream - downstream).
Phase max_pressure_action(const IntersectionObservation& obs,
                          std::span<const int, kLanesPerNode> downstream);

}  // namespace mallight
