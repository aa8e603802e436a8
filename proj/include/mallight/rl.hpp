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
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mallight/diffusion.hpp"
#include "mallight/neural.hpp"
#include "mallight/simulator.hpp"

namespace mallight {

enum class FeatureMode { Full, LanesOnly };

FeatureMode parse_feature_mode(const std::string& name);
std::string feature_mode_name(FeatureMode mode);
// 8 one-hot phase slots + 12 lane counts, or the 12 lane counts alone.
int feature_count(FeatureMode mode);

/// Local feature matrix S (one row per intersection). Lane counts are divided
/// by the lane's capacity; a blacked-out signal has an all-zero phase block.
Matrix build_state_matrix(const Simulation& sim,
                          const std::vector<IntersectionObservation>& obs,
                          FeatureMode mode);

/// Which parts of the influence-aware pipeline are active.
struct AgentConfig {
  FeatureMode features = FeatureMode::Full;
  int diffusion_steps = 10;
  bool aggregate_state = true;
  bool aggregate_reward = true;
  bool trainable_filters = true;    // false: theta fixed at 1 (parameter-free)
  bool mask_everything = false;     // mask = 1 for every intersection
  bool shared_parameters = true;    // false: one network per intersection
  double learning_rate = 0.001;
  double reward_scale = 0.05;       // applied to shaped rewards before storage
  std::uint64_t seed = 0;

  static AgentConfig mallight() { return {}; }
  static AgentConfig idqn(bool shared = true);
};

struct TrainConfig {
  int episodes = 200;
  int updates_per_episode = 10;  // full passes over the buffer
  double gamma = 0.95;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  int epsilon_decay_episodes = 100;
  std::size_t buffer_capacity = 5000;
  double episode_seconds = 3600.0;

  void validate() const;
  double epsilon(int episode) const;
};

/// One replay record for agent `agent`. Besides the aggregated state the
/// record keeps the agent's local row and its K diffusion terms so the
/// aggregated state can be rebuilt under the current filters for training.
struct Transition {
  int agent = 0;
  std::vector<double> local;       // S_i
  std::vector<double> terms;       // K x P, ((T^k . mask) S)_i
  std::vector<double> state;       // S''_i when recorded
  int action = 0;
  double reward = 0.0;             // R''_i
  std::vector<double> next_local;
  std::vector<double> next_terms;
  std::vector<double> next_state;
  bool terminal = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(Transition t);
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t inserted() const noexcept { return inserted_; }
  // i = 0 is the oldest retained transition.
  const Transition& at(std::size_t i) const;
  void clear();

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
  std::size_t head_ = 0;  // oldest slot once full
  std::uint64_t inserted_ = 0;
};

// Greedy index of the largest value; lowest index on ties.
int argmax(std::span<const double> values);

/// Off for a blacked-out signal; else uniform with probability epsilon,
/// otherwise the greedy phase.
Phase select_action(const QNetwork& net, std::span<const double> state, double epsilon,
                    bool malfunctioning, std::mt19937_64& rng);

double bellman_target(double reward, std::span<const double> next_state, bool terminal,
                      const QNetwork& net, double gamma);

// Uniform draws shared by the training code.
double uniform01(std::mt19937_64& rng);
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

struct AggregatedState {
  Matrix local;               // S
  std::vector<Matrix> terms;  // (T^k . mask) S; empty when aggregation is off
  Matrix state;               // S''
};

/// Shared-parameter deep-Q agent with influence-aware state and reward
/// aggregation. Owns networks, filters, optimizers and the exploration RNG.
class Agent {
 public:
  Agent(const AgentConfig& config, const TransitionMatrix& transition);

  const AgentConfig& config() const noexcept { return config_; }
  std::size_t intersections() const noexcept { return intersections_; }
  int features() const { return feature_count(config_.features); }

  // Rebuild the diffusion operator for a new malfunction set.
  void set_malfunction(const std::set<NodeId>& nodes);
  const DiffusionOperator& diffusion() const noexcept { return operator_; }
  const DiffusionFilters& filters() const noexcept { return filters_; }
  DiffusionFilters& filters() noexcept { return filters_; }

  const QNetwork& network_for(int agent) const;
  QNetwork& network_for(int agent);
  std::size_t network_count() const noexcept { return networks_.size(); }

  AggregatedState aggregate(const Matrix& local) const;
  std::vector<double> shape_rewards(std::span<const double> local) const;
  // Rebuilds S''_i from the stored local row and terms under current filters.
  std::vector<double> rebuild_state(std::span<const double> local,
                                    std::span<const double> terms) const;

  Phase act(int agent, std::span<const double> state, double epsilon, bool malfunctioning);

  // One semi-gradient update on a single transition; returns its loss. The
  // bootstrap value comes from the live network.
  double update(const Transition& t, double gamma);
  // `passes` shuffled sweeps over the buffer; returns mean loss of the last.
  double train(const ReplayBuffer& buffer, int passes, double gamma);

  std::mt19937_64& rng() noexcept { return rng_; }
  int episodes_done() const noexcept { return episodes_done_; }
  void set_episodes_done(int e) noexcept { episodes_done_ = e; }

  void save(std::ostream& out) const;
  static Agent load(std::istream& in, const TransitionMatrix& transition);
  void save_file(const std::string& path) const;
  static Agent load_file(const std::string& path, const TransitionMatrix& transition);

 private:
  AgentConfig config_;
  std::size_t intersections_;
  TransitionMatrix transition_;
  DiffusionOperator operator_;
  DiffusionFilters filters_;
  std::vector<QNetwork> networks_;
  std::vector<Rmsprop> optimizers_;
  Rmsprop filter_optimizer_;
  std::mt19937_64 rng_;
  int episodes_done_ = 0;
};

struct EpisodeStats {
  int episode = 0;
  double mean_reward = 0.0;  // local pressure reward per agent-step
  double throughput = 0.0;   // completed trips in the episode
  double epsilon = 0.0;
  double loss = 0.0;
  long transitions = 0;
  long accidents = 0;
};

using EnvFactory = std::function<Simulation()>;

// Runs one episode with the agent in control. Transitions go to `buffer`
// when given; `on_transition` sees every recorded transition.
EpisodeStats rollout(Simulation& sim, Agent& agent, double epsilon, double seconds,
                     ReplayBuffer* buffer,
                     const std::function<void(const Transition&)>& on_transition = {});

// Rollout on a fresh environment followed by the end-of-episode updates.
EpisodeStats train_episode(const EnvFactory& make_env, Agent& agent, ReplayBuffer& buffer,
                           const TrainConfig& config);

struct TrainResult {
  std::vector<EpisodeStats> curve;
};

/// Runs the remaining episodes (config.episodes minus those already done),
/// writing the checkpoint and learning curve after every episode when paths
/// are given.
TrainResult train(const EnvFactory& make_env, Agent& agent, const TrainConfig& config,
                  const std::string& checkpoint_path = {},
                  const std::string& curve_path = {});

std::string format_learning_curve(const std::vector<EpisodeStats>& curve);

}  // namespace mallight
