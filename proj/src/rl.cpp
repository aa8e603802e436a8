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

#include "mallight/rl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mallight/error.hpp"
#include "mallight/kernels.hpp"

namespace mallight {
namespace {

constexpr int kCheckpointVersion = 1;

void write_file_atomically(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(parent, ec);
  }
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ArgumentError("cannot write '" + tmp + "'");
    out << bytes;
    out.flush();
    if (!out) throw ArgumentError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ArgumentError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::vector<double> row_of(const Matrix& m, std::size_t r) {
  const auto s = m.row(r);
  return {s.begin(), s.end()};
}

std::vector<double> terms_of(const std::vector<Matrix>& terms, std::size_t r) {
  std::vector<double> out;
  for (const auto& t : terms) {
    const auto s = t.row(r);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

}  // namespace

FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "full") return FeatureMode::Full;
  if (name == "lanes-only") return FeatureMode::LanesOnly;
  throw ArgumentError("unknown feature mode '" + name + "' (full|lanes-only)");
}

std::string feature_mode_name(FeatureMode mode) {
  return mode == FeatureMode::Full ? "full" : "lanes-only";
}

int feature_count(FeatureMode mode) {
  return mode == FeatureMode::Full ? kPhaseCount + kLanesPerNode : kLanesPerNode;
}

Matrix build_state_matrix(const Simulation& sim,
                          const std::vector<IntersectionObservation>& obs,
                          FeatureMode mode) {
  const int p = feature_count(mode);
  const int lane_base = mode == FeatureMode::Full ? kPhaseCount : 0;
  Matrix s(obs.size(), p);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& o = obs[i];
    if (mode == FeatureMode::Full && !o.phase.is_off()) s(i, o.phase.index()) = 1.0;
    const auto cap = sim.incoming_capacity(static_cast<NodeId>(i));
    for (int l = 0; l < kLanesPerNode; ++l)
      if (cap[l] > 0) s(i, lane_base + l) = static_cast<double>(o.incoming[l]) / cap[l];
  }
  return s;
}

AgentConfig AgentConfig::idqn(bool shared) {
  AgentConfig c;
  c.aggregate_state = false;
  c.aggregate_reward = false;
  c.shared_parameters = shared;
  return c;
}

void TrainConfig::validate() const {
  if (episodes < 0) throw ArgumentError("episodes must be >= 0");
  if (updates_per_episode < 0) throw ArgumentError("updates_per_episode must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("gamma must lie in [0, 1)");
  for (double e : {epsilon_start, epsilon_end})
    if (!(e >= 0.0 && e <= 1.0)) throw ArgumentError("epsilon must lie in [0, 1]");
  if (epsilon_decay_episodes < 0) throw ArgumentError("epsilon decay must be >= 0");
  if (buffer_capacity == 0) throw ArgumentError("buffer capacity must be positive");
  if (!(episode_seconds > 0)) throw ArgumentError("episode length must be positive");
}

double TrainConfig::epsilon(int episode) const {
  if (episode >= epsilon_decay_episodes) return epsilon_end;
  const double frac = static_cast<double>(episode) / epsilon_decay_episodes;
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ArgumentError("replay buffer capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  ++inserted_;
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= items_.size()) throw ArgumentError("replay index out of range");
  return items_[(head_ + i) % items_.size()];
}

void ReplayBuffer::clear() {
  items_.clear();
  head_ = 0;
}

// ---------------------------------------------------------------------------

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) throw ArgumentError("uniform_below needs n > 0");
  // Rejection keeps every residue equally likely.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

Phase select_action(const QNetwork& net, std::span<const double> state, double epsilon,
                    bool malfunctioning, std::mt19937_64& rng) {
  if (malfunctioning) return Phase::off();
  if (epsilon > 0.0 && uniform01(rng) < epsilon)
    return Phase(static_cast<int>(uniform_below(rng, kPhaseCount)));
  const auto q = net.forward(state);
  return Phase(argmax(q));
}

double bellman_target(double reward, std::span<const double> next_state, bool terminal,
                      const QNetwork& net, double gamma) {
  if (terminal || gamma == 0.0) return reward;
  const auto q = net.forward(next_state);
  return reward + gamma * *std::max_element(q.begin(), q.end());
}

// ---------------------------------------------------------------------------

Agent::Agent(const AgentConfig& config, const TransitionMatrix& transition)
    : config_(config),
      intersections_(transition.values.rows()),
      transition_(transition),
      operator_(transition, MalfunctionMask::none(transition.values.rows()),
                config.diffusion_steps),
      filters_(config.trainable_filters ? DiffusionFilters::uniform(config.diffusion_steps)
                                        : DiffusionFilters::ones(config.diffusion_steps)),
      rng_(config.seed) {
  const int p = feature_count(config_.features);
  const std::size_t nets = config_.shared_parameters ? 1 : intersections_;
  for (std::size_t i = 0; i < nets; ++i) {
    networks_.push_back(QNetwork::for_phases(p, rng_));
    optimizers_.emplace_back(networks_.back().parameters().size(), config_.learning_rate);
  }
  filter_optimizer_ = Rmsprop(filters_.theta.size(), config_.learning_rate);
  set_malfunction({});
}

void Agent::set_malfunction(const std::set<NodeId>& nodes) {
  auto mask = config_.mask_everything ? MalfunctionMask::all(intersections_)
                                      : MalfunctionMask::from_set(intersections_, nodes);
  operator_ = operator_.with_mask(std::move(mask));
}

const QNetwork& Agent::network_for(int agent) const {
  return networks_.at(config_.shared_parameters ? 0 : agent);
}

QNetwork& Agent::network_for(int agent) {
  return networks_.at(config_.shared_parameters ? 0 : agent);
}

AggregatedState Agent::aggregate(const Matrix& local) const {
  AggregatedState out;
  out.local = local;
  if (!config_.aggregate_state) {
    out.state = local;
    return out;
  }
  out.terms = diffusion_terms(local, operator_);
  out.state = aggregate_state(kernels::weighted_sum(out.terms, filters_.theta), local);
  return out;
}

std::vector<double> Agent::shape_rewards(std::span<const double> local) const {
  std::vector<double> r(local.begin(), local.end());
  if (config_.aggregate_reward) r = final_reward(local, aggregate_reward(local, operator_));
  for (double& v : r) v *= config_.reward_scale;
  return r;
}

std::vector<double> Agent::rebuild_state(std::span<const double> local,
                                         std::span<const double> terms) const {
  std::vector<double> s(local.begin(), local.end());
  if (terms.empty()) return s;
  const std::size_t p = s.size();
  // Same summation order as aggregate(): theta-weighted terms first, then S.
  for (std::size_t j = 0; j < p; ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < filters_.theta.size(); ++k)
      acc += filters_.theta[k] * terms[k * p + j];
    s[j] = acc + local[j];
  }
  return s;
}

Phase Agent::act(int agent, std::span<const double> state, double epsilon,
                 bool malfunctioning) {
  return select_action(network_for(agent), state, epsilon, malfunctioning, rng_);
}

double Agent::update(const Transition& t, double gamma) {
  const std::size_t slot = config_.shared_parameters ? 0 : static_cast<std::size_t>(t.agent);
  QNetwork& net = networks_.at(slot);
  const auto state = rebuild_state(t.local, t.terms);
  const auto next = rebuild_state(t.next_local, t.next_terms);
  const double target = bellman_target(t.reward, next, t.terminal, net, gamma);
  const auto q = net.forward(state);
  const auto [loss, dq] = mse_loss(q[t.action], target);

  std::vector<double> grad_out(q.size(), 0.0);
  grad_out[t.action] = dq;
  const auto grads = net.backward(state, grad_out);

  if (config_.aggregate_state && config_.trainable_filters && !t.terms.empty()) {
    const std::size_t p = state.size();
    std::vector<double> gtheta(filters_.theta.size(), 0.0);
    for (std::size_t k = 0; k < gtheta.size(); ++k)
      for (std::size_t j = 0; j < p; ++j) gtheta[k] += grads.input[j] * t.terms[k * p + j];
    filter_optimizer_.step(filters_.theta, gtheta);
  }
  optimizers_.at(slot).step(net.parameters(), grads.params);
  return loss;
}

double Agent::train(const ReplayBuffer& buffer, int passes, double gamma) {
  std::vector<std::size_t> order(buffer.size());
  double last = 0.0;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_below(rng_, i)]);
    double total = 0.0;
    for (std::size_t idx : order) total += update(buffer.at(idx), gamma);
    last = order.empty() ? 0.0 : total / static_cast<double>(order.size());
  }
  return last;
}

void Agent::save(std::ostream& out) const {
  out << "mallight-checkpoint " << kCheckpointVersion << '\n';
  out << "features " << feature_mode_name(config_.features) << '\n';
  out << "steps " << config_.diffusion_steps << '\n';
  out << "flags " << config_.aggregate_state << ' ' << config_.aggregate_reward << ' '
      << config_.trainable_filters << ' ' << config_.mask_everything << ' '
      << config_.shared_parameters << '\n';
  out << "learning_rate ";
  write_doubles(out, std::vector<double>{config_.learning_rate});
  out << "reward_scale ";
  write_doubles(out, std::vector<double>{config_.reward_scale});
  out << "seed " << config_.seed << '\n';
  out << "episodes_done " << episodes_done_ << '\n';
  out << "networks " << networks_.size() << '\n';
  for (std::size_t i = 0; i < networks_.size(); ++i) {
    networks_[i].write(out);
    optimizers_[i].write(out);
  }
  out << "filters " << filters_.theta.size() << '\n';
  write_doubles(out, filters_.theta);
  filter_optimizer_.write(out);
  out << "rng " << rng_ << '\n';
  out << "end\n";
}

Agent Agent::load(std::istream& in, const TransitionMatrix& transition) {
  auto expect = [&](const char* tag) {
    std::string word;
    if (!(in >> word) || word != tag)
      throw ValidationError(std::string("checkpoint: expected '") + tag + "', got '" +
                            word + "'");
  };
  expect("mallight-checkpoint");
  int version = 0;
  in >> version;
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint: unsupported version " + std::to_string(version));
  AgentConfig cfg;
  std::string features;
  expect("features");
  in >> features;
  cfg.features = parse_feature_mode(features);
  expect("steps");
  in >> cfg.diffusion_steps;
  expect("flags");
  in >> cfg.aggregate_state >> cfg.aggregate_reward >> cfg.trainable_filters >>
      cfg.mask_everything >> cfg.shared_parameters;
  expect("learning_rate");
  cfg.learning_rate = read_doubles(in, 1)[0];
  expect("reward_scale");
  cfg.reward_scale = read_doubles(in, 1)[0];
  expect("seed");
  in >> cfg.seed;
  int episodes = 0;
  expect("episodes_done");
  in >> episodes;
  if (!in) throw ValidationError("checkpoint: malformed header");

  Agent agent(cfg, transition);
  agent.episodes_done_ = episodes;
  std::size_t nets = 0;
  expect("networks");
  in >> nets;
  if (nets != agent.networks_.size())
    throw ValidationError("checkpoint: network count does not match configuration");
  for (std::size_t i = 0; i < nets; ++i) {
    agent.networks_[i] = QNetwork::read(in);
    agent.optimizers_[i] = Rmsprop::read(in);
    if (agent.networks_[i].inputs() != feature_count(cfg.features))
      throw ValidationError("checkpoint: network input width mismatch");
  }
  std::size_t k = 0;
  expect("filters");
  in >> k;
  if (static_cast<int>(k) != cfg.diffusion_steps)
    throw ValidationError("checkpoint: filter count mismatch");
  agent.filters_.theta = read_doubles(in, k);
  agent.filter_optimizer_ = Rmsprop::read(in);
  expect("rng");
  in >> agent.rng_;
  expect("end");
  if (!in) throw ValidationError("checkpoint: truncated");
  return agent;
}

void Agent::save_file(const std::string& path) const {
  std::ostringstream out;
  save(out);
  write_file_atomically(path, out.str());
}

Agent Agent::load_file(const std::string& path, const TransitionMatrix& transition) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open checkpoint '" + path + "'");
  return load(in, transition);
}

// ---------------------------------------------------------------------------

EpisodeStats rollout(Simulation& sim, Agent& agent, double epsilon, double seconds,
                     ReplayBuffer* buffer,
                     const std::function<void(const Transition&)>& on_transition) {
  const std::size_t n = sim.network().size();
  if (n != agent.intersections())
    throw ArgumentError("rollout: agent sized for " + std::to_string(agent.intersections()) +
                        " intersections, network has " + std::to_string(n));
  const int steps = static_cast<int>(std::lround(seconds / sim.config().decision_interval));
  agent.set_malfunction(sim.malfunctioning());

  EpisodeStats stats;
  stats.epsilon = epsilon;
  const long finished_before = sim.finished();
  const std::size_t accidents_before = sim.accident_log().size();
  double reward_sum = 0.0;
  long reward_count = 0;

  auto current = agent.aggregate(build_state_matrix(sim, sim.observe(), agent.config().features));
  std::vector<Phase> actions(n);
  for (int step = 0; step < steps; ++step) {
    for (std::size_t i = 0; i < n; ++i)
      actions[i] = agent.act(static_cast<int>(i), current.state.row(i), epsilon,
                             sim.is_malfunctioning(static_cast<NodeId>(i)));
    const auto result = sim.step(actions);
    const auto shaped = agent.shape_rewards(result.rewards);
    auto next = agent.aggregate(
        build_state_matrix(sim, result.observations, agent.config().features));
    const bool terminal = step + 1 == steps;
    for (std::size_t i = 0; i < n; ++i) {
      if (actions[i].is_off()) continue;
      reward_sum += result.rewards[i];
      ++reward_count;
      if (!buffer && !on_transition) continue;
      Transition t;
      t.agent = static_cast<int>(i);
      t.local = row_of(current.local, i);
      t.terms = terms_of(current.terms, i);
      t.state = row_of(current.state, i);
      t.action = actions[i].index();
      t.reward = shaped[i];
      t.next_local = row_of(next.local, i);
      t.next_terms = terms_of(next.terms, i);
      t.next_state = row_of(next.state, i);
      t.terminal = terminal;
      if (on_transition) on_transition(t);
      if (buffer) buffer->push(std::move(t));
      ++stats.transitions;
    }
    current = std::move(next);
  }
  stats.mean_reward = reward_count ? reward_sum / static_cast<double>(reward_count) : 0.0;
  stats.throughput = static_cast<double>(sim.finished() - finished_before);
  stats.accidents = static_cast<long>(sim.accident_log().size() - accidents_before);
  return stats;
}

EpisodeStats train_episode(const EnvFactory& make_env, Agent& agent, ReplayBuffer& buffer,
                           const TrainConfig& config) {
  config.validate();
  const int episode = agent.episodes_done();
  Simulation sim = make_env();
  auto stats = rollout(sim, agent, config.epsilon(episode), config.episode_seconds, &buffer);
  stats.episode = episode;
  stats.loss = agent.train(buffer, config.updates_per_episode, config.gamma);
  agent.set_episodes_done(episode + 1);
  return stats;
}

TrainResult train(const EnvFactory& make_env, Agent& agent, const TrainConfig& config,
                  const std::string& checkpoint_path, const std::string& curve_path) {
  config.validate();
  TrainResult result;
  ReplayBuffer buffer(config.buffer_capacity);
  // A resumed run keeps the curve rows of the episodes already done.
  std::string earlier;
  if (!curve_path.empty() && agent.episodes_done() > 0) {
    std::ifstream in(curve_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      int e = -1;
      std::from_chars(line.data(), line.data() + comma, e);
      if (e >= 0 && e < agent.episodes_done()) earlier += line + '\n';
    }
  }
  auto write_curve = [&] {
    if (curve_path.empty()) return;
    std::string text = format_learning_curve(result.curve);
    const auto header_end = text.find('\n') + 1;
    text.insert(header_end, earlier);
    write_file_atomically(curve_path, text);
  };
  if (!checkpoint_path.empty()) agent.save_file(checkpoint_path);
  while (agent.episodes_done() < config.episodes) {
    result.curve.push_back(train_episode(make_env, agent, buffer, config));
    if (!checkpoint_path.empty()) agent.save_file(checkpoint_path);
    write_curve();
  }
  if (result.curve.empty()) write_curve();
  return result;
}

std::string format_learning_curve(const std::vector<EpisodeStats>& curve) {
  std::string out = "episode,mean_reward,throughput,epsilon,loss\n";
  char buf[160];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.0f,%.4f,%.6f\n", e.episode, e.mean_reward,
                  e.throughput, e.epsilon, e.loss);
    out += buf;
  }
  return out;
}

}  // namespace mallight
