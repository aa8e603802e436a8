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

#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mallight/error.hpp"
#include "mallight/harness.hpp"
#include "mallight/rl.hpp"

using namespace mallight;

namespace {

Transition dummy(int tag, int p = 20) {
  Transition t;
  t.agent = tag;
  t.local.assign(p, 0.0);
  t.state.assign(p, 0.0);
  t.next_local.assign(p, 0.0);
  t.next_state.assign(p, 0.0);
  t.action = tag % kPhaseCount;
  t.reward = -tag;
  return t;
}

struct SmallWorld {
  RoadNetwork net = generate_grid(2, 3, 300.0);
  Flow flow = generate_flow(net, FlowSpec{900.0, 600.0, OdPolicy::All, 3});
  TransitionMatrix transition = transition_matrix(build_edge_weights(net, default_sigma(net)));
  std::set<NodeId> broken{1};

  Simulation make(std::uint64_t seed, const std::set<NodeId>& m) const {
    SimConfig sc;
    sc.seed = seed;
    Simulation sim(net, flow, sc);
    sim.inject_malfunction(m);
    return sim;
  }
};

std::vector<Transition> collect(const SmallWorld& w, Agent& agent, const std::set<NodeId>& m,
                                double epsilon) {
  auto sim = w.make(9, m);
  std::vector<Transition> out;
  rollout(sim, agent, epsilon, 300.0, nullptr, [&](const Transition& t) { out.push_back(t); });
  return out;
}

}  // namespace

TEST_CASE("replay buffer keeps the newest transitions in FIFO order") {
  ReplayBuffer buffer(5000);
  for (int i = 0; i < 5760; ++i) buffer.push(dummy(i));
  CHECK(buffer.size() == 5000);
  CHECK(buffer.inserted() == 5760);
  CHECK(buffer.at(0).agent == 760);
  CHECK(buffer.at(4999).agent == 5759);
  for (std::size_t i = 1; i < buffer.size(); ++i)
    CHECK(buffer.at(i).agent == buffer.at(i - 1).agent + 1);
  CHECK_THROWS_AS(buffer.at(5000), ArgumentError);
  buffer.clear();
  CHECK(buffer.size() == 0);
  ReplayBuffer small(3);
  for (int i = 0; i < 2; ++i) small.push(dummy(i));
  CHECK(small.at(0).agent == 0);
  CHECK_THROWS_AS(ReplayBuffer(0), ArgumentError);
}

TEST_CASE("exploration schedule and configuration checks") {
  TrainConfig c;
  c.epsilon_start = 1.0;
  c.epsilon_end = 0.1;
  c.epsilon_decay_episodes = 10;
  CHECK(c.epsilon(0) == 1.0);
  CHECK(c.epsilon(5) == doctest::Approx(0.55));
  CHECK(c.epsilon(10) == doctest::Approx(0.1));
  CHECK(c.epsilon(50) == doctest::Approx(0.1));
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.buffer_capacity = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("action selection") {
  std::mt19937_64 rng(1);
  const auto net = QNetwork::for_phases(20, rng);
  const std::vector<double> state(20, 0.3);

  SUBCASE("malfunctioning signals are off and draw nothing") {
    std::mt19937_64 a(5), b(5);
    CHECK(select_action(net, state, 1.0, true, a).is_off());
    CHECK(a() == b());
  }
  SUBCASE("epsilon zero is greedy") {
    std::mt19937_64 r(2);
    const auto q = net.forward(state);
    for (int i = 0; i < 10; ++i)
      CHECK(select_action(net, state, 0.0, false, r).index() == argmax(q));
  }
  SUBCASE("epsilon one is uniform over the eight phases") {
    std::mt19937_64 r(3);
    std::array<int, kPhaseCount> counts{};
    const int draws = 16000;
    for (int i = 0; i < draws; ++i) ++counts[select_action(net, state, 1.0, false, r).index()];
    const double expected = draws / 8.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 24.32);  // 7 degrees of freedom, p = 0.001
  }
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0, -1.0}) == 1);
  std::mt19937_64 r(4);
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(r);
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(uniform_below(r, 7) < 7);
  }
  CHECK_THROWS_AS(uniform_below(r, 0), ArgumentError);
}

TEST_CASE("Bellman target") {
  QNetwork net({20, 8});
  net.parameters()[20 * 8 + 3] = 10.0;  // bias of output 3
  const std::vector<double> next(20, 0.0);
  CHECK(bellman_target(-2.0, next, false, net, 0.95) == doctest::Approx(7.5));
  CHECK(bellman_target(-2.0, next, true, net, 0.95) == -2.0);
  CHECK(bellman_target(-2.0, next, false, net, 0.0) == -2.0);
}

TEST_CASE("state matrix features") {
  const SmallWorld w;
  auto sim = w.make(1, w.broken);
  for (int s = 0; s < 30; ++s) {
    std::vector<Phase> a(w.net.size(), Phase(2));
    a[1] = Phase::off();
    sim.step(a);
  }
  const auto obs = sim.observe();
  const auto full = build_state_matrix(sim, obs, FeatureMode::Full);
  const auto lanes = build_state_matrix(sim, obs, FeatureMode::LanesOnly);
  CHECK(full.cols() == 20);
  CHECK(lanes.cols() == 12);
  for (std::size_t i = 0; i < w.net.size(); ++i) {
    double phase_sum = 0.0;
    for (int p = 0; p < kPhaseCount; ++p) phase_sum += full(i, p);
    CHECK(phase_sum == (i == 1 ? 0.0 : 1.0));
    if (i != 1) CHECK(full(i, 2) == 1.0);
    const auto cap = sim.incoming_capacity(static_cast<NodeId>(i));
    for (int l = 0; l < kLanesPerNode; ++l) {
      CHECK(lanes(i, l) == full(i, kPhaseCount + l));
      CHECK(lanes(i, l) >= 0.0);
      CHECK(lanes(i, l) <= 1.0);
      if (cap[l] > 0) CHECK(lanes(i, l) == doctest::Approx(double(obs[i].incoming[l]) / cap[l]));
    }
  }
  CHECK(parse_feature_mode("lanes-only") == FeatureMode::LanesOnly);
  CHECK(feature_mode_name(FeatureMode::Full) == "full");
  CHECK_THROWS_AS(parse_feature_mode("everything"), ArgumentError);
}

TEST_CASE("with no malfunction the influence-aware agent reduces to independent agents") {
  const SmallWorld w;
  AgentConfig mc = AgentConfig::mallight();
  mc.seed = 42;
  AgentConfig ic = AgentConfig::idqn();
  ic.seed = 42;
  Agent mallight(mc, w.transition);
  Agent idqn(ic, w.transition);
  const auto a = collect(w, mallight, {}, 0.3);
  const auto b = collect(w, idqn, {}, 0.3);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].state == b[i].state);
    CHECK(a[i].next_state == b[i].next_state);
    CHECK(a[i].action == b[i].action);
    CHECK(a[i].reward == b[i].reward);
  }
  // And the filters never move, because every diffusion term is zero.
  const auto before = mallight.filters().theta;
  for (const auto& t : a) mallight.update(t, 0.95);
  CHECK(mallight.filters().theta == before);
}

TEST_CASE("malfunctioning agents record no transitions") {
  const SmallWorld w;
  Agent agent(AgentConfig::mallight(), w.transition);
  const auto trans = collect(w, agent, w.broken, 1.0);
  CHECK(trans.size() == (w.net.size() - 1) * 30);
  for (const auto& t : trans) {
    CHECK(t.agent != 1);
    CHECK(t.terms.size() == 10u * 20u);
    CHECK(agent.rebuild_state(t.local, t.terms) == t.state);
  }
}

TEST_CASE("reward shaping follows the configuration") {
  const SmallWorld w;
  std::vector<double> r(w.net.size(), 0.0);
  r[1] = -10.0;
  r[0] = -2.0;
  AgentConfig c = AgentConfig::mallight();
  c.reward_scale = 1.0;
  Agent agent(c, w.transition);
  agent.set_malfunction(w.broken);
  const auto shaped = agent.shape_rewards(r);
  const auto expected = final_reward(r, aggregate_reward(r, agent.diffusion()));
  CHECK(shaped == expected);
  CHECK(shaped[0] < -2.0);  // node 0 neighbours the broken node

  c.aggregate_reward = false;
  c.reward_scale = 0.5;
  Agent plain(c, w.transition);
  plain.set_malfunction(w.broken);
  CHECK(plain.shape_rewards(r)[0] == -1.0);
}

TEST_CASE("updates move the network and the filters") {
  const SmallWorld w;
  Agent agent(AgentConfig::mallight(), w.transition);
  const auto trans = collect(w, agent, w.broken, 1.0);
  // Repeated updates on one transition shrink its error.
  Transition t = trans.back();
  t.reward = 1.0;
  t.terminal = true;
  const double first = agent.update(t, 0.95);
  double last = first;
  for (int i = 0; i < 200; ++i) last = agent.update(t, 0.95);
  CHECK(last < first);
  const auto theta0 = DiffusionFilters::uniform(10).theta;
  CHECK(agent.filters().theta != theta0);

  AgentConfig fixed = AgentConfig::mallight();
  fixed.trainable_filters = false;
  Agent frozen(fixed, w.transition);
  CHECK(frozen.filters().theta == DiffusionFilters::ones(10).theta);
  const auto ft = collect(w, frozen, w.broken, 1.0);
  frozen.train([&] {
    ReplayBuffer b(100);
    for (std::size_t i = 0; i < 50; ++i) b.push(ft[i]);
    return b;
  }(), 1, 0.95);
  CHECK(frozen.filters().theta == DiffusionFilters::ones(10).theta);
}

TEST_CASE("checkpoint round trip reproduces later behaviour") {
  const SmallWorld w;
  AgentConfig c = AgentConfig::mallight();
  c.seed = 7;
  Agent agent(c, w.transition);
  ReplayBuffer buffer(400);
  auto sim = w.make(2, w.broken);
  rollout(sim, agent, 0.5, 300.0, &buffer);
  agent.train(buffer, 1, 0.95);
  agent.set_episodes_done(1);

  std::stringstream first;
  agent.save(first);
  Agent copy = Agent::load(first, w.transition);
  std::stringstream second;
  copy.save(second);
  CHECK(first.str() == second.str());
  CHECK(copy.episodes_done() == 1);

  const auto a = collect(w, agent, w.broken, 0.4);
  const auto b = collect(w, copy, w.broken, 0.4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  ReplayBuffer ba(200), bb(200);
  for (std::size_t i = 0; i < 150; ++i) {
    ba.push(a[i]);
    bb.push(b[i]);
  }
  CHECK(agent.train(ba, 2, 0.95) == copy.train(bb, 2, 0.95));
  CHECK(agent.filters().theta == copy.filters().theta);

  std::stringstream bad("mallight-checkpoint 99\n");
  CHECK_THROWS(Agent::load(bad, w.transition));
}

TEST_CASE("training loop, zero episodes and resumption") {
  const SmallWorld w;
  const auto dir = std::filesystem::temp_directory_path() / "mallight_test_rl";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto ckpt = (dir / "checkpoint.txt").string();
  const auto curve = (dir / "curve.csv").string();
  TrainConfig tc;
  tc.episode_seconds = 300.0;
  tc.updates_per_episode = 1;
  tc.epsilon_decay_episodes = 2;
  EnvFactory env = [&] { return w.make(11, w.broken); };

  tc.episodes = 0;
  Agent untouched(AgentConfig::mallight(), w.transition);
  std::stringstream before;
  untouched.save(before);
  CHECK(train(env, untouched, tc, ckpt, curve).curve.empty());
  std::stringstream after;
  untouched.save(after);
  CHECK(before.str() == after.str());
  CHECK(read_text_file(curve) == "episode,mean_reward,throughput,epsilon,loss\n");

  tc.episodes = 2;
  Agent straight(AgentConfig::mallight(), w.transition);
  const auto full = train(env, straight, tc).curve;
  REQUIRE(full.size() == 2);
  CHECK(full[0].epsilon == 1.0);
  CHECK(full[0].transitions == 5 * 30);

  tc.episodes = 1;
  Agent part(AgentConfig::mallight(), w.transition);
  train(env, part, tc, ckpt, curve);
  tc.episodes = 2;
  Agent resumed = Agent::load_file(ckpt, w.transition);
  CHECK(resumed.episodes_done() == 1);
  const auto rest = train(env, resumed, tc, ckpt, curve).curve;
  REQUIRE(rest.size() == 1);
  CHECK(rest[0].episode == 1);
  CHECK(rest[0].throughput == full[1].throughput);
  const auto text = read_text_file(curve);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
  std::filesystem::remove_all(dir);
}
