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

#include <random>

#include "doctest.h"
#include "mallight/diffusion.hpp"
#include "mallight/error.hpp"
#include "mallight/harness.hpp"
#include "mallight/kernels.hpp"
#include "test_util.hpp"

using namespace mallight;
using testing::relative_error;

namespace {

// Random walk on the path 0 - 1 - 2.
TransitionMatrix path3() {
  Matrix m(3, 3);
  m(0, 1) = 1.0;
  m(1, 0) = 0.5;
  m(1, 2) = 0.5;
  m(2, 1) = 1.0;
  return {m};
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

TransitionMatrix random_transition(std::mt19937_64& rng, int n) {
  const auto net = testing::random_network(rng, n, 0.4);
  return transition_matrix(build_edge_weights(net, default_sigma(net)));
}

MalfunctionMask random_mask(std::mt19937_64& rng, std::size_t n) {
  MalfunctionMask m = MalfunctionMask::none(n);
  for (double& v : m.values) v = (rng() & 1) ? 1.0 : 0.0;
  m.values[rng() % n] = 1.0;
  return m;
}

DiffusionFilters random_filters(std::mt19937_64& rng, int k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DiffusionFilters f{std::vector<double>(k)};
  for (double& v : f.theta) v = u(rng);
  return f;
}

}  // namespace

TEST_CASE("operator powers are row-stochastic and nonnegative") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_transition(rng, 6);
    const DiffusionOperator op(t, MalfunctionMask::all(6), 10);
    REQUIRE(op.steps() == 10);
    for (const auto& p : op.powers())
      for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (double v : p.row(i)) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-8));
      }
  }
  CHECK(DiffusionFilters::uniform(4).theta == std::vector<double>(4, 0.25));
  CHECK(DiffusionFilters::ones(2).theta == std::vector<double>(2, 1.0));
  CHECK_THROWS_AS(DiffusionOperator(path3(), MalfunctionMask::none(2), 2), ArgumentError);
  CHECK_THROWS_AS(DiffusionOperator(path3(), MalfunctionMask::none(3), 0), ArgumentError);
}

TEST_CASE("stationary distribution") {
  const auto t = path3();
  const auto k1 = stationary_distribution(t, 0.15, 1);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(k1(i, j) == doctest::Approx(0.15 * 0.85 * t.values(i, j)));

  Matrix ring(2, 2);
  ring(0, 1) = ring(1, 0) = 1.0;
  const auto p = stationary_distribution({ring}, 0.5, 2);
  // 0.25 T + 0.125 T^2 with T^2 = I.
  CHECK(p(0, 0) == doctest::Approx(0.125));
  CHECK(p(0, 1) == doctest::Approx(0.25));

  const auto k10 = stationary_distribution(t, 0.15, 10);
  double expected = 0.0;
  for (int k = 1; k <= 10; ++k) expected += 0.15 * std::pow(0.85, k);
  for (std::size_t i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (double v : k10.row(i)) sum += v;
    CHECK(sum == doctest::Approx(expected));
  }
  CHECK_THROWS_AS(stationary_distribution(t, 0.0, 3), ArgumentError);
  CHECK_THROWS_AS(stationary_distribution(t, 1.0, 3), ArgumentError);
}

TEST_CASE("masked convolution on the three-node path") {
  const auto t = path3();
  Matrix s(3, 2);
  s(0, 0) = 1; s(0, 1) = 2;
  s(1, 0) = 3; s(1, 1) = 4;
  s(2, 0) = 5; s(2, 1) = 6;

  SUBCASE("all-zero mask gives zero") {
    const DiffusionOperator op(t, MalfunctionMask::none(3), 3);
    const auto out = masked_diffusion_conv(s, op, DiffusionFilters::uniform(3));
    for (double v : out.data()) CHECK(v == 0.0);
    CHECK(aggregate_state(out, s) == s);
  }
  SUBCASE("one step from a single malfunctioning node") {
    const DiffusionOperator op(t, MalfunctionMask::from_set(3, {1}), 2);
    const auto out = masked_diffusion_conv(s, op, DiffusionFilters{{1.0, 0.0}});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t p = 0; p < 2; ++p) CHECK(out(i, p) == t.values(i, 1) * s(1, p));
    // Masked columns of the combined operator vanish.
    const auto a = op.combined(DiffusionFilters{{0.3, 0.7}});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(a(i, 0) == 0.0);
      CHECK(a(i, 2) == 0.0);
    }
  }
  SUBCASE("two steps by hand") {
    // T^2 = [[.5,0,.5],[0,1,0],[.5,0,.5]]; only column 0 survives.
    const DiffusionOperator op(t, MalfunctionMask::from_set(3, {0}), 2);
    const auto out = masked_diffusion_conv(s, op, DiffusionFilters{{2.0, 4.0}});
    CHECK(out(0, 0) == doctest::Approx(4.0 * 0.5 * 1));
    CHECK(out(1, 0) == doctest::Approx(2.0 * 0.5 * 1));
    CHECK(out(2, 1) == doctest::Approx(4.0 * 0.5 * 2));
  }
  SUBCASE("scaling theta scales the output") {
    const DiffusionOperator op(t, MalfunctionMask::all(3), 3);
    const DiffusionFilters f{{0.2, -0.4, 0.9}};
    const DiffusionFilters g{{0.6, -1.2, 2.7}};
    const auto a = masked_diffusion_conv(s, op, f);
    const auto b = masked_diffusion_conv(s, op, g);
    for (std::size_t i = 0; i < a.data().size(); ++i)
      CHECK(b.data()[i] == doctest::Approx(3.0 * a.data()[i]));
  }
  CHECK_THROWS_AS(masked_diffusion_conv(Matrix(2, 2), DiffusionOperator(t, MalfunctionMask::all(3), 1),
                                        DiffusionFilters::uniform(1)),
                  ArgumentError);
  CHECK_THROWS_AS(masked_diffusion_conv(s, DiffusionOperator(t, MalfunctionMask::all(3), 2),
                                        DiffusionFilters::uniform(3)),
                  ArgumentError);
}

TEST_CASE("reward aggregation") {
  const auto t = path3();
  const std::vector<double> r{-2.0, -6.0, -4.0};
  const DiffusionOperator none(t, MalfunctionMask::none(3), 2);
  for (double v : aggregate_reward(r, none)) CHECK(v == 0.0);
  CHECK(final_reward(r, aggregate_reward(r, none)) == r);

  const DiffusionOperator one(t, MalfunctionMask::from_set(3, {1}), 1);
  const auto agg = aggregate_reward(r, one);
  CHECK(agg[0] == -6.0);
  CHECK(agg[1] == 0.0);
  CHECK(agg[2] == -6.0);
  // R''_i = -P_i - sum_{j in M} w_ij P_j
  const auto fin = final_reward(r, agg);
  CHECK(fin[0] == -2.0 - 1.0 * 6.0);
  CHECK(fin[1] == -6.0);

  const DiffusionOperator all(t, MalfunctionMask::all(3), 1);
  for (double v : aggregate_reward(std::vector<double>(3, -5.0), all))
    CHECK(v == doctest::Approx(-5.0));

  // K = 2 uses the unweighted sum T + T^2.
  const DiffusionOperator two(t, MalfunctionMask::from_set(3, {0}), 2);
  const auto agg2 = aggregate_reward(r, two);
  CHECK(agg2[0] == doctest::Approx(0.5 * -2.0));
  CHECK(agg2[1] == doctest::Approx(0.5 * -2.0));
  CHECK(agg2[2] == doctest::Approx(0.5 * -2.0));

  CHECK(final_reward(std::vector<double>{-2, 0}, std::vector<double>{0, -1}) ==
        std::vector<double>{-2, -1});
  CHECK_THROWS_AS(aggregate_reward(std::vector<double>{1.0}, all), ArgumentError);
  CHECK_THROWS_AS(final_reward(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                  ArgumentError);
}

TEST_CASE("convolution and reward aggregation are linear") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = random_transition(rng, 5);
    const DiffusionOperator op(t, random_mask(rng, 5), 3);
    const auto f = random_filters(rng, 3);
    const auto a = random_matrix(rng, 5, 4);
    const auto b = random_matrix(rng, 5, 4);
    Matrix sum(5, 4);
    for (std::size_t i = 0; i < sum.data().size(); ++i)
      sum.data()[i] = 2.0 * a.data()[i] - b.data()[i];
    const auto ca = masked_diffusion_conv(a, op, f);
    const auto cb = masked_diffusion_conv(b, op, f);
    const auto cs = masked_diffusion_conv(sum, op, f);
    for (std::size_t i = 0; i < cs.data().size(); ++i)
      CHECK(cs.data()[i] == doctest::Approx(2.0 * ca.data()[i] - cb.data()[i]));

    std::vector<double> ra(5), rb(5), rs(5);
    for (int i = 0; i < 5; ++i) {
      ra[i] = a(i, 0);
      rb[i] = b(i, 1);
      rs[i] = ra[i] + 3.0 * rb[i];
    }
    const auto xa = aggregate_reward(ra, op);
    const auto xb = aggregate_reward(rb, op);
    const auto xs = aggregate_reward(rs, op);
    for (int i = 0; i < 5; ++i) CHECK(xs[i] == doctest::Approx(xa[i] + 3.0 * xb[i]));
  }
}

TEST_CASE("diffusion terms recombine into the convolution") {
  std::mt19937_64 rng(4);
  const auto t = random_transition(rng, 6);
  const DiffusionOperator op(t, random_mask(rng, 6), 4);
  const auto f = random_filters(rng, 4);
  const auto s = random_matrix(rng, 6, 3);
  const auto terms = diffusion_terms(s, op);
  REQUIRE(terms.size() == 4);
  const auto recombined = kernels::weighted_sum(terms, f.theta);
  const auto direct = masked_diffusion_conv(s, op, f);
  for (std::size_t i = 0; i < direct.data().size(); ++i)
    CHECK(recombined.data()[i] == doctest::Approx(direct.data()[i]).epsilon(1e-12));
  // with_mask reuses the powers.
  const auto other = op.with_mask(MalfunctionMask::all(6));
  CHECK(other.powers() == op.powers());
  CHECK(other.mask().values == std::vector<double>(6, 1.0));
}

TEST_CASE("conv_backward matches a hand-derived two-node case") {
  Matrix ring(2, 2);
  ring(0, 1) = ring(1, 0) = 1.0;
  const DiffusionOperator op({ring}, MalfunctionMask::from_set(2, {1}), 1);
  Matrix s(2, 1);
  s(0, 0) = 3.0;
  s(1, 0) = 5.0;
  Matrix up(2, 1);
  up(0, 0) = 7.0;
  up(1, 0) = 11.0;
  // A = theta * [[0,1],[0,0]]: S''_0 = S_0 + theta S_1, S''_1 = S_1.
  const auto g = conv_backward(up, s, op, DiffusionFilters{{0.5}});
  CHECK(g.theta[0] == doctest::Approx(7.0 * 5.0));
  CHECK(g.state(0, 0) == doctest::Approx(7.0));
  CHECK(g.state(1, 0) == doctest::Approx(11.0 + 0.5 * 7.0));

  const auto zero = conv_backward(Matrix(2, 1), s, op, DiffusionFilters{{0.5}});
  CHECK(zero.theta[0] == 0.0);
  for (double v : zero.state.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(conv_backward(Matrix(3, 1), s, op, DiffusionFilters{{0.5}}), ArgumentError);
}

TEST_CASE("conv_backward agrees with central finite differences") {
  std::mt19937_64 rng(2024);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);         // up to 6
    const std::size_t p = 1 + rng() % 5;                   // up to 5
    const int k = 1 + static_cast<int>(rng() % 3);         // up to 3
    const auto t = random_transition(rng, n);
    const DiffusionOperator op(t, random_mask(rng, n), k);
    auto f = random_filters(rng, k);
    auto s = random_matrix(rng, n, p);
    const auto up = random_matrix(rng, n, p);
    // L = <up, S''>
    auto loss = [&](const Matrix& state, const DiffusionFilters& filters) {
      return kernels::dot(up, aggregate_state(masked_diffusion_conv(state, op, filters), state));
    };
    const auto g = conv_backward(up, s, op, f);
    for (int j = 0; j < k; ++j) {
      auto plus = f, minus = f;
      plus.theta[j] += h;
      minus.theta[j] -= h;
      const double fd = (loss(s, plus) - loss(s, minus)) / (2 * h);
      CHECK(relative_error(g.theta[j], fd) < 1e-4);
    }
    for (std::size_t i = 0; i < s.data().size(); ++i) {
      auto plus = s, minus = s;
      plus.data()[i] += h;
      minus.data()[i] -= h;
      const double fd = (loss(plus, f) - loss(minus, f)) / (2 * h);
      CHECK(relative_error(g.state.data()[i], fd) < 1e-4);
    }
  }
}

TEST_CASE("influence decays with hop distance on the uniform grid") {
  const auto net = generate_grid(4, 4, 300.0);
  const auto t = transition_matrix(build_edge_weights(net, default_sigma(net)));
  const DiffusionOperator op(t, MalfunctionMask::all(16), 10);
  const Matrix& a = op.reward_operator();
  for (NodeId source : {0, 5}) {
    const auto hops = hop_distances(net, source);
    std::vector<double> sum(7, 0.0), count(7, 0.0);
    for (int j = 0; j < 16; ++j) {
      sum[hops[j]] += a(j, source);  // influence of source on j
      count[hops[j]] += 1.0;
    }
    double prev = 1e300;
    for (int h = 1; h <= 4; ++h) {
      if (count[h] == 0) continue;
      const double mean = sum[h] / count[h];
      CHECK(mean <= prev + 1e-12);
      prev = mean;
    }
  }
}

TEST_CASE("serial and parallel kernels agree exactly") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {3u, 17u, 64u, 130u}) {
    const auto a = random_matrix(rng, n, n);
    const auto b = random_matrix(rng, n, n + 3);
    CHECK(kernels::serial::matmul(a, b) == kernels::omp::matmul(a, b));
    CHECK(kernels::serial::matmul_transposed_lhs(a, b) ==
          kernels::omp::matmul_transposed_lhs(a, b));
    std::vector<double> x(n), mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(i % 7) - 3.0;
      mask[i] = (i % 3 == 0) ? 1.0 : 0.0;
    }
    CHECK(kernels::serial::matvec(a, x) == kernels::omp::matvec(a, x));
    CHECK(kernels::serial::mask_columns(a, mask) == kernels::omp::mask_columns(a, mask));
    const std::vector<Matrix> terms{a, kernels::serial::matmul(a, a), b.cols() == n ? b : a};
    const std::vector<double> w{0.5, -1.5, 2.0};
    CHECK(kernels::serial::weighted_sum(terms, w) == kernels::omp::weighted_sum(terms, w));
  }
  Matrix small(2, 2);
  small(0, 0) = 1; small(0, 1) = 2; small(1, 0) = 3; small(1, 1) = 4;
  const auto sq = kernels::serial::matmul(small, small);
  CHECK(sq(0, 0) == 7.0);
  CHECK(sq(1, 1) == 22.0);
  CHECK_THROWS_AS(kernels::serial::matmul(small, Matrix(3, 1)), ArgumentError);
}
