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

#include "mallight/diffusion.hpp"

#include <cmath>
#include <string>

#include "mallight/error.hpp"
#include "mallight/kernels.hpp"

namespace mallight {

MalfunctionMask MalfunctionMask::from_set(std::size_t n, const std::set<NodeId>& nodes) {
  MalfunctionMask m = none(n);
  for (NodeId id : nodes) {
    if (id < 0 || static_cast<std::size_t>(id) >= n)
      throw ArgumentError("mask: unknown intersection " + std::to_string(id));
    m.values[id] = 1.0;
  }
  return m;
}

bool MalfunctionMask::any() const {
  for (double v : values)
    if (v != 0.0) return true;
  return false;
}

DiffusionFilters DiffusionFilters::uniform(int k) {
  if (k < 1) throw ArgumentError("diffusion steps must be >= 1");
  return {std::vector<double>(k, 1.0 / k)};
}

DiffusionFilters DiffusionFilters::ones(int k) {
  if (k < 1) throw ArgumentError("diffusion steps must be >= 1");
  return {std::vector<double>(k, 1.0)};
}

DiffusionOperator::DiffusionOperator(const TransitionMatrix& t, MalfunctionMask mask,
                                     int steps)
    : mask_(std::move(mask)) {
  if (steps < 1) throw ArgumentError("diffusion steps must be >= 1");
  const auto& base = t.values;
  if (base.rows() != base.cols() || base.rows() != mask_.size())
    throw ArgumentError("diffusion operator: transition/mask size mismatch");
  powers_.reserve(steps);
  powers_.push_back(base);
  for (int k = 1; k < steps; ++k) powers_.push_back(kernels::matmul(powers_.back(), base));
  apply_mask();
}

void DiffusionOperator::apply_mask() {
  masked_.clear();
  for (const auto& p : powers_) masked_.push_back(kernels::mask_columns(p, mask_.values));
  const std::vector<double> unit(masked_.size(), 1.0);
  reward_op_ = kernels::weighted_sum(masked_, unit);
}

DiffusionOperator DiffusionOperator::with_mask(MalfunctionMask mask) const {
  if (mask.size() != size()) throw ArgumentError("with_mask: size mismatch");
  DiffusionOperator out;
  out.mask_ = std::move(mask);
  out.powers_ = powers_;
  out.apply_mask();
  return out;
}

Matrix DiffusionOperator::combined(const DiffusionFilters& filters) const {
  if (filters.steps() != steps())
    throw ArgumentError("filters have " + std::to_string(filters.steps()) +
                        " steps, operator has " + std::to_string(steps()));
  return kernels::weighted_sum(masked_, filters.theta);
}

Matrix stationary_distribution(const TransitionMatrix& t, double alpha, int steps) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ArgumentError("restart probability alpha must lie in (0, 1)");
  if (steps < 1) throw ArgumentError("diffusion steps must be >= 1");
  std::vector<Matrix> powers{t.values};
  std::vector<double> coeff{alpha * (1.0 - alpha)};
  for (int k = 1; k < steps; ++k) {
    powers.push_back(kernels::matmul(powers.back(), t.values));
    coeff.push_back(coeff.back() * (1.0 - alpha));
  }
  return kernels::weighted_sum(powers, coeff);
}

Matrix masked_diffusion_conv(const Matrix& state, const DiffusionOperator& op,
                             const DiffusionFilters& filters) {
  if (state.rows() != op.size())
    throw ArgumentError("conv: state has " + std::to_string(state.rows()) +
                        " rows, operator expects " + std::to_string(op.size()));
  return kernels::matmul(op.combined(filters), state);
}

std::vector<Matrix> diffusion_terms(const Matrix& state, const DiffusionOperator& op) {
  if (state.rows() != op.size()) throw ArgumentError("diffusion_terms: row mismatch");
  std::vector<Matrix> terms;
  terms.reserve(op.steps());
  for (const auto& b : op.masked_powers()) terms.push_back(kernels::matmul(b, state));
  return terms;
}

Matrix aggregate_state(const Matrix& diffused, const Matrix& state) {
  if (!diffused.same_shape(state)) throw ArgumentError("aggregate_state: shape mismatch");
  Matrix out = state;
  for (std::size_t e = 0; e < out.data().size(); ++e)
    out.data()[e] = diffused.data()[e] + state.data()[e];
  return out;
}

std::vector<double> aggregate_reward(std::span<const double> rewards,
                                     const DiffusionOperator& op) {
  if (rewards.size() != op.size())
    throw ArgumentError("aggregate_reward: expected " + std::to_string(op.size()) +
                        " rewards, got " + std::to_string(rewards.size()));
  return kernels::matvec(op.reward_operator(), rewards);
}

std::vector<double> final_reward(std::span<const double> rewards,
                                 std::span<const double> aggregated) {
  if (rewards.size() != aggregated.size())
    throw ArgumentError("final_reward: length mismatch");
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rewards[i] + aggregated[i];
  return out;
}

ConvGradients conv_backward(const Matrix& upstream, const Matrix& state,
                            const DiffusionOperator& op,
                            const DiffusionFilters& filters) {
  if (!upstream.same_shape(state) || state.rows() != op.size())
    throw ArgumentError("conv_backward: shape mismatch");
  if (filters.steps() != op.steps()) throw ArgumentError("conv_backward: filter count");
  ConvGradients g;
  g.theta.reserve(op.steps());
  for (const auto& b : op.masked_powers())
    g.theta.push_back(kernels::dot(upstream, kernels::matmul(b, state)));
  g.state = kernels::matmul_transposed_lhs(op.combined(filters), upstream);
  for (std::size_t e = 0; e < g.state.data().size(); ++e)
    g.state.data()[e] += upstream.data()[e];
  return g;
}

}  // namespace mallight
