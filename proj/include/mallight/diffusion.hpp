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

#include <set>
#include <span>
#include <vector>

#include "mallight/matrix.hpp"
#include "mallight/network.hpp"

namespace mallight {

/// Entry j is 1 iff intersection j is malfunctioning.
struct MalfunctionMask {
  std::vector<double> values;

  static MalfunctionMask none(std::size_t n) { return {std::vector<double>(n, 0.0)}; }
  static MalfunctionMask all(std::size_t n) { return {std::vector<double>(n, 1.0)}; }
  static MalfunctionMask from_set(std::size_t n, const std::set<NodeId>& nodes);

  std::size_t size() const noexcept { return values.size(); }
  bool any() const;
};

/// One trainable scalar per diffusion step, shared across feature columns.
struct DiffusionFilters {
  std::vector<double> theta;

  static DiffusionFilters uniform(int k);  // theta_k = 1/K
  static DiffusionFilters ones(int k);     // the parameter-free operator
  int steps() const noexcept { return static_cast<int>(theta.size()); }
};

/// Cached powers T^1..T^K of a transition matrix, together with their
/// column-masked versions (column j kept iff mask_j = 1), so only
/// malfunctioning intersections act as diffusion sources.
class DiffusionOperator {
 public:
  DiffusionOperator(const TransitionMatrix& t, MalfunctionMask mask, int steps);

  int steps() const noexcept { return static_cast<int>(powers_.size()); }
  std::size_t size() const noexcept { return mask_.size(); }
  const MalfunctionMask& mask() const noexcept { return mask_; }
  const std::vector<Matrix>& powers() const noexcept { return powers_; }
  const std::vector<Matrix>& masked_powers() const noexcept { return masked_; }
  // sum_k masked_powers[k]: the parameter-free reward operator.
  const Matrix& reward_operator() const noexcept { return reward_op_; }

  // Same powers, new mask. Powers are not recomputed.
  DiffusionOperator with_mask(MalfunctionMask mask) const;
  // sum_k theta_k * masked_powers[k]
  Matrix combined(const DiffusionFilters& filters) const;

 private:
  DiffusionOperator() = default;
  void apply_mask();

  MalfunctionMask mask_;
  std::vector<Matrix> powers_;
  std::vector<Matrix> masked_;
  Matrix reward_op_;
};

// sum_{k=1..K} alpha (1-alpha)^k T^k. Analysis only; not part of training.
Matrix stationary_distribution(const TransitionMatrix& t, double alpha, int steps);

// S' = [sum_k theta_k (T^k . mask)] S, applied to every feature column.
Matrix masked_diffusion_conv(const Matrix& state, const DiffusionOperator& op,
                             const DiffusionFilters& filters);
// The K per-step terms (T^k . mask) S; S' is their theta-weighted sum.
std::vector<Matrix> diffusion_terms(const Matrix& state, const DiffusionOperator& op);

// S'' = S' + S
Matrix aggregate_state(const Matrix& diffused, const Matrix& state);

// R' = [sum_k (T^k . mask)] R
std::vector<double> aggregate_reward(std::span<const double> rewards,
                                     const DiffusionOperator& op);
// R'' = R + R'
std::vector<double> final_reward(std::span<const double> rewards,
                                 std::span<const double> aggregated);

struct ConvGradients {
  std::vector<double> theta;  // dL/dtheta_k
  Matrix state;               // dL/dS, including the identity path of S''
};

// Reverse mode through S'' = conv(S) + S given dL/dS''.
ConvGradients conv_backward(const Matrix& upstream, const Matrix& state,
                            const DiffusionOperator& op,
                            const DiffusionFilters& filters);

}  // namespace mallight
