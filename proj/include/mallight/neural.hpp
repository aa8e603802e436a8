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

#include <cstddef>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <vector>

namespace mallight {

/// Dense feed-forward network: rectified-linear hidden layers and a linear
/// output layer. Parameters live in one flat vector laid out per layer as
/// weights (out x in, row-major) followed by biases.
class QNetwork {
 public:
  QNetwork() = default;
  // Zero-initialized network with the given layer widths (input first).
  explicit QNetwork(std::vector<int> sizes);
  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static QNetwork glorot(std::vector<int> sizes, std::mt19937_64& rng);
  // input -> 20 -> 20 -> 8
  static QNetwork for_phases(int inputs, std::mt19937_64& rng);

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> weights(int layer);
  std::span<double> biases(int layer);

  std::vector<double> forward(std::span<const double> x) const;

  struct Gradients {
    std::vector<double> params;
    std::vector<double> input;
  };
  // Reverse-mode gradients of <grad_out, forward(x)>.
  Gradients backward(std::span<const double> x, std::span<const double> grad_out) const;

  void write(std::ostream& out) const;
  static QNetwork read(std::istream& in);

  friend bool operator==(const QNetwork&, const QNetwork&) = default;

 private:
  std::vector<double> forward_all(std::span<const double> x,
                                  std::vector<std::vector<double>>& activations) const;
  std::size_t weight_offset(int layer) const;

  std::vector<int> sizes_;
  std::vector<double> params_;
};

struct LossAndGrad {
  double loss;
  double grad;
};
// (pred - target)^2 and its derivative in pred.
LossAndGrad mse_loss(double pred, double target);

/// RMSprop: acc <- rho*acc + (1-rho) g^2; p <- p - lr g / (sqrt(acc) + eps).
class Rmsprop {
 public:
  Rmsprop() = default;
  explicit Rmsprop(std::size_t params, double lr = 0.001, double rho = 0.9,
                   double eps = 1e-8)
      : lr_(lr), rho_(rho), eps_(eps), acc_(params, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads);

  double learning_rate() const noexcept { return lr_; }
  std::span<const double> accumulators() const noexcept { return acc_; }

  void write(std::ostream& out) const;
  static Rmsprop read(std::istream& in);

  friend bool operator==(const Rmsprop&, const Rmsprop&) = default;

 private:
  double lr_ = 0.001;
  double rho_ = 0.9;
  double eps_ = 1e-8;
  std::vector<double> acc_;
};

// Exact textual encoding of doubles (hex floats) used by checkpoints.
void write_doubles(std::ostream& out, std::span<const double> values);
std::vector<double> read_doubles(std::istream& in, std::size_t count);

}  // namespace mallight
