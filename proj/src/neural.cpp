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

#include "mallight/neural.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "mallight/error.hpp"

namespace mallight {

QNetwork::QNetwork(std::vector<int> sizes) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw ArgumentError("network needs at least two layers");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0)
      throw ArgumentError("layer widths must be positive");
    total += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_.assign(total, 0.0);
}

QNetwork QNetwork::glorot(std::vector<int> sizes, std::mt19937_64& rng) {
  QNetwork net(std::move(sizes));
  for (int l = 0; l < net.layers(); ++l) {
    const double limit = std::sqrt(6.0 / (net.sizes_[l] + net.sizes_[l + 1]));
    for (double& w : net.weights(l)) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      w = (2.0 * u - 1.0) * limit;
    }
  }
  return net;
}

QNetwork QNetwork::for_phases(int inputs, std::mt19937_64& rng) {
  return glorot({inputs, 20, 20, 8}, rng);
}

std::size_t QNetwork::weight_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l)
    off += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
  return off;
}

std::span<double> QNetwork::weights(int layer) {
  return {params_.data() + weight_offset(layer),
          static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer]};
}

std::span<double> QNetwork::biases(int layer) {
  const std::size_t n = static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
  return {params_.data() + weight_offset(layer) + n,
          static_cast<std::size_t>(sizes_[layer + 1])};
}

std::vector<double> QNetwork::forward_all(
    std::span<const double> x, std::vector<std::vector<double>>& acts) const {
  if (static_cast<int>(x.size()) != inputs())
    throw ArgumentError("forward: expected " + std::to_string(inputs()) +
                        " inputs, got " + std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw ArgumentError("forward: non-finite input");
  acts.assign(1, std::vector<double>(x.begin(), x.end()));
  std::size_t off = 0;
  for (int l = 0; l < layers(); ++l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const double* w = params_.data() + off;
    const double* b = w + static_cast<std::size_t>(in) * out;
    const auto& prev = acts.back();
    std::vector<double> next(out);
    for (int o = 0; o < out; ++o) {
      double z = b[o];
      for (int i = 0; i < in; ++i) z += w[o * in + i] * prev[i];
      next[o] = (l + 1 < layers() && z < 0.0) ? 0.0 : z;
    }
    acts.push_back(std::move(next));
    off += static_cast<std::size_t>(out) * (in + 1);
  }
  return acts.back();
}

std::vector<double> QNetwork::forward(std::span<const double> x) const {
  std::vector<std::vector<double>> acts;
  return forward_all(x, acts);
}

QNetwork::Gradients QNetwork::backward(std::span<const double> x,
                                       std::span<const double> grad_out) const {
  if (static_cast<int>(grad_out.size()) != outputs())
    throw ArgumentError("backward: expected " + std::to_string(outputs()) +
                        " output gradients, got " + std::to_string(grad_out.size()));
  std::vector<std::vector<double>> acts;
  forward_all(x, acts);
  Gradients g;
  g.params.assign(params_.size(), 0.0);
  std::vector<double> delta(grad_out.begin(), grad_out.end());
  for (int l = layers() - 1; l >= 0; --l) {
    const int in = sizes_[l];
    const int out = sizes_[l + 1];
    const std::size_t off = weight_offset(l);
    const double* w = params_.data() + off;
    double* gw = g.params.data() + off;
    double* gb = gw + static_cast<std::size_t>(in) * out;
    // Hidden outputs passed through the rectifier; its derivative is the
    // indicator of a positive activation.
    if (l + 1 < layers())
      for (int o = 0; o < out; ++o)
        if (acts[l + 1][o] <= 0.0) delta[o] = 0.0;
    const auto& prev = acts[l];
    std::vector<double> back(in, 0.0);
    for (int o = 0; o < out; ++o) {
      gb[o] = delta[o];
      for (int i = 0; i < in; ++i) {
        gw[o * in + i] = delta[o] * prev[i];
        back[i] += w[o * in + i] * delta[o];
      }
    }
    delta = std::move(back);
  }
  g.input = std::move(delta);
  return g;
}

void write_doubles(std::ostream& out, std::span<const double> values) {
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%a", values[i]);
    out << buf << ((i + 1) % 8 == 0 || i + 1 == values.size() ? '\n' : ' ');
  }
}

std::vector<double> read_doubles(std::istream& in, std::size_t count) {
  std::vector<double> out(count);
  std::string token;
  for (auto& v : out) {
    if (!(in >> token)) throw ValidationError("checkpoint truncated");
    char* end = nullptr;
    v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      throw ValidationError("checkpoint holds a malformed number '" + token + "'");
  }
  return out;
}

void QNetwork::write(std::ostream& out) const {
  out << "qnetwork " << sizes_.size();
  for (int s : sizes_) out << ' ' << s;
  out << '\n';
  write_doubles(out, params_);
}

QNetwork QNetwork::read(std::istream& in) {
  std::string tag;
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "qnetwork" || count < 2 || count > 64)
    throw ValidationError("checkpoint: expected qnetwork record");
  std::vector<int> sizes(count);
  for (int& s : sizes)
    if (!(in >> s)) throw ValidationError("checkpoint: bad layer sizes");
  QNetwork net(sizes);
  net.params_ = read_doubles(in, net.params_.size());
  return net;
}

LossAndGrad mse_loss(double pred, double target) {
  const double err = pred - target;
  return {err * err, 2.0 * err};
}

void Rmsprop::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != acc_.size() || grads.size() != acc_.size())
    throw ArgumentError("rmsprop: shape mismatch");
  for (std::size_t i = 0; i < acc_.size(); ++i) {
    const double g = grads[i];
    acc_[i] = rho_ * acc_[i] + (1.0 - rho_) * g * g;
    params[i] -= lr_ * g / (std::sqrt(acc_[i]) + eps_);
  }
}

void Rmsprop::write(std::ostream& out) const {
  out << "rmsprop " << acc_.size() << '\n';
  write_doubles(out, std::vector<double>{lr_, rho_, eps_});
  write_doubles(out, acc_);
}

Rmsprop Rmsprop::read(std::istream& in) {
  std::string tag;
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "rmsprop")
    throw ValidationError("checkpoint: expected rmsprop record");
  const auto hyper = read_doubles(in, 3);
  Rmsprop opt(count, hyper[0], hyper[1], hyper[2]);
  opt.acc_ = read_doubles(in, count);
  return opt;
}

}  // namespace mallight
