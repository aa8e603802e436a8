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

#include "mallight/kernels.hpp"

#include <string>

#include "mallight/error.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace mallight {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

namespace kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 15;

void check_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ArgumentError("matmul: inner dimensions " +
                        std::to_string(a.cols()) + " and " +
                        std::to_string(b.rows()) + " differ");
}

void check_weighted(std::span<const Matrix> terms,
                    std::span<const double> weights) {
  if (terms.size() != weights.size())
    throw ArgumentError("weighted_sum: term/weight count mismatch");
  for (const auto& t : terms)
    if (!t.same_shape(terms.front()))
      throw ArgumentError("weighted_sum: terms differ in shape");
}

void check_mask(const Matrix& m, std::span<const double> mask) {
  if (mask.size() != m.cols())
    throw ArgumentError("mask_columns: mask length " +
                        std::to_string(mask.size()) + " != columns " +
                        std::to_string(m.cols()));
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b);
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ArgumentError("matmul_transposed_lhs: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  return c;
}

Matrix weighted_sum(std::span<const Matrix> terms,
                    std::span<const double> weights) {
  check_weighted(terms, weights);
  if (terms.empty()) return {};
  Matrix out(terms.front().rows(), terms.front().cols());
  auto o = out.data();
  for (std::size_t e = 0; e < o.size(); ++e) {
    double acc = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k)
      acc += weights[k] * terms[k].data()[e];
    o[e] = acc;
  }
  return out;
}

Matrix mask_columns(const Matrix& m, std::span<const double> mask) {
  check_mask(m, mask);
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (mask[j] == 0.0) out(i, j) = 0.0;
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw ArgumentError("matvec: length mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

}  // namespace serial

namespace omp {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b);
  Matrix c(a.rows(), b.cols());
  const long rows = static_cast<long>(a.rows());
  const long work = rows * static_cast<long>(a.cols() * b.cols());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows())
    throw ArgumentError("matmul_transposed_lhs: row counts differ");
  Matrix c(a.cols(), b.cols());
  const long rows = static_cast<long>(a.cols());
  const long work = rows * static_cast<long>(a.rows() * b.cols());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aki * b(k, j);
    }
  return c;
}

Matrix weighted_sum(std::span<const Matrix> terms,
                    std::span<const double> weights) {
  check_weighted(terms, weights);
  if (terms.empty()) return {};
  Matrix out(terms.front().rows(), terms.front().cols());
  auto o = out.data();
  const long n = static_cast<long>(o.size());
  const long work = n * static_cast<long>(terms.size());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long e = 0; e < n; ++e) {
    double acc = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k)
      acc += weights[k] * terms[k].data()[e];
    o[e] = acc;
  }
  return out;
}

Matrix mask_columns(const Matrix& m, std::span<const double> mask) {
  check_mask(m, mask);
  Matrix out = m;
  const long rows = static_cast<long>(m.rows());
#pragma omp parallel for schedule(static) if (rows * static_cast<long>(m.cols()) > kParallelWork)
  for (long i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (mask[j] == 0.0) out(i, j) = 0.0;
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw ArgumentError("matvec: length mismatch");
  std::vector<double> y(a.rows(), 0.0);
  const long rows = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static) if (rows * static_cast<long>(a.cols()) > kParallelWork)
  for (long i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

}  // namespace omp

double dot(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ArgumentError("dot: shape mismatch");
  double acc = 0.0;
  for (std::size_t e = 0; e < a.data().size(); ++e)
    acc += a.data()[e] * b.data()[e];
  return acc;
}

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kernels
}  // namespace mallight
