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

// Dense kernels behind the diffusion operators. Each kernel has a serial
// reference in `kernels::serial` and an OpenMP version in `kernels::omp`;
// the unqualified names dispatch to the OpenMP version, which falls back to
// serial execution below a work threshold. Both variants compute every output
// element with the same summation order, so results agree bit-for-bit.

#include <span>

#include "mallight/matrix.hpp"

namespace mallight::kernels {

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
// out = sum_k weights[k] * terms[k]; all terms share a shape.
Matrix weighted_sum(std::span<const Matrix> terms,
                    std::span<const double> weights);
// Zero every column j of m with mask[j] == 0.
Matrix mask_columns(const Matrix& m, std::span<const double> mask);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
// a^T * b
Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b);
}  // namespace serial

namespace omp {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix weighted_sum(std::span<const Matrix> terms,
                    std::span<const double> weights);
Matrix mask_columns(const Matrix& m, std::span<const double> mask);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
Matrix matmul_transposed_lhs(const Matrix& a, const Matrix& b);
}  // namespace omp

using omp::matmul;
using omp::matmul_transposed_lhs;
using omp::mask_columns;
using omp::matvec;
using omp::weighted_sum;

// Frobenius inner product <a, b>.
double dot(const Matrix& a, const Matrix& b);

// Number of threads the OpenMP kernels may use (1 without OpenMP).
int max_threads();

}  // namespace mallight::kernels
