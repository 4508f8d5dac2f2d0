// Copyright 2026 The anacil Authors
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

#ifndef ANACIL_LINALG_HPP_
#define ANACIL_LINALG_HPP_

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "anacil/error.hpp"

namespace anacil {

// In-core math is always 64-bit; storage formats are 32-bit.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline Vector to_vector(std::span<const float> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i];
  return v;
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::kNonFinite, what);
}

/// ||A - B||_F / ||B||_F, with the denominator floored at the smallest normal.
template <typename A, typename B>
double relative_frobenius(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double denom = b.norm();
  return (a - b).norm() / (denom > 0.0 ? denom : 1.0);
}

}  // namespace anacil

#endif  // ANACIL_LINALG_HPP_
