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

#ifndef ANACIL_PROJECTION_BUFFER_HPP_
#define ANACIL_PROJECTION_BUFFER_HPP_

#include <cstdint>
#include <string>

#include "anacil/linalg.hpp"
#include "anacil/random.hpp"

namespace anacil {

inline constexpr std::size_t kDefaultBufferDim = 16384;

/// Value of buffer entry (row, col). Entries are a counter-based N(0, 1)
/// stream in row-major order, so any entry can be regenerated on its own.
inline double buffer_entry(std::uint64_t seed, std::size_t row, std::size_t col, std::size_t buffer_dim) {
  return counter_normal(seed, static_cast<std::uint64_t>(row) * buffer_dim + col);
}

/// Frozen random expansion F -> max(0, F * W) from input_dim to buffer_dim.
/// Not serialized: it is regenerated from (seed, input_dim, buffer_dim).
class ProjectionBuffer {
 public:
  ProjectionBuffer(std::uint64_t seed, std::size_t input_dim, std::size_t buffer_dim)
      : seed_(seed), weights_(make_weights(seed, input_dim, buffer_dim)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(weights_.rows()); }
  std::size_t buffer_dim() const noexcept { return static_cast<std::size_t>(weights_.cols()); }
  const Matrix& weights() const noexcept { return weights_; }

  /// ReLU(f * W) for a single row. Accumulates rows of W in input order so
  /// the result does not depend on how callers batch their inputs.
  RowVector project(const Eigen::Ref<const RowVector>& f) const {
    check_input(f);
    RowVector out = RowVector::Zero(weights_.cols());
    for (Eigen::Index k = 0; k < weights_.rows(); ++k) {
      const double a = f[k];
      if (a != 0.0) out.noalias() += a * weights_.row(k);
    }
    return out.cwiseMax(0.0);
  }

  /// Row-wise projection; row i is bit-identical to project(batch.row(i)).
  Matrix project_batch(const Matrix& batch) const {
    if (batch.cols() != weights_.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "batch width " + std::to_string(batch.cols()) +
                                                     " vs buffer input " + std::to_string(weights_.rows()));
    }
    Matrix out(batch.rows(), weights_.cols());
    for (Eigen::Index i = 0; i < batch.rows(); ++i) out.row(i) = project(RowVector(batch.row(i)));
    return out;
  }

 private:
  static Matrix make_weights(std::uint64_t seed, std::size_t input_dim, std::size_t buffer_dim) {
    if (input_dim == 0 || buffer_dim == 0) {
      throw Error(ErrorCode::kInvalidArgument, "projection buffer dims must be >= 1");
    }
    Matrix w(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(buffer_dim));
    for (std::size_t r = 0; r < input_dim; ++r)
      for (std::size_t c = 0; c < buffer_dim; ++c)
        w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = buffer_entry(seed, r, c, buffer_dim);
    return w;
  }

  void check_input(const Eigen::Ref<const RowVector>& f) const {
    if (f.size() != weights_.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "feature width " + std::to_string(f.size()) +
                                                     " vs buffer input " + std::to_string(weights_.rows()));
    }
    require_finite(f, "projection input");
  }

  std::uint64_t seed_;
  Matrix weights_;
};

inline ProjectionBuffer make_buffer(std::uint64_t seed, std::size_t input_dim, std::size_t buffer_dim) {
  return ProjectionBuffer(seed, input_dim, buffer_dim);
}

}  // namespace anacil

#endif  // ANACIL_PROJECTION_BUFFER_HPP_
