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

#ifndef ANACIL_ANALYTIC_CORE_HPP_
#define ANACIL_ANALYTIC_CORE_HPP_

// Analytic classifier over buffer features F (n x D_B):
//
//   ridge:  W = (F^T F + lambda I)^-1 F^T Y
//   RLS:    K   = I + F R F^T
//           R' = R - R F^T K^-1 F R
//           W' = W + R' F^T (Y - F W)
//
// R starts at I / lambda and W at 0. The W step uses R' F^T = R F^T K^-1,
// the same quantity without multiplying through the freshly downdated R'.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "anacil/embedding_store.hpp"
#include "anacil/linalg.hpp"

namespace anacil {

inline constexpr std::size_t kDefaultChunkRows = 512;
inline constexpr std::string_view kStateMagic = "VILARLS1";

/// Labels of a batch together with the width of their one-hot encoding.
struct OneHotBatch {
  std::vector<std::uint32_t> labels;
  std::size_t class_count = 0;

  OneHotBatch() = default;
  OneHotBatch(std::vector<std::uint32_t> labels_in, std::size_t classes)
      : labels(std::move(labels_in)), class_count(classes) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= class_count) {
        throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(labels[i]) + " at row " +
                                                     std::to_string(i) + " >= " + std::to_string(class_count));
      }
    }
  }

  std::size_t size() const noexcept { return labels.size(); }

  Matrix dense() const { return dense(0, labels.size()); }

  Matrix dense(std::size_t begin, std::size_t end) const {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(class_count));
    for (std::size_t i = begin; i < end; ++i) y(static_cast<Eigen::Index>(i - begin), labels[i]) = 1.0;
    return y;
  }
};

struct AnalyticState {
  Matrix R;  // (Phi + lambda I)^-1, D_B x D_B
  Matrix W;  // D_B x C
  double lambda = 1.0;
  std::size_t class_count = 0;
  std::uint64_t samples_seen = 0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(R.rows()); }

  bool operator==(const AnalyticState& o) const {
    return lambda == o.lambda && class_count == o.class_count && samples_seen == o.samples_seen &&
           R.rows() == o.R.rows() && W.cols() == o.W.cols() && R == o.R && W == o.W;
  }
};

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kInvalidArgument, "lambda must be a positive finite value, got " + std::to_string(lambda));
  }
}

/// Fresh state: R = I / lambda, W = 0.
inline AnalyticState make_state(std::size_t dim, double lambda, std::size_t class_count = 0) {
  check_lambda(lambda);
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "state dimension must be >= 1");
  AnalyticState s;
  const auto d = static_cast<Eigen::Index>(dim);
  s.R = Matrix::Identity(d, d) / lambda;
  s.W = Matrix::Zero(d, static_cast<Eigen::Index>(class_count));
  s.lambda = lambda;
  s.class_count = class_count;
  return s;
}

namespace detail {

inline Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15)) {
    throw Error(ErrorCode::kSingularSystem, std::string(what) + " is not numerically positive definite");
  }
  return llt;
}

inline void check_ridge_inputs(const Matrix& features, const OneHotBatch& y, double lambda) {
  check_lambda(lambda);
  if (features.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "ridge fit needs at least one row");
  if (static_cast<std::size_t>(features.rows()) != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch, std::to_string(features.rows()) + " feature rows vs " +
                                                   std::to_string(y.size()) + " labels");
  }
  require_finite(features, "ridge features");
}

}  // namespace detail

/// W = (F^T F + lambda I)^-1 F^T Y through the D_B x D_B system.
inline Matrix ridge_fit_primal(const Matrix& features, const OneHotBatch& y, double lambda) {
  detail::check_ridge_inputs(features, y, lambda);
  Matrix gram = features.transpose() * features;
  gram.diagonal().array() += lambda;
  const auto llt = detail::factor_spd(gram, "F^T F + lambda I");
  return llt.solve(features.transpose() * y.dense());
}

/// Same solution as ridge_fit_primal via the n x n system: W = F^T (F F^T + lambda I)^-1 Y.
inline Matrix ridge_fit_dual(const Matrix& features, const OneHotBatch& y, double lambda) {
  detail::check_ridge_inputs(features, y, lambda);
  Matrix gram = features * features.transpose();
  gram.diagonal().array() += lambda;
  const auto llt = detail::factor_spd(gram, "F F^T + lambda I");
  return features.transpose() * llt.solve(y.dense());
}

/// Closed-form ridge solution through whichever Gram matrix is smaller.
inline Matrix ridge_fit(const Matrix& features, const OneHotBatch& y, double lambda) {
  return features.rows() < features.cols() ? ridge_fit_dual(features, y, lambda)
                                            : ridge_fit_primal(features, y, lambda);
}

struct UpdateDiagnostics {
  /// max over absorbed blocks of ||R - R^T||_F / ||R||_F before symmetrization.
  double max_asymmetry = 0.0;
  std::size_t blocks = 0;
};

/// Absorbs one block of rows into `state` in place. Throws before touching
/// the state if the inner system cannot be factored.
inline void rls_absorb_block(AnalyticState& state, const Eigen::Ref<const Matrix>& block,
                             const OneHotBatch& y, std::size_t label_offset, UpdateDiagnostics* diag) {
  const Eigen::Index n = block.rows();
  const Matrix r_ft = state.R * block.transpose();  // D_B x n, equals (F R)^T
  Matrix inner = block * r_ft;
  inner.diagonal().array() += 1.0;
  const auto llt = detail::factor_spd(inner, "I + F R F^T");
  const Matrix gain = llt.solve(r_ft.transpose()).transpose();  // R F^T K^-1

  Matrix residual = y.dense(label_offset, label_offset + static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) residual.row(i).noalias() -= block.row(i) * state.W;

  state.W.noalias() += gain * residual;
  state.R.noalias() -= gain * r_ft.transpose();
  if (diag != nullptr) {
    const double asym = (state.R - state.R.transpose()).norm() / std::max(state.R.norm(), 1e-300);
    diag->max_asymmetry = std::max(diag->max_asymmetry, asym);
    ++diag->blocks;
  }
  state.R = (0.5 * (state.R + state.R.transpose())).eval();
  state.samples_seen += static_cast<std::uint64_t>(n);
}

/// Absorbs `features` (n x D_B) with labels `y` into `state`, `chunk_rows`
/// rows at a time. Labels must already fit the state's class count.
inline void rls_absorb(AnalyticState& state, const Matrix& features, const OneHotBatch& y,
                       std::size_t chunk_rows = kDefaultChunkRows, UpdateDiagnostics* diag = nullptr) {
  if (features.rows() == 0) throw Error(ErrorCode::kInvalidArgument, "RLS update with an empty batch");
  if (static_cast<std::size_t>(features.cols()) != state.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature width " + std::to_string(features.cols()) +
                                                   " vs state dim " + std::to_string(state.dim()));
  }
  if (static_cast<std::size_t>(features.rows()) != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch, std::to_string(features.rows()) + " feature rows vs " +
                                                   std::to_string(y.size()) + " labels");
  }
  for (auto label : y.labels) {
    if (label >= state.class_count) {
      throw Error(ErrorCode::kLabelOutOfRange, "label " + std::to_string(label) + " >= state class count " +
                                                   std::to_string(state.class_count) + "; expand classes first");
    }
  }
  require_finite(features, "RLS features");
  if (chunk_rows == 0) chunk_rows = static_cast<std::size_t>(features.rows());
  const OneHotBatch widened(y.labels, state.class_count);
  const auto n = static_cast<std::size_t>(features.rows());
  for (std::size_t begin = 0; begin < n; begin += chunk_rows) {
    const std::size_t len = std::min(chunk_rows, n - begin);
    rls_absorb_block(state, features.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(len)),
                     widened, begin, diag);
  }
}

/// Value-returning form of rls_absorb.
inline AnalyticState rls_update(AnalyticState state, const Matrix& features, const OneHotBatch& y,
                                std::size_t chunk_rows = kDefaultChunkRows) {
  rls_absorb(state, features, y, chunk_rows);
  return state;
}

/// Widens W with zero columns; R is untouched.
inline void expand_classes_inplace(AnalyticState& state, std::size_t new_class_count) {
  if (new_class_count < state.class_count) {
    throw Error(ErrorCode::kInvalidArgument, "cannot shrink class set from " +
                                                 std::to_string(state.class_count) + " to " +
                                                 std::to_string(new_class_count));
  }
  if (new_class_count == state.class_count) return;
  Matrix widened = Matrix::Zero(state.W.rows(), static_cast<Eigen::Index>(new_class_count));
  widened.leftCols(state.W.cols()) = state.W;
  state.W = std::move(widened);
  state.class_count = new_class_count;
}

inline AnalyticState expand_classes(AnalyticState state, std::size_t new_class_count) {
  expand_classes_inplace(state, new_class_count);
  return state;
}

/// Logits F W. Each row accumulates the rows of W in feature order, so a
/// logit depends only on its own row and column of the inputs.
inline Matrix predict(const AnalyticState& state, const Matrix& features) {
  if (static_cast<std::size_t>(features.cols()) != state.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature width " + std::to_string(features.cols()) +
                                                   " vs state dim " + std::to_string(state.dim()));
  }
  Matrix logits = Matrix::Zero(features.rows(), state.W.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index k = 0; k < features.cols(); ++k) {
      const double a = features(i, k);
      if (a != 0.0) logits.row(i).noalias() += a * state.W.row(k);
    }
  }
  return logits;
}

// ---------------------------------------------------------------------------
// Snapshot: magic | dim u32 | class_count u32 | samples_seen u64 | lambda f64
//           | R f64[dim*dim] | W f64[dim*C], little-endian, row-major.

inline void write_state(const AnalyticState& s, std::ostream& sink) {
  sink.write(kStateMagic.data(), 8);
  detail::put_u32(sink, static_cast<std::uint32_t>(s.dim()));
  detail::put_u32(sink, static_cast<std::uint32_t>(s.class_count));
  detail::put_u64(sink, s.samples_seen);
  detail::put_f64(sink, s.lambda);
  for (Eigen::Index i = 0; i < s.R.size(); ++i) detail::put_f64(sink, s.R.data()[i]);
  for (Eigen::Index i = 0; i < s.W.size(); ++i) detail::put_f64(sink, s.W.data()[i]);
  if (!sink) throw Error(ErrorCode::kIo, "state snapshot write failed");
}

inline AnalyticState read_state(std::istream& source) {
  detail::expect_magic(source, kStateMagic);
  std::uint32_t dim = 0;
  std::uint32_t classes = 0;
  AnalyticState s;
  if (!detail::get_u32(source, dim) || !detail::get_u32(source, classes) ||
      !detail::get_u64(source, s.samples_seen) || !detail::get_f64(source, s.lambda)) {
    throw Error(ErrorCode::kTruncated, "stream ended inside state header");
  }
  s.class_count = classes;
  s.R.resize(dim, dim);
  s.W.resize(dim, classes);
  for (Eigen::Index i = 0; i < s.R.size(); ++i)
    if (!detail::get_f64(source, s.R.data()[i])) throw Error(ErrorCode::kTruncated, "state R");
  for (Eigen::Index i = 0; i < s.W.size(); ++i)
    if (!detail::get_f64(source, s.W.data()[i])) throw Error(ErrorCode::kTruncated, "state W");
  return s;
}

inline void save_state(const std::filesystem::path& path, const AnalyticState& s) {
  auto out = detail::open_out(path);
  write_state(s, out);
}

inline AnalyticState load_state(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_state(in);
}

}  // namespace anacil

#endif  // ANACIL_ANALYTIC_CORE_HPP_
