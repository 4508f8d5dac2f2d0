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

#ifndef ANACIL_LAMBDA_SEARCH_HPP_
#define ANACIL_LAMBDA_SEARCH_HPP_

// Leave-one-out selection of the ridge regularizer on the base task.
//
// With hat matrix H = F (F^T F + lambda I)^-1 F^T the leave-one-out
// prediction of sample i is (yhat_i - h_ii y_i) / (1 - h_ii). In the dual
// form G = F F^T + lambda I this simplifies to y_i - (G^-1 Y)_i / (G^-1)_ii,
// because I - H = lambda G^-1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "anacil/analytic_core.hpp"
#include "anacil/random.hpp"

namespace anacil {

inline constexpr double kDegenerateLeverage = 1e-10;
inline constexpr std::size_t kDefaultLoocvCap = 10000;

class LambdaGrid {
 public:
  LambdaGrid() : LambdaGrid(decades(-8, 0)) {}

  explicit LambdaGrid(std::vector<double> candidates) : candidates_(std::move(candidates)) {
    if (candidates_.empty()) throw Error(ErrorCode::kInvalidArgument, "empty lambda grid");
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      if (!(candidates_[i] > 0.0) || !std::isfinite(candidates_[i])) {
        throw Error(ErrorCode::kInvalidArgument, "lambda candidates must be positive and finite");
      }
      if (i > 0 && !(candidates_[i] > candidates_[i - 1])) {
        throw Error(ErrorCode::kInvalidArgument, "lambda grid must be strictly increasing");
      }
    }
  }

  /// 10^lo, 10^(lo+1), ..., 10^hi.
  static std::vector<double> decades(int lo, int hi) {
    std::vector<double> out;
    for (int e = lo; e <= hi; ++e) out.push_back(std::pow(10.0, e));
    return out;
  }

  /// Accepts "1e-8..1e0" (every decade in between) or a comma-separated list.
  static LambdaGrid parse(const std::string& text) {
    const auto dots = text.find("..");
    if (dots != std::string::npos) {
      const double lo = std::stod(text.substr(0, dots));
      const double hi = std::stod(text.substr(dots + 2));
      if (!(lo > 0.0) || !(hi >= lo)) throw Error(ErrorCode::kConfig, "bad lambda range '" + text + "'");
      return LambdaGrid(decades(static_cast<int>(std::lround(std::log10(lo))),
                                static_cast<int>(std::lround(std::log10(hi)))));
    }
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) values.push_back(std::stod(item));
    }
    return LambdaGrid(std::move(values));
  }

  const std::vector<double>& candidates() const noexcept { return candidates_; }
  std::size_t size() const noexcept { return candidates_.size(); }

 private:
  std::vector<double> candidates_;
};

/// Index of the largest entry; ties go to the lower index.
template <typename Row>
std::size_t argmax_lowest(const Row& row) {
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j)
    if (row[j] > row[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(j);
  return best;
}

struct LoocvResult {
  double accuracy = 0.0;
  Matrix loo_predictions;                 // n x C leave-one-out outputs
  std::vector<std::uint32_t> predicted;   // argmax per sample
  std::vector<std::size_t> excluded;      // samples with leverage ~ 1
};

inline LoocvResult loocv_score(const Matrix& features, const OneHotBatch& y, double lambda) {
  check_lambda(lambda);
  const Eigen::Index n = features.rows();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "LOOCV needs at least two samples");
  if (static_cast<std::size_t>(n) != y.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature rows vs labels");
  }
  require_finite(features, "LOOCV features");
  const Matrix targets = y.dense();

  LoocvResult out;
  out.loo_predictions.resize(n, targets.cols());
  Vector one_minus_h(n);
  Matrix loo_residual(n, targets.cols());

  if (features.rows() < features.cols()) {
    Matrix gram = features * features.transpose();
    gram.diagonal().array() += lambda;
    const auto llt = detail::factor_spd(gram, "F F^T + lambda I");
    const Matrix g_inv = llt.solve(Matrix::Identity(n, n));
    const Matrix alpha = g_inv * targets;
    for (Eigen::Index i = 0; i < n; ++i) {
      one_minus_h[i] = lambda * g_inv(i, i);
      loo_residual.row(i) = alpha.row(i) / g_inv(i, i);
    }
  } else {
    Matrix gram = features.transpose() * features;
    gram.diagonal().array() += lambda;
    const auto llt = detail::factor_spd(gram, "F^T F + lambda I");
    const Matrix b = llt.solve(features.transpose());  // D x n
    const Matrix fitted = features * (b * targets);
    for (Eigen::Index i = 0; i < n; ++i) {
      one_minus_h[i] = 1.0 - features.row(i).dot(b.col(i));
      loo_residual.row(i) = (targets.row(i) - fitted.row(i)) / one_minus_h[i];
    }
  }

  std::size_t correct = 0;
  out.predicted.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.loo_predictions.row(i) = targets.row(i) - loo_residual.row(i);
    out.predicted[static_cast<std::size_t>(i)] =
        static_cast<std::uint32_t>(argmax_lowest(out.loo_predictions.row(i)));
    if (!(one_minus_h[i] > kDegenerateLeverage)) {
      out.excluded.push_back(static_cast<std::size_t>(i));
      continue;
    }
    if (out.predicted[static_cast<std::size_t>(i)] == y.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  const std::size_t scored = static_cast<std::size_t>(n) - out.excluded.size();
  out.accuracy = scored > 0 ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0;
  return out;
}

struct LambdaScore {
  double lambda = 0.0;
  double accuracy = 0.0;
  std::size_t excluded = 0;
};

struct LambdaSelection {
  double lambda = 0.0;
  std::vector<LambdaScore> scores;  // grid order
  std::size_t samples_used = 0;
  bool subsampled = false;
};

/// Index of the best score; ties resolve to the largest lambda.
inline std::size_t best_candidate(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw Error(ErrorCode::kInvalidArgument, "no candidate scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < accuracies.size(); ++i)
    if (accuracies[i] >= accuracies[best]) best = i;
  return best;
}

struct LambdaSearchOptions {
  std::size_t sample_cap = kDefaultLoocvCap;
  std::uint64_t subsample_seed = 0;
};

inline LambdaSelection select_lambda(const Matrix& features, const OneHotBatch& y, const LambdaGrid& grid,
                                     const LambdaSearchOptions& options = {}) {
  LambdaSelection sel;
  const Matrix* data = &features;
  const OneHotBatch* labels = &y;
  Matrix sub_features;
  OneHotBatch sub_labels;
  const auto n = static_cast<std::size_t>(features.rows());
  if (options.sample_cap >= 2 && n > options.sample_cap) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(options.subsample_seed);
    rng.shuffle(order);
    order.resize(options.sample_cap);
    std::sort(order.begin(), order.end());
    sub_features.resize(static_cast<Eigen::Index>(order.size()), features.cols());
    std::vector<std::uint32_t> picked;
    picked.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      sub_features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(order[i]));
      picked.push_back(y.labels[order[i]]);
    }
    sub_labels = OneHotBatch(std::move(picked), y.class_count);
    data = &sub_features;
    labels = &sub_labels;
    sel.subsampled = true;
  }
  sel.samples_used = static_cast<std::size_t>(data->rows());

  std::vector<double> accuracies;
  for (double lambda : grid.candidates()) {
    const auto r = loocv_score(*data, *labels, lambda);
    sel.scores.push_back({lambda, r.accuracy, r.excluded.size()});
    accuracies.push_back(r.accuracy);
  }
  sel.lambda = grid.candidates()[best_candidate(accuracies)];
  return sel;
}

}  // namespace anacil

#endif  // ANACIL_LAMBDA_SEARCH_HPP_
