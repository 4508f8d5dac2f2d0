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

#ifndef ANACIL_SEMANTIC_HEAD_HPP_
#define ANACIL_SEMANTIC_HEAD_HPP_

// Candidate semantic enhancement: the analytic logits nominate the top-K
// classes, each candidate is scored by the cosine between the image's
// universal embedding and its text prototype, every other class scores 0,
// and the two score vectors are added.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "anacil/calibration.hpp"
#include "anacil/embedding_store.hpp"
#include "anacil/linalg.hpp"

namespace anacil {

inline constexpr std::size_t kDefaultTopK = 5;

/// Per-class mean of the template embeddings (raw, not normalized).
struct PrototypeBank {
  Matrix means;  // C x D_C
  std::size_t template_count = 0;
  std::vector<std::string> class_names;

  std::size_t class_count() const noexcept { return static_cast<std::size_t>(means.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(means.cols()); }

  /// Bank restricted to `ids`, re-indexed 0..ids.size()-1 in the given order.
  PrototypeBank subset(std::span<const std::uint32_t> ids) const {
    PrototypeBank out;
    out.template_count = template_count;
    out.means.resize(static_cast<Eigen::Index>(ids.size()), means.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] >= class_count()) {
        throw Error(ErrorCode::kLabelOutOfRange, "class " + std::to_string(ids[i]) + " not in bank of " +
                                                     std::to_string(class_count()));
      }
      out.means.row(static_cast<Eigen::Index>(i)) = means.row(ids[i]);
      if (!class_names.empty()) out.class_names.push_back(class_names[ids[i]]);
    }
    return out;
  }
};

inline PrototypeBank build_prototypes(const PrototypeBankFile& file) {
  validate_bank(file);
  if (file.template_count == 0) throw Error(ErrorCode::kInvalidArgument, "bank has no templates");
  PrototypeBank bank;
  bank.template_count = file.template_count;
  bank.class_names = file.class_names;
  bank.means = Matrix::Zero(file.class_count, file.dim);
  for (std::size_t c = 0; c < file.class_count; ++c) {
    auto row = bank.means.row(static_cast<Eigen::Index>(c));
    for (std::size_t p = 0; p < file.template_count; ++p) row += to_vector(file.prototype(c, p)).transpose();
    row /= static_cast<double>(file.template_count);
    if (!(row.norm() > 0.0)) {
      throw Error(ErrorCode::kZeroNorm, "templates of class " + std::to_string(c) + " average to zero");
    }
  }
  return bank;
}

struct CandidateSet {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // best first

  bool contains(std::uint32_t c) const {
    return std::find(indices.begin(), indices.end(), c) != indices.end();
  }
};

/// The min(K, C) largest logits; equal logits rank the lower class id first.
inline CandidateSet top_k(const Eigen::Ref<const Vector>& logits, std::size_t k) {
  if (logits.size() == 0) throw Error(ErrorCode::kInvalidArgument, "top-K of empty logits");
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "K must be >= 1");
  std::vector<std::uint32_t> order(static_cast<std::size_t>(logits.size()));
  std::iota(order.begin(), order.end(), 0U);
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  order.resize(take);
  return CandidateSet{k, std::move(order)};
}

/// Sparse refinement scores: cosine(clip, prototype_c) for c in the
/// candidate set, exactly 0 elsewhere. Length equals the bank's class count.
inline Vector cse_scores(const Eigen::Ref<const Vector>& clip_feature, const PrototypeBank& bank,
                         const CandidateSet& candidates) {
  if (static_cast<std::size_t>(clip_feature.size()) != bank.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "clip feature width " + std::to_string(clip_feature.size()) +
                                                   " vs prototype dim " + std::to_string(bank.dim()));
  }
  const Vector query = l2_normalize(clip_feature);
  Vector scores = Vector::Zero(static_cast<Eigen::Index>(bank.class_count()));
  for (auto c : candidates.indices) {
    if (c >= bank.class_count()) {
      throw Error(ErrorCode::kLabelOutOfRange, "candidate " + std::to_string(c) + " outside bank");
    }
    const auto proto = bank.means.row(c);
    scores[c] = query.dot(proto.transpose()) / proto.norm();
  }
  return scores;
}

/// Multipliers on the two score vectors. 1/1 is the plain sum.
struct FusionWeights {
  double analytic = 1.0;
  double semantic = 1.0;
};

struct FusedPrediction {
  Vector logits;
  std::uint32_t predicted = 0;
};

inline FusedPrediction fuse_predictions(const Eigen::Ref<const Vector>& analytic,
                                        const Eigen::Ref<const Vector>& semantic,
                                        FusionWeights weights = {}) {
  if (analytic.size() != semantic.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "analytic logits " + std::to_string(analytic.size()) +
                                                   " vs semantic scores " + std::to_string(semantic.size()));
  }
  if (analytic.size() == 0) throw Error(ErrorCode::kInvalidArgument, "empty logits");
  FusedPrediction out;
  if (weights.analytic == 1.0 && weights.semantic == 1.0) {
    out.logits = analytic + semantic;
  } else {
    out.logits = weights.analytic * analytic + weights.semantic * semantic;
  }
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < out.logits.size(); ++j)
    if (out.logits[j] > out.logits[best]) best = j;
  out.predicted = static_cast<std::uint32_t>(best);
  return out;
}

}  // namespace anacil

#endif  // ANACIL_SEMANTIC_HEAD_HPP_
