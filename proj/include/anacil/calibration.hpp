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

#ifndef ANACIL_CALIBRATION_HPP_
#define ANACIL_CALIBRATION_HPP_

// Unified geometric calibration: each branch is put on its unit sphere and
// the two are concatenated as [adapter ; clip], so neither branch can
// dominate the least-squares fit through raw magnitude.

#include <span>
#include <string>

#include "anacil/embedding_store.hpp"
#include "anacil/linalg.hpp"

namespace anacil {

inline constexpr double kDegenerateNorm = 1e-12;

/// Which embedding branches feed the fused feature. Single-branch modes are
/// ablations; the record still carries both.
enum class BranchMode { kBoth, kAdapterOnly, kClipOnly };

inline std::string to_string(BranchMode mode) {
  switch (mode) {
    case BranchMode::kBoth: return "both";
    case BranchMode::kAdapterOnly: return "adapter";
    case BranchMode::kClipOnly: return "clip";
  }
  return "both";
}

inline BranchMode parse_branch_mode(const std::string& s) {
  if (s == "both") return BranchMode::kBoth;
  if (s == "adapter") return BranchMode::kAdapterOnly;
  if (s == "clip") return BranchMode::kClipOnly;
  throw Error(ErrorCode::kConfig, "unknown branch mode '" + s + "' (expected both|adapter|clip)");
}

inline Vector l2_normalize(const Eigen::Ref<const Vector>& v) {
  const double norm = v.norm();
  if (!(norm > kDegenerateNorm)) {
    throw Error(ErrorCode::kDegenerateFeature,
                "vector of length " + std::to_string(v.size()) + " has norm " + std::to_string(norm));
  }
  return v / norm;
}

/// A fused feature: [adapter/|adapter| ; clip/|clip|]. An empty branch is
/// treated as absent.
inline Vector ugc_fuse(const Eigen::Ref<const Vector>& adapter, const Eigen::Ref<const Vector>& clip) {
  if (adapter.size() == 0 && clip.size() == 0) {
    throw Error(ErrorCode::kDimensionMismatch, "both branches absent");
  }
  Vector fused(adapter.size() + clip.size());
  if (adapter.size() > 0) fused.head(adapter.size()) = l2_normalize(adapter);
  if (clip.size() > 0) fused.tail(clip.size()) = l2_normalize(clip);
  return fused;
}

inline std::size_t fused_dim(const DatasetHeader& h, BranchMode mode) {
  switch (mode) {
    case BranchMode::kBoth: return std::size_t{h.adapter_dim} + h.clip_dim;
    case BranchMode::kAdapterOnly: return h.adapter_dim;
    case BranchMode::kClipOnly: return h.clip_dim;
  }
  return 0;
}

inline Vector fuse_record(const FeatureRecord& r, BranchMode mode = BranchMode::kBoth) {
  const Vector empty;
  switch (mode) {
    case BranchMode::kAdapterOnly: return ugc_fuse(to_vector(r.adapter_feature), empty);
    case BranchMode::kClipOnly: return ugc_fuse(empty, to_vector(r.clip_feature));
    case BranchMode::kBoth: break;
  }
  return ugc_fuse(to_vector(r.adapter_feature), to_vector(r.clip_feature));
}

/// Row-wise fusion; row i equals fuse_record(records[i]) exactly.
inline Matrix fuse_batch(std::span<const FeatureRecord> records, BranchMode mode = BranchMode::kBoth) {
  if (records.empty()) return Matrix();
  const Vector first = fuse_record(records.front(), mode);
  Matrix out(static_cast<Eigen::Index>(records.size()), first.size());
  out.row(0) = first.transpose();
  for (std::size_t i = 1; i < records.size(); ++i) {
    const Vector row = fuse_record(records[i], mode);
    if (row.size() != out.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "record " + std::to_string(i) + " fuses to width " +
                                                     std::to_string(row.size()));
    }
    out.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return out;
}

}  // namespace anacil

#endif  // ANACIL_CALIBRATION_HPP_
