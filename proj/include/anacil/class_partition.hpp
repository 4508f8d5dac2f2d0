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

#ifndef ANACIL_CLASS_PARTITION_HPP_
#define ANACIL_CLASS_PARTITION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "anacil/error.hpp"
#include "anacil/random.hpp"

namespace anacil {

/// Shuffles `class_ids` with `seed`, then cuts the permutation into
/// `task_count` contiguous groups. The first (C mod T) groups get one extra
/// class, so group sizes differ by at most one.
inline std::vector<std::vector<std::uint32_t>> partition_classes(std::vector<std::uint32_t> class_ids,
                                                                 std::size_t task_count, std::uint64_t seed) {
  if (task_count == 0) throw Error(ErrorCode::kInvalidArgument, "task count must be >= 1");
  if (task_count > class_ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, std::to_string(task_count) + " tasks for " +
                                                 std::to_string(class_ids.size()) + " classes");
  }
  Rng rng(seed);
  rng.shuffle(class_ids);
  const std::size_t base = class_ids.size() / task_count;
  const std::size_t extra = class_ids.size() % task_count;
  std::vector<std::vector<std::uint32_t>> groups(task_count);
  std::size_t pos = 0;
  for (std::size_t t = 0; t < task_count; ++t) {
    const std::size_t len = base + (t < extra ? 1 : 0);
    groups[t].assign(class_ids.begin() + static_cast<std::ptrdiff_t>(pos),
                     class_ids.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return groups;
}

}  // namespace anacil

#endif  // ANACIL_CLASS_PARTITION_HPP_
