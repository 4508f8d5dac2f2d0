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

#ifndef ANACIL_ANACIL_HPP_
#define ANACIL_ANACIL_HPP_

#include "anacil/analytic_core.hpp"
#include "anacil/calibration.hpp"
#include "anacil/cil_harness.hpp"
#include "anacil/class_partition.hpp"
#include "anacil/embedding_store.hpp"
#include "anacil/error.hpp"
#include "anacil/lambda_search.hpp"
#include "anacil/linalg.hpp"
#include "anacil/projection_buffer.hpp"
#include "anacil/random.hpp"
#include "anacil/rigidity_lab.hpp"
#include "anacil/semantic_head.hpp"

#endif  // ANACIL_ANACIL_HPP_
