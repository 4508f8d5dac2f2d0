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

// Generates a small drifting stream in memory, learns it task by task and
// prints the accuracy after each stage, with and without the semantic head.

#include <cstdio>
#include <numbers>

#include "anacil/anacil.hpp"

int main() {
  anacil::SyntheticStreamSpec spec;
  spec.class_count = 20;
  spec.classes_per_task = 5;
  spec.drift = 20.0 * std::numbers::pi / 180.0;
  const auto syn = anacil::generate_stream(spec);

  const auto stream = anacil::split_stream(syn.train, syn.test, syn.task_classes.size(), spec.seed);
  const anacil::ProjectionBuffer buffer(spec.seed, anacil::fused_dim(syn.train.header, anacil::BranchMode::kBoth),
                                        1024);
  const anacil::PrototypeBank bank = anacil::build_prototypes(syn.bank);

  for (bool cse : {false, true}) {
    anacil::RunSettings settings;
    settings.seed = spec.seed;
    settings.cse_enabled = cse;
    const auto report = anacil::run_stream(stream, buffer, &bank, settings);
    std::printf("cse=%s lambda=%g\n", cse ? "on" : "off", report.config.lambda);
    for (const auto& s : report.stages)
      std::printf("  task %zu: %zu classes, accuracy %.2f%%\n", s.task, s.classes_seen, s.accuracy);
    std::printf("  last %.2f%%, average %.2f%%\n", report.last_accuracy, report.average_accuracy);
  }
  return 0;
}
