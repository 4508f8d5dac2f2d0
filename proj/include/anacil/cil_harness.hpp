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

#ifndef ANACIL_CIL_HARNESS_HPP_
#define ANACIL_CIL_HARNESS_HPP_

// Class-incremental runs over embedding files. Per task: widen the
// classifier, fuse and project the task's training rows chunk by chunk,
// absorb them with RLS, then evaluate on the test rows of every class seen
// so far.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anacil/analytic_core.hpp"
#include "anacil/calibration.hpp"
#include "anacil/class_partition.hpp"
#include "anacil/embedding_store.hpp"
#include "anacil/lambda_search.hpp"
#include "anacil/projection_buffer.hpp"
#include "anacil/semantic_head.hpp"

namespace anacil {

inline const std::vector<std::uint64_t> kDefaultSeeds = {1993, 1, 56, 254, 602};

enum class SplitMode { kShuffle, kTaskId };

inline std::string to_string(SplitMode m) { return m == SplitMode::kShuffle ? "shuffle" : "task_id"; }

struct HarnessConfig {
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path bank_path;
  std::filesystem::path output_dir = "out";
  std::size_t tasks = 10;
  SplitMode split = SplitMode::kShuffle;
  std::vector<std::uint64_t> seeds = kDefaultSeeds;
  std::size_t buffer_dim = kDefaultBufferDim;
  std::optional<std::uint64_t> buffer_seed;  // unset: the run seed
  std::optional<double> lambda;              // unset: LOOCV on the base task
  LambdaGrid lambda_grid;
  std::size_t loocv_cap = kDefaultLoocvCap;
  bool cse_enabled = true;
  std::size_t cse_k = kDefaultTopK;
  FusionWeights fusion;
  std::size_t chunk_rows = kDefaultChunkRows;
  BranchMode branches = BranchMode::kBoth;
  bool checkpoint = true;
  bool resume = false;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::kConfig, key + ": expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw Error(ErrorCode::kConfig, key + ": cannot parse '" + v + "'");
  return out;
}

}  // namespace detail

/// Parses a flat `key = value` file. '#' starts a comment. Relative paths are
/// resolved against `base_dir`.
inline HarnessConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {}) {
  HarnessConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key == "train") cfg.train_path = path_of(value);
    else if (key == "test") cfg.test_path = path_of(value);
    else if (key == "bank") cfg.bank_path = value.empty() ? std::filesystem::path() : path_of(value);
    else if (key == "out") cfg.output_dir = path_of(value);
    else if (key == "tasks") cfg.tasks = detail::parse_number<std::size_t>(key, value);
    else if (key == "split") {
      if (value == "shuffle") cfg.split = SplitMode::kShuffle;
      else if (value == "task_id") cfg.split = SplitMode::kTaskId;
      else throw Error(ErrorCode::kConfig, "split: expected shuffle|task_id");
    } else if (key == "seed" || key == "seeds") {
      cfg.seeds.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) cfg.seeds.push_back(detail::parse_number<std::uint64_t>(key, item));
      }
      if (cfg.seeds.empty()) throw Error(ErrorCode::kConfig, "seeds: empty list");
    } else if (key == "buffer.dim") cfg.buffer_dim = detail::parse_number<std::size_t>(key, value);
    else if (key == "buffer.seed") cfg.buffer_seed = detail::parse_number<std::uint64_t>(key, value);
    else if (key == "lambda") {
      if (value == "auto") cfg.lambda.reset();
      else cfg.lambda = detail::parse_number<double>(key, value);
    } else if (key == "lambda.grid") cfg.lambda_grid = LambdaGrid::parse(value);
    else if (key == "lambda.cap") cfg.loocv_cap = detail::parse_number<std::size_t>(key, value);
    else if (key == "cse.enabled") cfg.cse_enabled = detail::parse_bool(key, value);
    else if (key == "cse.k") cfg.cse_k = detail::parse_number<std::size_t>(key, value);
    else if (key == "cse.weight.analytic") cfg.fusion.analytic = detail::parse_number<double>(key, value);
    else if (key == "cse.weight.semantic") cfg.fusion.semantic = detail::parse_number<double>(key, value);
    else if (key == "chunk") cfg.chunk_rows = detail::parse_number<std::size_t>(key, value);
    else if (key == "branches") cfg.branches = parse_branch_mode(value);
    else if (key == "checkpoint") cfg.checkpoint = detail::parse_bool(key, value);
    else if (key == "resume") cfg.resume = detail::parse_bool(key, value);
    else throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (cfg.lambda && !(*cfg.lambda > 0.0)) throw Error(ErrorCode::kConfig, "lambda must be > 0 or auto");
  if (cfg.cse_k == 0) throw Error(ErrorCode::kConfig, "cse.k must be >= 1");
  if (cfg.chunk_rows == 0) throw Error(ErrorCode::kConfig, "chunk must be >= 1");
  return cfg;
}

inline HarnessConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Task streams

struct Task {
  std::vector<std::uint32_t> classes;
  std::vector<std::size_t> train_rows;  // indices into TaskStream::train
  std::vector<std::size_t> test_rows;   // indices into TaskStream::test
};

/// Tasks over two datasets held by reference; the datasets must outlive it.
struct TaskStream {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  std::vector<Task> tasks;
  std::uint64_t shuffle_seed = 0;

  /// Union of the classes of tasks 0..t, in task order.
  std::vector<std::uint32_t> seen_classes(std::size_t t) const {
    std::vector<std::uint32_t> out;
    for (std::size_t i = 0; i <= t && i < tasks.size(); ++i)
      out.insert(out.end(), tasks[i].classes.begin(), tasks[i].classes.end());
    return out;
  }
};

namespace detail {

inline void assign_rows(TaskStream& stream) {
  std::map<std::uint32_t, std::size_t> owner;
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    for (auto c : stream.tasks[t].classes) {
      if (!owner.emplace(c, t).second) {
        throw Error(ErrorCode::kInvalidArgument, "class " + std::to_string(c) + " appears in two tasks");
      }
    }
  }
  for (std::size_t i = 0; i < stream.train->records.size(); ++i)
    stream.tasks[owner.at(stream.train->records[i].label)].train_rows.push_back(i);
  for (std::size_t i = 0; i < stream.test->records.size(); ++i) {
    const auto it = owner.find(stream.test->records[i].label);
    if (it == owner.end()) {
      throw Error(ErrorCode::kLabelOutOfRange, "test label " + std::to_string(stream.test->records[i].label) +
                                                   " has no training data");
    }
    stream.tasks[it->second].test_rows.push_back(i);
  }
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    if (stream.tasks[t].train_rows.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "task " + std::to_string(t) + " has no training records");
    }
  }
}

inline void check_compatible(const Dataset& train, const Dataset& test) {
  if (train.header.adapter_dim != test.header.adapter_dim || train.header.clip_dim != test.header.clip_dim) {
    throw Error(ErrorCode::kDimensionMismatch, "train and test feature dims differ");
  }
}

}  // namespace detail

/// Shuffles the training classes with `shuffle_seed` and cuts them into
/// `task_count` groups (earlier tasks take the remainder).
inline TaskStream split_stream(const Dataset& train, const Dataset& test, std::size_t task_count,
                               std::uint64_t shuffle_seed) {
  detail::check_compatible(train, test);
  std::set<std::uint32_t> labels;
  for (const auto& r : train.records) labels.insert(r.label);
  TaskStream stream;
  stream.train = &train;
  stream.test = &test;
  stream.shuffle_seed = shuffle_seed;
  for (auto& group : partition_classes({labels.begin(), labels.end()}, task_count, shuffle_seed))
    stream.tasks.push_back(Task{std::move(group), {}, {}});
  detail::assign_rows(stream);
  return stream;
}

/// Tasks taken from the records' task_id field, in increasing id order.
inline TaskStream stream_from_task_ids(const Dataset& train, const Dataset& test) {
  detail::check_compatible(train, test);
  std::map<std::uint32_t, std::set<std::uint32_t>> by_task;
  for (const auto& r : train.records) by_task[r.task_id].insert(r.label);
  TaskStream stream;
  stream.train = &train;
  stream.test = &test;
  for (auto& [id, classes] : by_task) stream.tasks.push_back(Task{{classes.begin(), classes.end()}, {}, {}});
  if (stream.tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  detail::assign_rows(stream);
  return stream;
}

// ---------------------------------------------------------------------------
// Reports

struct StageResult {
  std::size_t task = 0;
  std::size_t classes_seen = 0;
  std::size_t test_samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // percent

  bool operator==(const StageResult&) const = default;
};

struct RunEcho {
  std::uint64_t seed = 0;
  std::uint64_t buffer_seed = 0;
  std::size_t buffer_dim = 0;
  double lambda = 0.0;
  bool lambda_auto = false;
  std::vector<LambdaScore> lambda_scores;
  std::size_t loocv_samples = 0;
  bool loocv_subsampled = false;
  bool cse_enabled = false;
  std::size_t cse_k = 0;
  FusionWeights fusion;
  std::size_t chunk_rows = 0;
  std::size_t tasks = 0;
  std::string branches;
  std::string split;

  bool operator==(const RunEcho& o) const {
    auto same_scores = [&] {
      if (lambda_scores.size() != o.lambda_scores.size()) return false;
      for (std::size_t i = 0; i < lambda_scores.size(); ++i) {
        if (lambda_scores[i].lambda != o.lambda_scores[i].lambda ||
            lambda_scores[i].accuracy != o.lambda_scores[i].accuracy ||
            lambda_scores[i].excluded != o.lambda_scores[i].excluded)
          return false;
      }
      return true;
    };
    return seed == o.seed && buffer_seed == o.buffer_seed && buffer_dim == o.buffer_dim && lambda == o.lambda &&
           lambda_auto == o.lambda_auto && same_scores() && loocv_samples == o.loocv_samples &&
           loocv_subsampled == o.loocv_subsampled && cse_enabled == o.cse_enabled && cse_k == o.cse_k &&
           fusion.analytic == o.fusion.analytic && fusion.semantic == o.fusion.semantic &&
           chunk_rows == o.chunk_rows && tasks == o.tasks && branches == o.branches && split == o.split;
  }
};

struct MetricsReport {
  std::vector<StageResult> stages;
  double last_accuracy = 0.0;     // A_T
  double average_accuracy = 0.0;  // mean of per-stage accuracies
  double learn_seconds = 0.0;
  double infer_seconds = 0.0;
  RunEcho config;

  /// Recomputes A_T and the average from `stages`.
  void finalize() {
    double sum = 0.0;
    for (const auto& s : stages) sum += s.accuracy;
    average_accuracy = stages.empty() ? 0.0 : sum / static_cast<double>(stages.size());
    last_accuracy = stages.empty() ? 0.0 : stages.back().accuracy;
  }

  bool same_results(const MetricsReport& o) const {
    return stages == o.stages && last_accuracy == o.last_accuracy && average_accuracy == o.average_accuracy &&
           config == o.config;
  }

  bool operator==(const MetricsReport& o) const {
    return same_results(o) && learn_seconds == o.learn_seconds && infer_seconds == o.infer_seconds;
  }
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : r.stages) {
    stages.push_back({{"task", s.task},
                      {"classes_seen", s.classes_seen},
                      {"test_samples", s.test_samples},
                      {"correct", s.correct},
                      {"accuracy", s.accuracy}});
  }
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : r.config.lambda_scores)
    scores.push_back({{"lambda", s.lambda}, {"accuracy", s.accuracy}, {"excluded", s.excluded}});
  const auto& c = r.config;
  return {{"stages", stages},
          {"last_accuracy", r.last_accuracy},
          {"average_accuracy", r.average_accuracy},
          {"learn_seconds", r.learn_seconds},
          {"infer_seconds", r.infer_seconds},
          {"config",
           {{"seed", c.seed},
            {"buffer_seed", c.buffer_seed},
            {"buffer_dim", c.buffer_dim},
            {"lambda", c.lambda},
            {"lambda_auto", c.lambda_auto},
            {"lambda_scores", scores},
            {"loocv_samples", c.loocv_samples},
            {"loocv_subsampled", c.loocv_subsampled},
            {"cse_enabled", c.cse_enabled},
            {"cse_k", c.cse_k},
            {"fusion_weight_analytic", c.fusion.analytic},
            {"fusion_weight_semantic", c.fusion.semantic},
            {"chunk_rows", c.chunk_rows},
            {"tasks", c.tasks},
            {"branches", c.branches},
            {"split", c.split}}}};
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  for (const auto& s : j.at("stages")) {
    r.stages.push_back(StageResult{s.at("task").get<std::size_t>(), s.at("classes_seen").get<std::size_t>(),
                                   s.at("test_samples").get<std::size_t>(), s.at("correct").get<std::size_t>(),
                                   s.at("accuracy").get<double>()});
  }
  r.last_accuracy = j.at("last_accuracy").get<double>();
  r.average_accuracy = j.at("average_accuracy").get<double>();
  r.learn_seconds = j.at("learn_seconds").get<double>();
  r.infer_seconds = j.at("infer_seconds").get<double>();
  const auto& c = j.at("config");
  r.config.seed = c.at("seed").get<std::uint64_t>();
  r.config.buffer_seed = c.at("buffer_seed").get<std::uint64_t>();
  r.config.buffer_dim = c.at("buffer_dim").get<std::size_t>();
  r.config.lambda = c.at("lambda").get<double>();
  r.config.lambda_auto = c.at("lambda_auto").get<bool>();
  for (const auto& s : c.at("lambda_scores")) {
    r.config.lambda_scores.push_back(
        {s.at("lambda").get<double>(), s.at("accuracy").get<double>(), s.at("excluded").get<std::size_t>()});
  }
  r.config.loocv_samples = c.at("loocv_samples").get<std::size_t>();
  r.config.loocv_subsampled = c.at("loocv_subsampled").get<bool>();
  r.config.cse_enabled = c.at("cse_enabled").get<bool>();
  r.config.cse_k = c.at("cse_k").get<std::size_t>();
  r.config.fusion.analytic = c.at("fusion_weight_analytic").get<double>();
  r.config.fusion.semantic = c.at("fusion_weight_semantic").get<double>();
  r.config.chunk_rows = c.at("chunk_rows").get<std::size_t>();
  r.config.tasks = c.at("tasks").get<std::size_t>();
  r.config.branches = c.at("branches").get<std::string>();
  r.config.split = c.at("split").get<std::string>();
  return r;
}

/// CSV of per-stage accuracies: a header line plus one row per stage.
inline std::string stages_csv(const MetricsReport& r) {
  std::ostringstream out;
  out << "task,classes_seen,test_samples,correct,accuracy\n";
  out.precision(17);
  for (const auto& s : r.stages)
    out << s.task << ',' << s.classes_seen << ',' << s.test_samples << ',' << s.correct << ',' << s.accuracy << '\n';
  return out.str();
}

/// Writes report.json and stages.csv into `dir`.
inline void emit_report(const MetricsReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream json(dir / "report.json");
  std::ofstream csv(dir / "stages.csv");
  if (!json || !csv) throw Error(ErrorCode::kIo, "cannot write report into '" + dir.string() + "'");
  json << to_json(r).dump(2) << '\n';
  csv << stages_csv(r);
  if (!json || !csv) throw Error(ErrorCode::kIo, "report write failed");
}

// ---------------------------------------------------------------------------
// Learning and inference

/// Everything a run needs besides the stream itself.
struct RunSettings {
  std::optional<double> lambda;  // unset: LOOCV on task 0
  LambdaGrid lambda_grid;
  std::size_t loocv_cap = kDefaultLoocvCap;
  bool cse_enabled = false;
  std::size_t cse_k = kDefaultTopK;
  FusionWeights fusion;
  std::size_t chunk_rows = kDefaultChunkRows;
  BranchMode branches = BranchMode::kBoth;
  SplitMode split = SplitMode::kShuffle;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no snapshots
  bool resume = false;
};

inline RunSettings settings_from(const HarnessConfig& cfg, std::uint64_t seed) {
  RunSettings s;
  s.lambda = cfg.lambda;
  s.lambda_grid = cfg.lambda_grid;
  s.loocv_cap = cfg.loocv_cap;
  s.cse_enabled = cfg.cse_enabled;
  s.cse_k = cfg.cse_k;
  s.fusion = cfg.fusion;
  s.chunk_rows = cfg.chunk_rows;
  s.branches = cfg.branches;
  s.split = cfg.split;
  s.seed = seed;
  s.resume = cfg.resume;
  return s;
}

/// Buffer features of `rows` of `ds`: fuse, then project.
inline Matrix buffer_features(const Dataset& ds, std::span<const std::size_t> rows, const ProjectionBuffer& buffer,
                              BranchMode branches) {
  std::vector<FeatureRecord> picked;
  picked.reserve(rows.size());
  for (auto i : rows) picked.push_back(ds.records[i]);
  return buffer.project_batch(fuse_batch(picked, branches));
}

struct LambdaChoice {
  double lambda = 0.0;
  bool automatic = false;
  std::optional<LambdaSelection> selection;
};

/// Fixed lambda, or LOOCV over the base task's buffer features with labels
/// re-indexed to the task's own classes.
inline LambdaChoice choose_lambda(const TaskStream& stream, const ProjectionBuffer& buffer, const RunSettings& s) {
  if (s.lambda) return LambdaChoice{*s.lambda, false, std::nullopt};
  const Task& base = stream.tasks.front();
  std::map<std::uint32_t, std::uint32_t> local;
  for (auto c : base.classes) local.emplace(c, static_cast<std::uint32_t>(local.size()));
  std::vector<std::uint32_t> labels;
  for (auto i : base.train_rows) labels.push_back(local.at(stream.train->records[i].label));
  if (labels.size() < 2) throw Error(ErrorCode::kInvalidArgument, "LOOCV needs at least two base-task samples");
  const OneHotBatch y(std::move(labels), local.size());
  LambdaSearchOptions opt;
  opt.sample_cap = s.loocv_cap;
  opt.subsample_seed = derive_seed(s.seed, 0x1A);
  auto sel = select_lambda(buffer_features(*stream.train, base.train_rows, buffer, s.branches), y, s.lambda_grid, opt);
  return LambdaChoice{sel.lambda, true, std::move(sel)};
}

/// Absorbs one task into `state`: widen, then fuse/project/update in chunks.
/// The state is modified only if every chunk succeeds.
inline void learn_task(AnalyticState& state, const TaskStream& stream, std::size_t t, const ProjectionBuffer& buffer,
                       const RunSettings& s) {
  const Task& task = stream.tasks.at(t);
  if (task.train_rows.empty()) throw Error(ErrorCode::kInvalidArgument, "task " + std::to_string(t) + " is empty");
  AnalyticState next = state;
  std::uint32_t max_label = 0;
  for (auto c : task.classes) max_label = std::max(max_label, c);
  expand_classes_inplace(next, std::max<std::size_t>(next.class_count, std::size_t{max_label} + 1));
  const std::size_t chunk = std::max<std::size_t>(s.chunk_rows, 1);
  for (std::size_t begin = 0; begin < task.train_rows.size(); begin += chunk) {
    const std::size_t len = std::min(chunk, task.train_rows.size() - begin);
    const std::span<const std::size_t> rows(task.train_rows.data() + begin, len);
    std::vector<std::uint32_t> labels;
    for (auto i : rows) labels.push_back(stream.train->records[i].label);
    rls_absorb(next, buffer_features(*stream.train, rows, buffer, s.branches),
               OneHotBatch(std::move(labels), next.class_count), chunk);
  }
  state = std::move(next);
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::size_t t) {
  return dir / ("state_task_" + std::to_string(t) + ".rls");
}

/// Learns every task in order from a fresh state (one pass over the data).
inline AnalyticState run_learning(const TaskStream& stream, const ProjectionBuffer& buffer, const RunSettings& s,
                                  LambdaChoice* chosen = nullptr) {
  if (stream.tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "stream has no tasks");
  const LambdaChoice choice = choose_lambda(stream, buffer, s);
  AnalyticState state = make_state(buffer.buffer_dim(), choice.lambda);
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    learn_task(state, stream, t, buffer, s);
    if (!s.checkpoint_dir.empty()) save_state(checkpoint_path(s.checkpoint_dir, t), state);
  }
  if (chosen != nullptr) *chosen = choice;
  return state;
}

/// Accuracy over the test rows of every class in tasks 0..t. Logits are
/// restricted to the seen classes; with CSE the top-K of them are refined
/// against the prototype bank (indexed by global class id).
inline StageResult run_inference(const AnalyticState& state, const TaskStream& stream, std::size_t t,
                                 const ProjectionBuffer& buffer, const PrototypeBank* bank, const RunSettings& s) {
  if (s.cse_enabled && bank == nullptr) throw Error(ErrorCode::kConfig, "CSE enabled but no prototype bank given");
  const std::vector<std::uint32_t> seen = stream.seen_classes(t);
  for (auto c : seen) {
    if (c >= state.class_count) {
      throw Error(ErrorCode::kLabelOutOfRange, "class " + std::to_string(c) + " not learned by the state");
    }
  }
  std::optional<PrototypeBank> local_bank;
  if (s.cse_enabled) local_bank = bank->subset(seen);
  std::map<std::uint32_t, std::uint32_t> position;
  for (std::size_t i = 0; i < seen.size(); ++i) position.emplace(seen[i], static_cast<std::uint32_t>(i));

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i <= t; ++i)
    rows.insert(rows.end(), stream.tasks[i].test_rows.begin(), stream.tasks[i].test_rows.end());

  StageResult out;
  out.task = t;
  out.classes_seen = seen.size();
  out.test_samples = rows.size();
  const std::size_t chunk = std::max<std::size_t>(s.chunk_rows, 1);
  for (std::size_t begin = 0; begin < rows.size(); begin += chunk) {
    const std::size_t len = std::min(chunk, rows.size() - begin);
    const std::span<const std::size_t> part(rows.data() + begin, len);
    const Matrix logits = predict(state, buffer_features(*stream.test, part, buffer, s.branches));
    for (std::size_t i = 0; i < len; ++i) {
      const FeatureRecord& rec = stream.test->records[part[i]];
      Vector analytic(static_cast<Eigen::Index>(seen.size()));
      for (std::size_t j = 0; j < seen.size(); ++j) analytic[static_cast<Eigen::Index>(j)] = logits(static_cast<Eigen::Index>(i), seen[j]);
      Vector semantic = Vector::Zero(analytic.size());
      if (s.cse_enabled) {
        semantic = cse_scores(to_vector(rec.clip_feature), *local_bank, top_k(analytic, s.cse_k));
      }
      const auto fused = fuse_predictions(analytic, semantic, s.cse_enabled ? s.fusion : FusionWeights{});
      if (fused.predicted == position.at(rec.label)) ++out.correct;
    }
  }
  out.accuracy = out.test_samples > 0 ? 100.0 * static_cast<double>(out.correct) / static_cast<double>(out.test_samples)
                                      : 0.0;
  return out;
}

/// Full run: per task learn then evaluate, with optional snapshots and
/// resume from existing snapshots.
inline MetricsReport run_stream(const TaskStream& stream, const ProjectionBuffer& buffer, const PrototypeBank* bank,
                                const RunSettings& s) {
  if (stream.tasks.empty()) throw Error(ErrorCode::kInvalidArgument, "stream has no tasks");
  using Clock = std::chrono::steady_clock;
  MetricsReport report;
  const auto seconds = [](Clock::duration d) { return std::chrono::duration<double>(d).count(); };

  auto t0 = Clock::now();
  LambdaChoice choice;
  if (s.resume && !s.checkpoint_dir.empty() && std::filesystem::exists(checkpoint_path(s.checkpoint_dir, 0))) {
    // lambda is frozen after the base task; the snapshot carries it.
    choice.lambda = load_state(checkpoint_path(s.checkpoint_dir, 0)).lambda;
  } else {
    choice = choose_lambda(stream, buffer, s);
  }
  report.learn_seconds += seconds(Clock::now() - t0);

  AnalyticState state = make_state(buffer.buffer_dim(), choice.lambda);
  for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
    t0 = Clock::now();
    const auto snap = s.checkpoint_dir.empty() ? std::filesystem::path() : checkpoint_path(s.checkpoint_dir, t);
    if (s.resume && !snap.empty() && std::filesystem::exists(snap)) {
      state = load_state(snap);
    } else {
      learn_task(state, stream, t, buffer, s);
      if (!snap.empty()) save_state(snap, state);
    }
    report.learn_seconds += seconds(Clock::now() - t0);

    t0 = Clock::now();
    report.stages.push_back(run_inference(state, stream, t, buffer, bank, s));
    report.infer_seconds += seconds(Clock::now() - t0);
  }
  report.finalize();

  auto& echo = report.config;
  echo.seed = s.seed;
  echo.buffer_seed = buffer.seed();
  echo.buffer_dim = buffer.buffer_dim();
  echo.lambda = choice.lambda;
  echo.lambda_auto = !s.lambda.has_value();
  if (choice.selection) {
    echo.lambda_scores = choice.selection->scores;
    echo.loocv_samples = choice.selection->samples_used;
    echo.loocv_subsampled = choice.selection->subsampled;
  }
  echo.cse_enabled = s.cse_enabled;
  echo.cse_k = s.cse_k;
  echo.fusion = s.fusion;
  echo.chunk_rows = s.chunk_rows;
  echo.tasks = stream.tasks.size();
  echo.branches = to_string(s.branches);
  echo.split = to_string(s.split);
  return report;
}

struct SeedSummary {
  std::vector<MetricsReport> runs;
  double mean_last = 0.0;
  double std_last = 0.0;
  double mean_average = 0.0;
  double std_average = 0.0;
};

/// Mean and sample standard deviation (n - 1) of A_T and the average accuracy.
inline void summarize(SeedSummary& summary) {
  auto stats = [&](auto field, double& mean, double& sd) {
    const double n = static_cast<double>(summary.runs.size());
    mean = 0.0;
    for (const auto& r : summary.runs) mean += field(r);
    mean /= n;
    double ss = 0.0;
    for (const auto& r : summary.runs) ss += (field(r) - mean) * (field(r) - mean);
    sd = summary.runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  };
  if (summary.runs.empty()) return;
  stats([](const MetricsReport& r) { return r.last_accuracy; }, summary.mean_last, summary.std_last);
  stats([](const MetricsReport& r) { return r.average_accuracy; }, summary.mean_average, summary.std_average);
}

inline nlohmann::json to_json(const SeedSummary& s) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : s.runs)
    seeds.push_back({{"seed", r.config.seed}, {"last_accuracy", r.last_accuracy}, {"average_accuracy", r.average_accuracy}});
  return {{"runs", seeds},
          {"last_accuracy", {{"mean", s.mean_last}, {"std", s.std_last}}},
          {"average_accuracy", {{"mean", s.mean_average}, {"std", s.std_average}}}};
}

/// Loads the inputs named by `cfg`, runs every seed and writes
/// `<out>/seed_<s>/{report.json,stages.csv,state_task_<t>.rls}` plus
/// `<out>/summary.json`.
inline SeedSummary run_from_config(const HarnessConfig& cfg) {
  const Dataset train = load_dataset(cfg.train_path);
  const Dataset test = load_dataset(cfg.test_path);
  std::optional<PrototypeBank> bank;
  if (cfg.cse_enabled) {
    if (cfg.bank_path.empty()) throw Error(ErrorCode::kConfig, "cse.enabled = true needs a bank path");
    // CSE scores the clip embedding, so the records must carry one even when
    // the analytic head is adapter-only.
    if (train.header.clip_dim == 0) throw Error(ErrorCode::kConfig, "CSE needs a clip branch in the data");
    bank = build_prototypes(load_prototype_bank(cfg.bank_path));
    if (bank->dim() != train.header.clip_dim) {
      throw Error(ErrorCode::kDimensionMismatch, "bank dim " + std::to_string(bank->dim()) + " vs clip dim " +
                                                     std::to_string(train.header.clip_dim));
    }
  }
  const std::size_t input_dim = fused_dim(train.header, cfg.branches);
  if (input_dim == 0) throw Error(ErrorCode::kConfig, "selected branches have dimension 0");

  SeedSummary summary;
  for (auto seed : cfg.seeds) {
    const TaskStream stream =
        cfg.split == SplitMode::kShuffle ? split_stream(train, test, cfg.tasks, seed) : stream_from_task_ids(train, test);
    const ProjectionBuffer buffer(cfg.buffer_seed.value_or(seed), input_dim, cfg.buffer_dim);
    RunSettings s = settings_from(cfg, seed);
    const auto dir = cfg.output_dir / ("seed_" + std::to_string(seed));
    std::filesystem::create_directories(dir);
    if (cfg.checkpoint) s.checkpoint_dir = dir;
    MetricsReport report = run_stream(stream, buffer, bank ? &*bank : nullptr, s);
    emit_report(report, dir);
    summary.runs.push_back(std::move(report));
  }
  summarize(summary);
  std::ofstream out(cfg.output_dir / "summary.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write summary.json");
  out << to_json(summary).dump(2) << '\n';
  return summary;
}

}  // namespace anacil

#endif  // ANACIL_CIL_HARNESS_HPP_
