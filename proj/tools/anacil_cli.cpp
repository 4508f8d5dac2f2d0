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

// Command-line front end: inspect, lambda-search, run, synth, rigidity.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "anacil/anacil.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json branch_stats(const std::vector<anacil::FeatureRecord>& records, bool adapter, std::size_t dim) {
  json out = {{"dim", dim}};
  if (dim == 0 || records.empty()) return out;
  double lo = INFINITY, hi = 0.0, sum = 0.0;
  for (const auto& r : records) {
    const auto& f = adapter ? r.adapter_feature : r.clip_feature;
    double sq = 0.0;
    for (float v : f) sq += static_cast<double>(v) * v;
    const double n = std::sqrt(sq);
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    sum += n;
  }
  out["norm_min"] = lo;
  out["norm_max"] = hi;
  out["norm_mean"] = sum / static_cast<double>(records.size());
  return out;
}

bool has_magic(const fs::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  std::string head(magic.size(), '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in && head == magic;
}

int cmd_inspect(const fs::path& path) {
  json out = {{"file", path.string()}};
  if (has_magic(path, anacil::kBankMagic)) {
    const auto bank = anacil::load_prototype_bank(path);
    out["kind"] = "prototype_bank";
    out["class_count"] = bank.class_count;
    out["template_count"] = bank.template_count;
    out["dim"] = bank.dim;
    out["class_names"] = bank.class_names.size();
  } else if (has_magic(path, anacil::kStateMagic)) {
    const auto state = anacil::load_state(path);
    out["kind"] = "rls_state";
    out["dim"] = state.dim();
    out["class_count"] = state.class_count;
    out["samples_seen"] = state.samples_seen;
    out["lambda"] = state.lambda;
  } else {
    const auto ds = anacil::load_dataset(path);
    std::vector<std::size_t> per_class(ds.header.class_count, 0);
    std::vector<std::uint32_t> tasks;
    for (const auto& r : ds.records) {
      ++per_class[r.label];
      if (std::find(tasks.begin(), tasks.end(), r.task_id) == tasks.end()) tasks.push_back(r.task_id);
    }
    out["kind"] = "dataset";
    out["record_count"] = ds.header.record_count;
    out["class_count"] = ds.header.class_count;
    out["task_ids"] = tasks.size();
    out["adapter"] = branch_stats(ds.records, true, ds.header.adapter_dim);
    out["clip"] = branch_stats(ds.records, false, ds.header.clip_dim);
    out["records_per_class"] = per_class;
  }
  std::cout << out.dump(2) << '\n';
  return 0;
}

struct LambdaArgs {
  std::string data;
  std::string grid = "1e-8..1e0";
  std::size_t buffer_dim = anacil::kDefaultBufferDim;
  std::uint64_t buffer_seed = 1993;
  std::string branches = "both";
  std::size_t cap = anacil::kDefaultLoocvCap;
  std::uint64_t subsample_seed = 0;
};

int cmd_lambda_search(const LambdaArgs& a) {
  const auto ds = anacil::load_dataset(a.data);
  const auto mode = anacil::parse_branch_mode(a.branches);
  const anacil::ProjectionBuffer buffer(a.buffer_seed, anacil::fused_dim(ds.header, mode), a.buffer_dim);
  std::vector<std::size_t> rows(ds.records.size());
  std::vector<std::uint32_t> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = i;
    labels.push_back(ds.records[i].label);
  }
  anacil::LambdaSearchOptions opt;
  opt.sample_cap = a.cap;
  opt.subsample_seed = a.subsample_seed;
  const auto sel = anacil::select_lambda(anacil::buffer_features(ds, rows, buffer, mode),
                                         anacil::OneHotBatch(std::move(labels), ds.header.class_count),
                                         anacil::LambdaGrid::parse(a.grid), opt);
  json table = json::array();
  for (const auto& s : sel.scores) table.push_back({{"lambda", s.lambda}, {"accuracy", s.accuracy}, {"excluded", s.excluded}});
  std::cout << json{{"selected", sel.lambda},
                    {"samples_used", sel.samples_used},
                    {"subsampled", sel.subsampled},
                    {"scores", table}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_run(const fs::path& config) {
  const auto summary = anacil::run_from_config(anacil::load_config(config));
  std::cout << anacil::to_json(summary).dump(2) << '\n';
  return 0;
}

/// Flat `key = value` synthetic-stream spec.
anacil::SyntheticStreamSpec load_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw anacil::Error(anacil::ErrorCode::kIo, "cannot open spec '" + path.string() + "'");
  anacil::SyntheticStreamSpec spec;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = anacil::detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw anacil::Error(anacil::ErrorCode::kConfig, "expected key = value: " + line);
    const auto key = anacil::detail::trim(line.substr(0, eq));
    const auto v = anacil::detail::trim(line.substr(eq + 1));
    using anacil::detail::parse_number;
    if (key == "classes") spec.class_count = parse_number<std::size_t>(key, v);
    else if (key == "classes_per_task") spec.classes_per_task = parse_number<std::size_t>(key, v);
    else if (key == "adapter_dim") spec.adapter_dim = parse_number<std::size_t>(key, v);
    else if (key == "clip_dim") spec.clip_dim = parse_number<std::size_t>(key, v);
    else if (key == "rank") spec.rank = parse_number<std::size_t>(key, v);
    else if (key == "noise") spec.noise = parse_number<double>(key, v);
    else if (key == "clip_noise") spec.clip_noise = parse_number<double>(key, v);
    else if (key == "drift_deg") spec.drift = parse_number<double>(key, v) * std::numbers::pi / 180.0;
    else if (key == "adapter_scale") spec.adapter_scale = parse_number<double>(key, v);
    else if (key == "frozen_adapter") spec.frozen_adapter = anacil::detail::parse_bool(key, v);
    else if (key == "train_per_class") spec.train_per_class = parse_number<std::size_t>(key, v);
    else if (key == "test_per_class") spec.test_per_class = parse_number<std::size_t>(key, v);
    else if (key == "templates") spec.template_count = parse_number<std::size_t>(key, v);
    else if (key == "template_jitter") spec.template_jitter = parse_number<double>(key, v);
    else if (key == "seed") spec.seed = parse_number<std::uint64_t>(key, v);
    else throw anacil::Error(anacil::ErrorCode::kConfig, "unknown spec key '" + key + "'");
  }
  return spec;
}

int cmd_synth(const fs::path& spec_path, const fs::path& out) {
  const auto spec = load_spec(spec_path);
  const auto stream = anacil::generate_stream(spec);
  anacil::save_stream(stream, out);
  json grass = json::array();
  for (std::size_t t = 0; t < stream.task_bases.size(); ++t)
    grass.push_back(anacil::grassmann_distance(stream.task_subspace(0), stream.task_subspace(t)));
  std::cout << json{{"out", out.string()},
                    {"train_records", stream.train.records.size()},
                    {"test_records", stream.test.records.size()},
                    {"tasks", stream.task_classes.size()},
                    {"grassmann_from_task0", grass}}
                   .dump(2)
            << '\n';
  return 0;
}

/// "0,15,...,90" expands the arithmetic progression set by the first two terms.
std::vector<double> parse_angles(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(anacil::detail::trim(item));
  std::vector<double> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] != "...") {
      out.push_back(anacil::detail::parse_number<double>("angles", items[i]));
      continue;
    }
    if (out.size() < 2 || i + 1 >= items.size()) {
      throw anacil::Error(anacil::ErrorCode::kConfig, "'...' needs two leading terms and an end");
    }
    const double step = out[out.size() - 1] - out[out.size() - 2];
    const double end = anacil::detail::parse_number<double>("angles", items[i + 1]);
    if (!(step > 0.0)) throw anacil::Error(anacil::ErrorCode::kConfig, "angle progression must increase");
    for (double v = out.back() + step; v < end - 1e-9; v += step) out.push_back(v);
  }
  return out;
}

struct RigidityArgs {
  std::string angles = "0,15,...,90";
  std::size_t trials = 20;
  std::string out;
  anacil::RigidityOptions opt;
};

int cmd_rigidity(const RigidityArgs& a) {
  const auto degrees = parse_angles(a.angles);
  std::vector<double> radians;
  for (double d : degrees) radians.push_back(d * std::numbers::pi / 180.0);
  const auto rows = anacil::rigidity_sweep(radians, a.trials, a.opt);
  std::ostringstream csv;
  csv.precision(17);
  csv << "theta_deg,grassmann,residual,target_energy,mse,error_rate,task1_mse,task1_error_rate\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    csv << degrees[i] << ',' << r.grassmann << ',' << r.residual << ',' << r.target_energy << ',' << r.mse << ','
        << r.error_rate << ',' << r.task1_mse << ',' << r.task1_error_rate << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(a.out);
    if (!(f << csv.str())) throw anacil::Error(anacil::ErrorCode::kIo, "cannot write '" + a.out + "'");
    std::vector<double> mse, sines;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      mse.push_back(rows[i].mse);
      sines.push_back(std::sin(radians[i]));
    }
    json summary = {{"out", a.out}, {"angles", rows.size()}};
    if (rows.size() >= 2) summary["spearman_mse_vs_sin"] = anacil::spearman_rho(mse, sines);
    std::cout << summary.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Analytic class-incremental learning over embedding files"};
  app.require_subcommand(1);

  std::string inspect_file;
  auto* inspect = app.add_subcommand("inspect", "Print header fields and branch statistics as JSON");
  inspect->add_option("file", inspect_file, "Dataset, prototype bank or state snapshot")->required();

  LambdaArgs lam;
  auto* lsearch = app.add_subcommand("lambda-search", "Leave-one-out accuracy per ridge candidate");
  lsearch->add_option("--data", lam.data, "Dataset file")->required();
  lsearch->add_option("--grid", lam.grid, "Range lo..hi (decades) or comma list");
  lsearch->add_option("--buffer-dim", lam.buffer_dim, "Random buffer width");
  lsearch->add_option("--buffer-seed", lam.buffer_seed, "Random buffer seed");
  lsearch->add_option("--branches", lam.branches, "both|adapter|clip");
  lsearch->add_option("--cap", lam.cap, "Subsample when more rows than this");
  lsearch->add_option("--subsample-seed", lam.subsample_seed, "Subsample seed");

  std::string config;
  auto* run = app.add_subcommand("run", "Class-incremental run driven by a config file");
  run->add_option("--config", config, "key = value config")->required();

  std::string spec_file, synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic drifting task stream");
  synth->add_option("--spec", spec_file, "key = value stream spec")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  RigidityArgs rig;
  auto* rigidity = app.add_subcommand("rigidity", "Frozen-subspace error against rotation angle");
  rigidity->add_option("--angles", rig.angles, "Degrees, e.g. 0,15,...,90");
  rigidity->add_option("--trials", rig.trials, "Trials per angle");
  rigidity->add_option("--out", rig.out, "CSV path (stdout when omitted)");
  rigidity->add_option("--dim", rig.opt.dim, "Ambient dimension");
  rigidity->add_option("--rank", rig.opt.rank, "Subspace rank");
  rigidity->add_option("--noise", rig.opt.noise, "Within-class noise");
  rigidity->add_option("--seed", rig.opt.seed, "Root seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*inspect) return cmd_inspect(inspect_file);
    if (*lsearch) return cmd_lambda_search(lam);
    if (*run) return cmd_run(config);
    if (*synth) return cmd_synth(spec_file, synth_out);
    if (*rigidity) return cmd_rigidity(rig);
  } catch (const anacil::Error& e) {
    std::cerr << "error [" << anacil::to_string(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
