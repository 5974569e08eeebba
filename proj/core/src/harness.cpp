#include "avail/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace avail::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string format_rate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_rows_csv(const std::string& path, const std::vector<orch::EvalRow>& rows,
                    const std::string& method, std::uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_rows_csv: cannot open " + path);
  out << "step,task,success_rate,method,seed\n";
  for (const auto& row : rows)
    out << row.step << "," << row.task << "," << format_rate(row.success_rate) << "," << method
        << "," << seed << "\n";
  if (!out) throw IoError("write_rows_csv: write failed for " + path);
}

std::vector<CurveRow> read_rows_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_rows_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("read_rows_csv: empty file " + path);
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string step, task, rate, method, seed;
    if (!std::getline(ss, step, ',') || !std::getline(ss, task, ',') ||
        !std::getline(ss, rate, ',') || !std::getline(ss, method, ',') ||
        !std::getline(ss, seed, ','))
      throw IoError("read_rows_csv: malformed line in " + path);
    CurveRow row;
    row.step = std::stol(step);
    row.task = task;
    row.success = std::stod(rate);
    row.method = method;
    row.seed = std::stoull(seed);
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_rows_bin(const std::string& path, const std::vector<orch::EvalRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_rows_bin: cannot open " + path);
  const std::uint64_t n = rows.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (const auto& row : rows) {
    const std::int64_t step = row.step;
    const std::uint32_t len = static_cast<std::uint32_t>(row.task.size());
    out.write(reinterpret_cast<const char*>(&step), 8);
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(row.task.data(), len);
    out.write(reinterpret_cast<const char*>(&row.success_rate), 8);
  }
  if (!out) throw IoError("save_rows_bin: write failed");
}

std::vector<orch::EvalRow> load_rows_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_rows_bin: cannot open " + path);
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  std::vector<orch::EvalRow> rows(n);
  for (auto& row : rows) {
    std::int64_t step = 0;
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&step), 8);
    in.read(reinterpret_cast<char*>(&len), 4);
    row.task.resize(len);
    in.read(row.task.data(), len);
    in.read(reinterpret_cast<char*>(&row.success_rate), 8);
    row.step = step;
  }
  if (!in) throw IoError("load_rows_bin: record truncated");
  return rows;
}

void write_summary_json(const std::string& path, const orch::RunArtifacts& a) {
  json j;
  j["method"] = a.method;
  j["scheduler"] = a.scheduler;
  j["seed"] = a.seed;
  j["run_dir"] = a.run_dir;
  j["wall_seconds"] = a.wall_seconds;
  j["total_env_steps"] = a.total_env_steps;
  j["env_init_calls"] = a.env_init_calls;
  j["final_rates"] = a.final_rates;
  j["steps_to_0.6_full_chain"] = a.steps_to_threshold("full_chain", 0.6);
  json echo = json::object();
  for (const auto& [k, v] : a.config_echo) echo[k] = v;
  j["config"] = echo;
  json rows = json::array();
  for (const auto& row : a.rows)
    rows.push_back({{"step", row.step}, {"task", row.task}, {"success_rate", row.success_rate}});
  j["rows"] = rows;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_summary_json: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write_summary_json: write failed");
}

milestones::MilestoneGraph prepare_graph(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (!cfg.graph.milestones_path.empty())
    return milestones::load_graph(cfg.graph.milestones_path);
  milestones::MilestoneGraph graph = milestones::build_graph(cfg.edge_list());
  milestones::populate_examples(graph, cfg.graph.milestones_per_task, cfg.env,
                                cfg.graph.example_margin, mix_seed(seed, 0x9e0a3aULL));
  return graph;
}

orch::RunArtifacts run_single(const ExperimentConfig& cfg, std::uint64_t seed) {
  const orch::MethodKind kind = orch::method_from_name(cfg.run.method);
  if (kind == orch::MethodKind::Avail) {
    milestones::MilestoneGraph graph = prepare_graph(cfg, seed);
    return orch::avail_train(cfg, graph, seed);
  }
  return orch::baseline_train(kind, cfg, seed);
}

int run(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.run.out_dir);
  std::vector<orch::RunArtifacts> artifacts;
  for (const std::uint64_t seed : cfg.run.seeds) {
    try {
      artifacts.push_back(run_single(cfg, seed));
    } catch (const NumericError& e) {
      std::cerr << "numeric error in seed " << seed << ": " << e.what() << "\n";
      return 2;
    }
  }

  // aggregate mean/std across seeds for each (step, task)
  std::map<std::pair<long, std::string>, std::vector<double>> cells;
  std::string method = artifacts.empty() ? cfg.run.method : artifacts.front().method;
  for (const auto& a : artifacts)
    for (const auto& row : a.rows) cells[{row.step, row.task}].push_back(row.success_rate);

  std::ofstream agg(cfg.run.out_dir + "/aggregate.csv", std::ios::trunc);
  if (!agg) throw IoError("run: cannot open aggregate.csv");
  agg << "step,task,method,mean_success,std_success,n_seeds\n";
  for (const auto& [key, values] : cells) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var = values.size() > 1 ? var / static_cast<double>(values.size() - 1) : 0.0;
    agg << key.first << "," << key.second << "," << method << "," << format_rate(mean) << ","
        << format_rate(std::sqrt(var)) << "," << values.size() << "\n";
  }
  return 0;
}

void export_curves(const std::vector<std::string>& run_dirs, const std::string& out_path) {
  if (run_dirs.empty()) throw ValidationError("export_curves: need at least one run directory");
  std::vector<std::string> missing;
  std::vector<CurveRow> all;
  for (const auto& dir : run_dirs) {
    const std::string path = dir + "/rows.csv";
    if (!fs::exists(path)) {
      missing.push_back(path);
      continue;
    }
    auto rows = read_rows_csv(path);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  if (!missing.empty()) {
    std::string msg = "export_curves: missing files:";
    for (const auto& p : missing) msg += " " + p;
    throw IoError(msg);
  }
  std::stable_sort(all.begin(), all.end(), [](const CurveRow& a, const CurveRow& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.step < b.step;
  });
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw IoError("export_curves: cannot open " + out_path);
  out << "method,seed,step,task,success\n";
  for (const auto& row : all)
    out << row.method << "," << row.seed << "," << row.step << "," << row.task << ","
        << format_rate(row.success) << "\n";
  if (!out) throw IoError("export_curves: write failed");
}

}  // namespace avail::harness
