#pragma once

#include <string>
#include <vector>

#include "avail/config.hpp"
#include "avail/orchestrator.hpp"

namespace avail::harness {

/// `step,task,success_rate,method,seed` with full-precision rates.
void write_rows_csv(const std::string& path, const std::vector<orch::EvalRow>& rows,
                    const std::string& method, std::uint64_t seed);

struct CurveRow {
  std::string method;
  std::uint64_t seed = 0;
  long step = 0;
  std::string task;
  double success = 0.0;
};

std::vector<CurveRow> read_rows_csv(const std::string& path);

void save_rows_bin(const std::string& path, const std::vector<orch::EvalRow>& rows);
std::vector<orch::EvalRow> load_rows_bin(const std::string& path);

void write_summary_json(const std::string& path, const orch::RunArtifacts& artifacts);

/// Builds the milestone graph a run trains against: loaded from
/// graph.milestones_path when set, otherwise generated procedurally from the
/// run seed.
milestones::MilestoneGraph prepare_graph(const ExperimentConfig& cfg, std::uint64_t seed);

/// One training run for a single seed (dispatches on cfg.run.method).
orch::RunArtifacts run_single(const ExperimentConfig& cfg, std::uint64_t seed);

/// Drives one run per seed, then writes `aggregate.csv` (mean/std across
/// seeds) under cfg.run.out_dir. Returns a process exit status.
int run(const ExperimentConfig& cfg);

/// Long-format merge of run directories: (method, seed, step, task, success),
/// sorted by (method, seed, step). Missing inputs raise IoError listing paths.
void export_curves(const std::vector<std::string>& run_dirs, const std::string& out_path);

}  // namespace avail::harness
