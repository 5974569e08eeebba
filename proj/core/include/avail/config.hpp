#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/rewards.hpp"
#include "avail/rl.hpp"
#include "avail/taskgraph.hpp"

namespace avail::harness {

/// Everything a run consumes, with table defaults. Parsed from sectioned
/// key = value text; every key is registered so the echo is complete by
/// construction.
struct ExperimentConfig {
  struct Run {
    std::string method = "avail";
    std::string scheduler = "learned";
    std::vector<std::uint64_t> seeds = {0};
    long budget_steps = 150000;
    int task_horizon = 100;  // T
    long eval_interval = 5000;
    int eval_episodes = 20;
    int eval_success_window = 10;
    int chain_slots = 3;
    long warmup_steps = 1000;
    std::string out_dir = "runs";
    std::string run_name;  // empty -> {method}-{seed}-{timestamp}
    bool checkpoint = true;
    bool log_progress = true;
  } run;

  struct Graph {
    std::string edges = "reach>reposition,reposition>pickup,pickup>reach";
    std::string milestones_path;  // empty -> generate procedurally
    int milestones_per_task = 300;
    double example_margin = 0.1;
  } graph;

  env::EnvConfig env;
  milestones::AugmentConfig augment{0.02, true};
  rl::SacConfig rl;
  rewards::ClassifierConfig classifier;
  taskgraph::TaskModelConfig taskmodel;

  /// Parsed (task, next_task) pairs from graph.edges.
  std::vector<std::pair<std::string, std::string>> edge_list() const;

  void validate() const;  // throws ConfigError naming the violated invariant

  /// Every registered key with its current value, ordered, as "section.key".
  std::vector<std::pair<std::string, std::string>> echo() const;
};

ExperimentConfig default_config();

/// Parse + apply AVAIL_<SECTION>_<KEY> environment overrides + validate.
/// Unknown keys are errors that name the key.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_string(const std::string& text);

void save_config(const ExperimentConfig& cfg, const std::string& path);
std::string config_to_string(const ExperimentConfig& cfg);

}  // namespace avail::harness
