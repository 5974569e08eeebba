#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avail/config.hpp"
#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"
#include "avail/rewards.hpp"
#include "avail/rl.hpp"
#include "avail/taskgraph.hpp"

namespace avail::orch {

enum class MethodKind { Avail, SacSparse, SacVice, ForwardBackward, R3lLite };
MethodKind method_from_name(std::string_view name);
std::string_view method_name(MethodKind kind);

// ---------------------------------------------------------------------------
// Random network distillation (perturbation controller reward)

struct RndConfig {
  int hidden_dim = 256;
  int embed_dim = 64;
  double lr = 3e-4;
};

struct RndModule {
  nn::MlpParams target;     // frozen
  nn::MlpParams predictor;  // trained toward the target embedding
  nn::OptimState opt;
  long n_updates = 0;
  double reward_mean = 0.0;  // running reward-normalization statistics
  double reward_m2 = 0.0;
  long reward_count = 0;

  static RndModule make(int obs_dim, const RndConfig& cfg, Rng& rng);
};

/// Squared predictor-target embedding error, normalized by the embedding
/// dimension. Zero when the predictor matches the target; never negative.
double rnd_reward(const RndModule& rnd, const env::Observation& obs);
Eigen::VectorXd rnd_reward_batch(const RndModule& rnd, const Eigen::MatrixXd& obs_rows);

/// One predictor MSE step on the given states; updates the running stats.
double rnd_update(RndModule& rnd, const Eigen::MatrixXd& obs_rows);

void save_rnd(const RndModule& rnd, const std::string& dir);
RndModule load_rnd(const std::string& dir);

// ---------------------------------------------------------------------------
// Evaluation

using PolicyFn = std::function<Eigen::Vector4d(const env::Observation&)>;
using SuccessFn = std::function<bool(const env::EnvState&)>;
using EvalSchedulerFn = std::function<int(const env::EnvState&, long slot_index)>;

struct EvalTask {
  std::string name;
  PolicyFn policy;
  SuccessFn success;
  bool scored = true;  // tasks without success semantics produce no row
};

struct EvalResult {
  std::vector<std::pair<std::string, double>> per_task;
  double full_chain = 0.0;
};

/// Per task: fresh env inits, deterministic rollout of length T, success if
/// the predicate holds in any of the last `success_window` states. The full
/// chain runs the scheduler for chain_slots * T steps and scores the chain
/// predicate anywhere in the window.
EvalResult evaluate(const env::EnvConfig& cfg, const std::vector<EvalTask>& tasks,
                    const EvalSchedulerFn& scheduler, const SuccessFn& chain_goal, int T,
                    int n_episodes, int chain_slots, int success_window, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Run artifacts

struct EvalRow {
  long step = 0;
  std::string task;
  double success_rate = 0.0;
};

struct RunArtifacts {
  std::string method;  // label, e.g. "avail-learned"
  std::string scheduler;
  std::uint64_t seed = 0;
  std::vector<EvalRow> rows;
  std::vector<std::pair<std::string, std::string>> config_echo;
  std::string run_dir;
  double wall_seconds = 0.0;
  long total_env_steps = 0;
  long env_init_calls = 0;
  std::map<std::string, double> final_rates;

  /// First evaluation step at which `task` reached `threshold`; -1 when never.
  long steps_to_threshold(const std::string& task, double threshold) const;
};

/// What a method is allowed to touch; used to audit baseline isolation.
struct MethodLayout {
  std::vector<std::string> task_names;
  int classifier_count = 0;
  int example_set_count = 0;
  bool uses_task_model = false;
  bool uses_rnd = false;
};
MethodLayout method_layout(MethodKind kind);

/// Algorithm main loop: fits the task model once up front, then loops slots of
/// T steps — select task, collect with its policy into its buffer, one SAC and
/// one classifier update per environment step (after per-task warmup), never
/// resetting the environment. Snapshots are evaluated every eval_interval.
RunArtifacts avail_train(const harness::ExperimentConfig& config,
                         const milestones::MilestoneGraph& graph, std::uint64_t seed);

/// SacSparse / SacVice: one reset-free agent on the final task. ForwardBackward:
/// two agents alternating every T. R3lLite: VICE forward agent alternating with
/// an RND-rewarded perturbation agent.
RunArtifacts baseline_train(MethodKind kind, const harness::ExperimentConfig& config,
                            std::uint64_t seed);

/// Continue an interrupted run from its last checkpoint; step accounting,
/// rng streams and rows continue exactly.
RunArtifacts resume_train(const harness::ExperimentConfig& config, const std::string& run_dir);

/// Run per-task and full-chain evaluation for a checkpoint directory.
EvalResult evaluate_checkpoint(const std::string& run_dir, int n_episodes, std::uint64_t seed);

}  // namespace avail::orch
