#pragma once

#include <Eigen/Dense>

#include "avail/common.hpp"
#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"

namespace avail::taskgraph {

enum class SchedulerKind { Learned, Naive, Oracle };
SchedulerKind scheduler_from_name(std::string_view name);
std::string_view scheduler_name(SchedulerKind kind);

struct TaskModelConfig {
  int hidden_dim = 256;
  int epochs = 50;
  double lr = 3e-4;
  int batch_size = 64;
  double holdout_fraction = 0.1;
  bool sample_task = false;  // Learned scheduler samples instead of argmax
  milestones::AugmentConfig augment{0.02, false};
};

/// p_task(z | s): observation -> next-task logits, trained supervised from
/// milestone examples labeled with their vertex's next-task edge.
struct TaskModel {
  nn::MlpParams params;
  int num_tasks = 0;
};

struct FitReport {
  double holdout_accuracy = 0.0;
  double final_train_loss = 0.0;
  long train_examples = 0;
  long holdout_examples = 0;
};

/// Cross-entropy fit on {(augmented example of vertex v, next_label(v))}.
/// Throws ValidationError when K >= 2 vertices collapse onto a single label
/// class (a degenerate supervised problem).
TaskModel fit_task_model(const milestones::MilestoneGraph& graph, const TaskModelConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng, FitReport* report = nullptr);

Eigen::VectorXd task_logits(const TaskModel& model, const env::Observation& obs);
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

/// Lowest index wins ties.
int argmax_tiebreak_low(const Eigen::VectorXd& values);

/// argmax_z p(z | s)
int select_learned(const TaskModel& model, const env::Observation& obs);

/// z ~ p(z | s); opt-in alternative to the argmax rule.
int select_sampled(const TaskModel& model, const env::Observation& obs, Rng& rng);

/// Round-robin: slot_index mod K.
int select_naive(long slot_index, int num_tasks);

/// Hand-coded branch table over ground-truth positions:
///   centered -> Pickup; off-center and hand over object -> Reposition;
///   otherwise -> Reach. Uses horizontal distances only.
env::Phase select_oracle(const env::EnvConfig& cfg, const env::EnvState& state);

void save_task_model(const TaskModel& model, const std::string& path);
TaskModel load_task_model(const std::string& path);

}  // namespace avail::taskgraph
