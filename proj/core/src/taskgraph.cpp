#include "avail/taskgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace avail::taskgraph {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SchedulerKind scheduler_from_name(std::string_view name) {
  if (name == "learned") return SchedulerKind::Learned;
  if (name == "naive") return SchedulerKind::Naive;
  if (name == "oracle") return SchedulerKind::Oracle;
  throw ConfigError("unknown scheduler: " + std::string(name));
}

std::string_view scheduler_name(SchedulerKind kind) {
  switch (kind) {
    case SchedulerKind::Learned:
      return "learned";
    case SchedulerKind::Naive:
      return "naive";
    case SchedulerKind::Oracle:
      return "oracle";
  }
  throw ConfigError("unknown scheduler kind");
}

TaskModel fit_task_model(const milestones::MilestoneGraph& graph, const TaskModelConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng, FitReport* report) {
  graph.validate();
  const int K = graph.size();

  std::set<int> label_classes;
  long total = 0;
  for (int v = 0; v < K; ++v) {
    if (graph.vertex(v).examples.empty())
      throw ValidationError("fit_task_model: vertex '" + graph.vertex(v).task.name +
                            "' has no examples");
    label_classes.insert(graph.vertex(v).next_label);
    total += static_cast<long>(graph.vertex(v).examples.size());
  }
  if (K >= 2 && label_classes.size() < 2)
    throw ValidationError("fit_task_model: degenerate single-class label set");

  MatrixXd features(total, env::kObservationDim);
  std::vector<int> labels(static_cast<size_t>(total));
  long row = 0;
  for (int v = 0; v < K; ++v) {
    const auto& vert = graph.vertex(v);
    for (const auto& obs : vert.examples) {
      features.row(row) = obs.transpose();
      labels[static_cast<size_t>(row)] = vert.next_label;
      ++row;
    }
  }

  // split before augmentation so holdout accuracy is measured on raw poses
  std::vector<long> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  for (long i = total - 1; i > 0; --i) {
    const long j = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  const long n_holdout = std::max<long>(1, static_cast<long>(total * cfg.holdout_fraction));
  const long n_train = total - n_holdout;
  if (n_train < 1) throw ValidationError("fit_task_model: not enough examples to train");

  TaskModel model;
  model.num_tasks = K;
  model.params = nn::make_mlp(
      env::kObservationDim,
      {{cfg.hidden_dim, nn::Activation::Relu}, {cfg.hidden_dim, nn::Activation::Relu}, {K, nn::Activation::None}},
      rng);
  nn::OptimState opt = nn::make_optim(model.params, {.lr = cfg.lr});

  double last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // fresh shuffle of the training slice each epoch
    for (long i = n_train - 1; i > 0; --i) {
      const long j = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (long start = 0; start < n_train; start += cfg.batch_size) {
      const long count = std::min<long>(cfg.batch_size, n_train - start);
      MatrixXd batch(count, env::kObservationDim);
      std::vector<int> y(static_cast<size_t>(count));
      for (long i = 0; i < count; ++i) {
        const long src = order[static_cast<size_t>(start + i)];
        batch.row(i) = features.row(src);
        y[static_cast<size_t>(i)] = labels[static_cast<size_t>(src)];
      }
      batch = milestones::augment_batch(batch, cfg.augment, env_cfg, rng);

      nn::ForwardTrace trace;
      MatrixXd logits = nn::forward(model.params, batch, nn::Mode::Train, rng, &trace);
      MatrixXd dlogits(count, K);
      double loss = 0.0;
      for (long i = 0; i < count; ++i) {
        VectorXd p = softmax(logits.row(i).transpose());
        loss -= std::log(std::max(p(y[static_cast<size_t>(i)]), 1e-300));
        dlogits.row(i) = p.transpose() / static_cast<double>(count);
        dlogits(i, y[static_cast<size_t>(i)]) -= 1.0 / static_cast<double>(count);
      }
      last_loss = loss / static_cast<double>(count);
      nn::Gradients grads = nn::backward(model.params, trace, dlogits);
      nn::adam_step(opt, model.params, grads);
    }
  }

  if (report) {
    long correct = 0;
    for (long i = n_train; i < total; ++i) {
      const long src = order[static_cast<size_t>(i)];
      const env::Observation obs = features.row(src).transpose();
      if (select_learned(model, obs) == labels[static_cast<size_t>(src)]) ++correct;
    }
    report->holdout_accuracy = static_cast<double>(correct) / static_cast<double>(n_holdout);
    report->final_train_loss = last_loss;
    report->train_examples = n_train;
    report->holdout_examples = n_holdout;
  }
  return model;
}

VectorXd task_logits(const TaskModel& model, const env::Observation& obs) {
  Rng rng(0);
  return nn::forward_vec(model.params, obs, nn::Mode::Eval, rng);
}

VectorXd softmax(const VectorXd& logits) {
  const double m = logits.maxCoeff();
  VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

int argmax_tiebreak_low(const VectorXd& values) {
  int best = 0;
  for (int i = 1; i < values.size(); ++i)
    if (values(i) > values(best)) best = i;
  return best;
}

int select_learned(const TaskModel& model, const env::Observation& obs) {
  return argmax_tiebreak_low(task_logits(model, obs));
}

int select_sampled(const TaskModel& model, const env::Observation& obs, Rng& rng) {
  VectorXd p = softmax(task_logits(model, obs));
  double u = uniform_double(rng);
  for (int i = 0; i < p.size(); ++i) {
    u -= p(i);
    if (u < 0.0) return i;
  }
  return static_cast<int>(p.size()) - 1;
}

int select_naive(long slot_index, int num_tasks) {
  if (num_tasks < 1) throw ValidationError("select_naive: need at least one task");
  if (slot_index < 0) throw ValidationError("select_naive: negative slot index");
  return static_cast<int>(slot_index % num_tasks);
}

env::Phase select_oracle(const env::EnvConfig& cfg, const env::EnvState& state) {
  const bool is_centered = state.obj_pos.head<2>().norm() < cfg.success_radius;
  const bool is_hand_over_object =
      (state.obj_pos.head<2>() - state.hand_pos.head<2>()).norm() < 0.15;
  if (!is_centered && is_hand_over_object) return env::Phase::Reposition;
  if (!is_centered && !is_hand_over_object) return env::Phase::Reach;
  return env::Phase::Pickup;
}

void save_task_model(const TaskModel& model, const std::string& path) {
  nn::save_params(model.params, path);
}

TaskModel load_task_model(const std::string& path) {
  TaskModel model;
  model.params = nn::load_params(path);
  model.num_tasks = model.params.output_dim();
  return model;
}

}  // namespace avail::taskgraph
