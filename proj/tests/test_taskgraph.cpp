#include <cmath>

#include "avail/taskgraph.hpp"
#include "doctest.h"

using namespace avail;
using Eigen::VectorXd;

namespace {

taskgraph::TaskModelConfig small_config() {
  taskgraph::TaskModelConfig cfg;
  cfg.hidden_dim = 64;
  cfg.epochs = 50;
  return cfg;
}

// independent oracle: classify by nearest class centroid
double nearest_centroid_accuracy(const milestones::MilestoneGraph& graph) {
  const int k = graph.size();
  std::vector<VectorXd> centroids(static_cast<size_t>(k));
  for (int v = 0; v < k; ++v) {
    Eigen::MatrixXd m = graph.examples_matrix(v);
    centroids[static_cast<size_t>(v)] = m.colwise().mean().transpose();
  }
  long correct = 0, total = 0;
  for (int v = 0; v < k; ++v) {
    for (const auto& obs : graph.vertex(v).examples) {
      int best = 0;
      double best_d = (obs - centroids[0]).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (obs - centroids[static_cast<size_t>(c)]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == v) ++correct;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("fit_task_model: the default cycle reaches 95 percent holdout accuracy") {
  env::EnvConfig env_cfg;
  auto graph = milestones::default_valve3_graph();
  milestones::populate_examples(graph, 300, env_cfg, 0.1, 17);

  // the success sets are geometrically separable per the centroid oracle
  CHECK(nearest_centroid_accuracy(graph) >= 0.95);

  Rng rng(18);
  taskgraph::FitReport report;
  auto model = taskgraph::fit_task_model(graph, small_config(), env_cfg, rng, &report);
  CHECK(report.holdout_accuracy >= 0.95);
  CHECK(model.num_tasks == 3);
}

TEST_CASE("fit_task_model: a single-task self-loop always selects that task") {
  env::EnvConfig env_cfg;
  auto graph = milestones::build_graph({{"pickup", "pickup"}});
  milestones::populate_examples(graph, 60, env_cfg, 0.1, 19);
  Rng rng(20);
  auto model = taskgraph::fit_task_model(graph, small_config(), env_cfg, rng);
  env::Observation obs = env::Observation::Zero();
  CHECK(taskgraph::select_learned(model, obs) == 0);
  CHECK(taskgraph::softmax(taskgraph::task_logits(model, obs))(0) == doctest::Approx(1.0));
}

TEST_CASE("fit_task_model: same seed twice gives identical parameters") {
  env::EnvConfig env_cfg;
  auto graph = milestones::default_valve3_graph();
  milestones::populate_examples(graph, 60, env_cfg, 0.1, 21);
  Rng a(22), b(22);
  auto ma = taskgraph::fit_task_model(graph, small_config(), env_cfg, a);
  auto mb = taskgraph::fit_task_model(graph, small_config(), env_cfg, b);
  for (size_t i = 0; i < ma.params.layers.size(); ++i) {
    CHECK(ma.params.layers[i].weights == mb.params.layers[i].weights);
    CHECK(ma.params.layers[i].bias == mb.params.layers[i].bias);
  }
}

TEST_CASE("fit_task_model: degenerate multi-vertex single-label set is rejected") {
  env::EnvConfig env_cfg;
  // both vertices point at reach: one label class with K = 2
  auto graph = milestones::build_graph({{"reach", "reach"}, {"reposition", "reach"}});
  milestones::populate_examples(graph, 30, env_cfg, 0.1, 23);
  Rng rng(24);
  CHECK_THROWS_AS(taskgraph::fit_task_model(graph, small_config(), env_cfg, rng),
                  ValidationError);
}

TEST_CASE("select_learned: reach examples route to reposition") {
  env::EnvConfig env_cfg;
  auto graph = milestones::default_valve3_graph();
  milestones::populate_examples(graph, 300, env_cfg, 0.1, 25);
  Rng rng(26);
  auto model = taskgraph::fit_task_model(graph, small_config(), env_cfg, rng);

  auto fresh = milestones::generate_examples(graph, 0, 1000, env_cfg, 0.1, 27);
  long hits = 0;
  for (const auto& obs : fresh)
    if (taskgraph::select_learned(model, obs) == 1) ++hits;
  CHECK(hits >= 950);
}

TEST_CASE("argmax: ties break to the lowest index and shifts never matter") {
  VectorXd flat = VectorXd::Zero(4);
  CHECK(taskgraph::argmax_tiebreak_low(flat) == 0);

  Rng rng(28);
  for (int i = 0; i < 1000; ++i) {
    VectorXd logits(5);
    for (int c = 0; c < 5; ++c) logits(c) = uniform_range(rng, -2.0, 2.0);
    const double shift = uniform_range(rng, -100.0, 100.0);
    CHECK(taskgraph::argmax_tiebreak_low(logits) ==
          taskgraph::argmax_tiebreak_low((logits.array() + shift).matrix()));
  }
}

TEST_CASE("softmax: sums to one within 1e-9 for extreme logits") {
  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    VectorXd logits(3);
    for (int c = 0; c < 3; ++c) logits(c) = uniform_range(rng, -500.0, 500.0);
    CHECK(std::abs(taskgraph::softmax(logits).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("select_naive: round robin, state independent") {
  CHECK(taskgraph::select_naive(0, 3) == 0);
  CHECK(taskgraph::select_naive(7, 3) == 1);
  for (long slot = 0; slot < 9; ++slot)
    CHECK(taskgraph::select_naive(slot, 3) == static_cast<int>(slot % 3));
}

TEST_CASE("select_oracle: the three branch-table cases") {
  env::EnvConfig cfg;
  env::EnvState s;
  s.obj_pos = {0.0, 0.0, 0.0};
  s.hand_pos = {0.2, 0.2, 0.1};
  CHECK(taskgraph::select_oracle(cfg, s) == env::Phase::Pickup);

  s.obj_pos = {0.14, 0.0, 0.0};
  s.hand_pos = {0.13, 0.01, 0.1};  // hand over object, off center
  CHECK(taskgraph::select_oracle(cfg, s) == env::Phase::Reposition);

  s.hand_pos = {-0.2, -0.2, 0.1};  // far from the object, off center
  CHECK(taskgraph::select_oracle(cfg, s) == env::Phase::Reach);
}

TEST_CASE("select_oracle: grid equivalence with a direct branch-table transcription") {
  env::EnvConfig cfg;
  // coarse grid here; the acceptance suite runs the full 0.01 m resolution
  for (double ox = -0.15; ox <= 0.1501; ox += 0.03)
    for (double oy = -0.15; oy <= 0.1501; oy += 0.03) {
      if (std::hypot(ox, oy) > cfg.tether_radius) continue;
      for (double hx = -0.275; hx <= 0.2751; hx += 0.05)
        for (double hy = -0.275; hy <= 0.2751; hy += 0.05) {
          env::EnvState s;
          s.obj_pos = {ox, oy, 0.0};
          s.hand_pos = {hx, hy, 0.1};
          const bool is_centered = std::sqrt(ox * ox + oy * oy) < 0.1;
          const bool is_hand_over =
              std::sqrt((ox - hx) * (ox - hx) + (oy - hy) * (oy - hy)) < 0.15;
          env::Phase want;
          if (!is_centered && is_hand_over)
            want = env::Phase::Reposition;
          else if (!is_centered && !is_hand_over)
            want = env::Phase::Reach;
          else
            want = env::Phase::Pickup;
          REQUIRE(taskgraph::select_oracle(cfg, s) == want);
        }
    }
}

TEST_CASE("select_sampled: sampling frequencies track the softmax") {
  taskgraph::TaskModel model;
  Rng make_rng(90);
  model.params = nn::make_mlp(env::kObservationDim, {{3, nn::Activation::None}}, make_rng);
  model.num_tasks = 3;
  env::Observation obs = env::Observation::Zero();
  Eigen::VectorXd p = taskgraph::softmax(taskgraph::task_logits(model, obs));

  Rng rng(91);
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  const int n = 200000;
  for (int i = 0; i < n; ++i) counts(taskgraph::select_sampled(model, obs, rng)) += 1.0;
  for (int c = 0; c < 3; ++c)
    CHECK(counts(c) / n == doctest::Approx(p(c)).epsilon(0.05));
}

TEST_CASE("task model checkpoint round-trips") {
  env::EnvConfig env_cfg;
  auto graph = milestones::default_valve3_graph();
  milestones::populate_examples(graph, 40, env_cfg, 0.1, 30);
  Rng rng(31);
  auto model = taskgraph::fit_task_model(graph, small_config(), env_cfg, rng);
  taskgraph::save_task_model(model, "/tmp/avail_test_tm.net");
  auto loaded = taskgraph::load_task_model("/tmp/avail_test_tm.net");
  CHECK(loaded.num_tasks == model.num_tasks);
  for (size_t i = 0; i < model.params.layers.size(); ++i)
    CHECK(loaded.params.layers[i].weights == model.params.layers[i].weights);
}

TEST_CASE("scheduler names round-trip") {
  CHECK(taskgraph::scheduler_from_name("learned") == taskgraph::SchedulerKind::Learned);
  CHECK(taskgraph::scheduler_from_name(taskgraph::scheduler_name(
            taskgraph::SchedulerKind::Oracle)) == taskgraph::SchedulerKind::Oracle);
  CHECK_THROWS_AS(taskgraph::scheduler_from_name("psychic"), ConfigError);
}
