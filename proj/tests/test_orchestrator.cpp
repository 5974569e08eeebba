#include <filesystem>
#include <set>

#include "avail/harness.hpp"
#include "avail/orchestrator.hpp"
#include "doctest.h"

using namespace avail;
using Eigen::MatrixXd;
using Eigen::Vector4d;
using Eigen::VectorXd;

namespace {

// micro-scale config so end-to-end paths run in seconds
harness::ExperimentConfig micro_config(const std::string& out_dir) {
  auto cfg = harness::default_config();
  cfg.run.budget_steps = 1200;
  cfg.run.task_horizon = 60;
  cfg.run.eval_interval = 600;
  cfg.run.eval_episodes = 2;
  cfg.run.warmup_steps = 100;
  cfg.run.out_dir = out_dir;
  cfg.run.log_progress = false;
  cfg.rl.batch_size = 32;
  cfg.rl.hidden_dim = 32;
  cfg.rl.buffer_capacity = 5000;
  cfg.classifier.batch_size = 32;
  cfg.classifier.hidden_dim = 32;
  cfg.classifier.hidden_layers = 2;
  cfg.graph.milestones_per_task = 40;
  cfg.taskmodel.hidden_dim = 32;
  cfg.taskmodel.epochs = 10;
  return cfg;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "/tmp/avail_orch_tests/" + name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("rnd: predictor equal to the target gives exactly zero reward") {
  Rng rng(1);
  auto rnd = orch::RndModule::make(8, {}, rng);
  rnd.predictor = rnd.target;
  env::Observation obs = env::Observation::Zero();
  obs(0) = 0.3;
  CHECK(orch::rnd_reward(rnd, obs) == 0.0);
}

TEST_CASE("rnd: rewards are nonnegative everywhere") {
  Rng rng(2);
  auto rnd = orch::RndModule::make(8, {}, rng);
  MatrixXd rows = MatrixXd::Random(64, 8);
  VectorXd r = orch::rnd_reward_batch(rnd, rows);
  CHECK(r.minCoeff() >= 0.0);
}

TEST_CASE("rnd: training on a state drives its novelty reward down") {
  Rng rng(3);
  orch::RndConfig cfg;
  cfg.hidden_dim = 64;
  auto rnd = orch::RndModule::make(8, cfg, rng);
  env::Observation obs;
  obs << 0.1, -0.1, 0.2, 0.5, 0.0, 0.05, 0.0, 0.0;
  const double before = orch::rnd_reward(rnd, obs);
  MatrixXd batch = obs.transpose().replicate(16, 1);
  for (int i = 0; i < 10000; ++i) orch::rnd_update(rnd, batch);
  CHECK(orch::rnd_reward(rnd, obs) < before);
  CHECK(rnd.n_updates == 10000);
}

TEST_CASE("rnd: the frozen target never changes") {
  Rng rng(4);
  auto rnd = orch::RndModule::make(8, {}, rng);
  auto target_before = rnd.target;
  MatrixXd batch = MatrixXd::Random(32, 8);
  for (int i = 0; i < 50; ++i) orch::rnd_update(rnd, batch);
  for (size_t i = 0; i < target_before.layers.size(); ++i)
    CHECK(rnd.target.layers[i].weights == target_before.layers[i].weights);
}

TEST_CASE("evaluate: scripted-expert policies pass every per-task bar") {
  env::EnvConfig cfg;
  std::vector<orch::EvalTask> tasks;
  for (const auto phase : {env::Phase::Reach, env::Phase::Reposition, env::Phase::Pickup}) {
    orch::EvalTask t;
    t.name = std::string(env::phase_name(phase));
    t.policy = [cfg, phase](const env::Observation& obs) {
      env::EnvState s;
      s.hand_pos = {obs(0), obs(1), obs(2)};
      s.grip = obs(3);
      s.obj_pos = {obs(4), obs(5), obs(6)};
      s.held = obs(7) > 0.5;
      return env::scripted_expert(cfg, s, phase).to_vector();
    };
    t.success = [cfg, phase](const env::EnvState& s) { return env::success(cfg, s, phase); };
    tasks.push_back(std::move(t));
  }
  auto scheduler = [cfg](const env::EnvState& s, long) {
    return static_cast<int>(taskgraph::select_oracle(cfg, s));
  };
  auto chain_goal = [cfg](const env::EnvState& s) {
    return env::success(cfg, s, env::Phase::Pickup);
  };
  auto result = orch::evaluate(cfg, tasks, scheduler, chain_goal, 100, 50, 3, 10, 77);
  for (const auto& [name, rate] : result.per_task) {
    INFO(name, " rate ", rate);
    CHECK(rate >= 0.9);
  }
  CHECK(result.full_chain >= 0.9);
}

TEST_CASE("evaluate: random policies essentially never score a pickup") {
  env::EnvConfig cfg;
  std::vector<orch::EvalTask> tasks(1);
  tasks[0].name = "pickup";
  // a fixed arbitrary policy stands in for an untrained agent
  tasks[0].policy = [](const env::Observation& obs) {
    Vector4d a;
    a << std::sin(obs(0) * 37.0), std::cos(obs(1) * 23.0), std::sin(obs(2) * 11.0 + 1.0),
        std::cos(obs(4) * 17.0);
    return a;
  };
  tasks[0].success = [cfg](const env::EnvState& s) {
    return env::success(cfg, s, env::Phase::Pickup);
  };
  auto result = orch::evaluate(
      cfg, tasks, [](const env::EnvState&, long) { return 0; },
      [cfg](const env::EnvState& s) { return env::success(cfg, s, env::Phase::Pickup); }, 100,
      1000, 3, 10, 5);
  CHECK(result.per_task[0].second <= 0.05);
}

TEST_CASE("evaluate: a single episode with a fixed seed is reproducible") {
  env::EnvConfig cfg;
  std::vector<orch::EvalTask> tasks(1);
  tasks[0].name = "reach";
  tasks[0].policy = [cfg](const env::Observation& obs) {
    env::EnvState s;
    s.hand_pos = {obs(0), obs(1), obs(2)};
    s.obj_pos = {obs(4), obs(5), obs(6)};
    s.held = obs(7) > 0.5;
    return env::scripted_expert(cfg, s, env::Phase::Reach).to_vector();
  };
  tasks[0].success = [cfg](const env::EnvState& s) {
    return env::success(cfg, s, env::Phase::Reach);
  };
  auto run_once = [&] {
    return orch::evaluate(
        cfg, tasks, [](const env::EnvState&, long) { return 0; },
        [](const env::EnvState&) { return false; }, 100, 1, 1, 10, 99);
  };
  CHECK(run_once().per_task[0].second == run_once().per_task[0].second);
}

TEST_CASE("method layouts grant exactly the milestone data each baseline may touch") {
  auto sparse = orch::method_layout(orch::MethodKind::SacSparse);
  CHECK(sparse.classifier_count == 0);
  CHECK(sparse.example_set_count == 0);

  auto fb = orch::method_layout(orch::MethodKind::ForwardBackward);
  CHECK(fb.example_set_count == 2);
  CHECK(fb.classifier_count == 2);

  auto avail = orch::method_layout(orch::MethodKind::Avail);
  CHECK(avail.uses_task_model);
  CHECK(avail.classifier_count == 3);

  auto r3l = orch::method_layout(orch::MethodKind::R3lLite);
  CHECK(r3l.uses_rnd);
  CHECK(r3l.classifier_count == 1);
}

TEST_CASE("avail_train: zero budget produces only the initial evaluation rows") {
  auto cfg = micro_config(fresh_dir("budget0"));
  cfg.run.budget_steps = 0;
  auto graph = harness::prepare_graph(cfg, 5);
  auto artifacts = orch::avail_train(cfg, graph, 5);
  REQUIRE(!artifacts.rows.empty());
  for (const auto& row : artifacts.rows) CHECK(row.step == 0);
  CHECK(artifacts.total_env_steps == 0);
  CHECK(artifacts.env_init_calls == 1);
}

TEST_CASE("avail_train: micro run honors the reset-free and step-accounting contracts") {
  auto cfg = micro_config(fresh_dir("micro"));
  auto graph = harness::prepare_graph(cfg, 6);
  auto artifacts = orch::avail_train(cfg, graph, 6);

  CHECK(artifacts.env_init_calls == 1);          // training never re-initializes
  CHECK(artifacts.total_env_steps == 1200);      // budget exactly
  CHECK(artifacts.method == "avail-learned");

  // rows ordered by step, rates in [0, 1], and the tasks cover the graph + chain
  long prev = -1;
  std::set<std::string> names;
  for (const auto& row : artifacts.rows) {
    CHECK(row.step >= prev);
    prev = row.step;
    CHECK(row.success_rate >= 0.0);
    CHECK(row.success_rate <= 1.0);
    names.insert(row.task);
  }
  CHECK(names ==
        std::set<std::string>{"reach", "reposition", "pickup", "full_chain"});
  CHECK(artifacts.rows.back().step == 1200);
}

TEST_CASE("baseline_train: sparse SAC touches no classifier and runs to budget") {
  auto cfg = micro_config(fresh_dir("sparse"));
  cfg.run.method = "sac-sparse";
  auto artifacts = orch::baseline_train(orch::MethodKind::SacSparse, cfg, 7);
  CHECK(artifacts.total_env_steps == 1200);
  CHECK(artifacts.method == "sac-sparse");
  std::set<std::string> names;
  for (const auto& row : artifacts.rows) names.insert(row.task);
  CHECK(names == std::set<std::string>{"pickup", "full_chain"});
}

TEST_CASE("baseline_train: forward-backward alternates two scored tasks") {
  auto cfg = micro_config(fresh_dir("fb"));
  cfg.run.method = "forward-backward";
  auto artifacts = orch::baseline_train(orch::MethodKind::ForwardBackward, cfg, 8);
  std::set<std::string> names;
  for (const auto& row : artifacts.rows) names.insert(row.task);
  CHECK(names == std::set<std::string>{"pickup", "backward", "full_chain"});
}

TEST_CASE("baseline_train: r3l-lite leaves the perturbation slot unscored") {
  auto cfg = micro_config(fresh_dir("r3l"));
  cfg.run.method = "r3l-lite";
  auto artifacts = orch::baseline_train(orch::MethodKind::R3lLite, cfg, 9);
  std::set<std::string> names;
  for (const auto& row : artifacts.rows) names.insert(row.task);
  CHECK(names == std::set<std::string>{"pickup", "full_chain"});
}

TEST_CASE("scheduler slotting: naive training practices tasks in strict rotation") {
  auto cfg = micro_config(fresh_dir("slots"));
  cfg.run.scheduler = "naive";
  cfg.run.budget_steps = 360;
  cfg.run.task_horizon = 60;
  cfg.run.eval_interval = 360;
  auto graph = harness::prepare_graph(cfg, 10);
  auto artifacts = orch::avail_train(cfg, graph, 10);
  CHECK(artifacts.method == "avail-naive");
  CHECK(artifacts.total_env_steps == 360);
}

TEST_CASE("steps_to_threshold scans evaluation rows in order") {
  orch::RunArtifacts a;
  a.rows = {{0, "full_chain", 0.0},
            {500, "full_chain", 0.4},
            {1000, "full_chain", 0.65},
            {1500, "full_chain", 0.9}};
  CHECK(a.steps_to_threshold("full_chain", 0.6) == 1000);
  CHECK(a.steps_to_threshold("full_chain", 0.95) == -1);
  CHECK(a.steps_to_threshold("pickup", 0.1) == -1);
}

TEST_CASE("checkpoint resume: a split run reproduces the uninterrupted run bitwise") {
  const std::string dir = fresh_dir("resume");
  auto cfg = micro_config(dir);
  cfg.run.run_name = "full";
  auto graph = harness::prepare_graph(cfg, 11);
  auto full = orch::avail_train(cfg, graph, 11);

  auto cfg_half = cfg;
  cfg_half.run.run_name = "half";
  cfg_half.run.budget_steps = 600;
  auto half = orch::avail_train(cfg_half, graph, 11);
  CHECK(half.total_env_steps == 600);

  auto cfg_resume = cfg_half;
  cfg_resume.run.budget_steps = 1200;
  auto resumed = orch::resume_train(cfg_resume, half.run_dir);

  REQUIRE(resumed.rows.size() == full.rows.size());
  for (size_t i = 0; i < full.rows.size(); ++i) {
    CHECK(resumed.rows[i].step == full.rows[i].step);
    CHECK(resumed.rows[i].task == full.rows[i].task);
    CHECK(resumed.rows[i].success_rate == full.rows[i].success_rate);  // bitwise
  }
  CHECK(resumed.total_env_steps == 1200);
  CHECK(resumed.env_init_calls == 1);
}

TEST_CASE("evaluate_checkpoint reruns evaluation from the stored snapshots") {
  const std::string dir = fresh_dir("evalck");
  auto cfg = micro_config(dir);
  cfg.run.run_name = "ck";
  cfg.run.budget_steps = 600;
  cfg.run.eval_interval = 600;
  auto graph = harness::prepare_graph(cfg, 12);
  auto artifacts = orch::avail_train(cfg, graph, 12);
  auto result = orch::evaluate_checkpoint(artifacts.run_dir, 2, 600);
  CHECK(result.per_task.size() == 3);
  for (const auto& [name, rate] : result.per_task) {
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
  }
}
