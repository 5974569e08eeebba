#include <cstdlib>
#include <set>

#include "avail/config.hpp"
#include "doctest.h"

using namespace avail;

TEST_CASE("load_config: empty text yields the all-defaults config") {
  auto cfg = harness::config_from_string("");
  CHECK(cfg.run.method == "avail");
  CHECK(cfg.run.scheduler == "learned");
  CHECK(cfg.run.budget_steps == 150000);
  CHECK(cfg.run.task_horizon == 100);
  CHECK(cfg.rl.lr == 3e-4);
  CHECK(cfg.rl.gamma == 0.99);
  CHECK(cfg.rl.batch_size == 256);
  CHECK(cfg.classifier.batch_size == 256);
  CHECK(cfg.classifier.mixup_alpha == 10.0);
  CHECK(cfg.classifier.label_smoothing == 0.1);
  CHECK(cfg.augment.sigma == 0.02);
  CHECK(cfg.graph.milestones_per_task == 300);
}

TEST_CASE("load_config: budget not divisible by the horizon is an invariant error") {
  try {
    harness::config_from_string("[run]\nbudget_steps = 150\ntask_horizon = 100\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("divisible") != std::string::npos);
  }
}

TEST_CASE("load_config: unknown keys are named in the error") {
  try {
    harness::config_from_string("[run]\nbuget_steps = 1000\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("buget_steps") != std::string::npos);
  }
}

TEST_CASE("load_config: empty seed lists are rejected") {
  CHECK_THROWS_AS(harness::config_from_string("[run]\nseeds = \n"), ConfigError);
}

TEST_CASE("config round-trip: load(save(cfg)) == cfg") {
  auto cfg = harness::config_from_string(
      "[run]\nmethod = forward-backward\nscheduler = naive\nseeds = 3,5,8\n"
      "budget_steps = 2000\ntask_horizon = 50\n"
      "[rl]\nlr = 0.001\nhidden_dim = 77\n[classifier]\ndropout = 0.25\n");
  const std::string text = harness::config_to_string(cfg);
  auto cfg2 = harness::config_from_string(text);
  CHECK(cfg2.echo() == cfg.echo());
}

TEST_CASE("config echo covers every registered key exactly once") {
  auto cfg = harness::default_config();
  auto echo = cfg.echo();
  std::set<std::string> keys;
  for (const auto& [k, v] : echo) CHECK(keys.insert(k).second);
  // every consumed hyperparameter group appears
  for (const char* needle :
       {"run.method", "run.scheduler", "run.budget_steps", "run.task_horizon",
        "run.warmup_steps", "env.tether_radius", "env.grasp_radius", "env.max_step",
        "graph.milestones_per_task", "graph.example_margin", "augment.sigma", "rl.lr",
        "rl.gamma", "rl.tau", "rl.batch_size", "rl.m_augmentations", "rl.l_augmentations",
        "rl.critic_dropout", "rl.buffer_capacity", "classifier.lr", "classifier.batch_size",
        "classifier.mixup_alpha", "classifier.label_smoothing",
        "classifier.steps_per_iteration", "classifier.negative_window",
        "classifier.positive_fraction", "taskmodel.epochs", "taskmodel.sample_task"}) {
    CHECK(keys.count(needle) == 1);
  }
}

TEST_CASE("environment overrides: AVAIL_-prefixed variables win") {
  setenv("AVAIL_RUN_BUDGET_STEPS", "400", 1);
  setenv("AVAIL_RL_GAMMA", "0.5", 1);
  auto cfg = harness::config_from_string("[run]\nbudget_steps = 1000\ntask_horizon = 100\n");
  unsetenv("AVAIL_RUN_BUDGET_STEPS");
  unsetenv("AVAIL_RL_GAMMA");
  CHECK(cfg.run.budget_steps == 400);
  CHECK(cfg.rl.gamma == 0.5);
}

TEST_CASE("edge list parses the default cycle") {
  auto cfg = harness::default_config();
  auto edges = cfg.edge_list();
  REQUIRE(edges.size() == 3);
  CHECK(edges[0] == std::pair<std::string, std::string>{"reach", "reposition"});
  CHECK(edges[2] == std::pair<std::string, std::string>{"pickup", "reach"});
}

TEST_CASE("unknown method and scheduler strings fail validation") {
  CHECK_THROWS_AS(harness::config_from_string("[run]\nmethod = dream\n"), ConfigError);
  CHECK_THROWS_AS(harness::config_from_string("[run]\nscheduler = psychic\n"), ConfigError);
}

TEST_CASE("comments and blank lines parse fine") {
  auto cfg = harness::config_from_string(
      "# experiment\n\n[run]\n; note\nbudget_steps = 1000 # inline\ntask_horizon = 100\n");
  CHECK(cfg.run.budget_steps == 1000);
}
