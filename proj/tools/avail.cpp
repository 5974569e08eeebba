// Command-line front end: milestone generation, training, evaluation,
// curve export and a quick self-test of the core property suites.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "avail/config.hpp"
#include "avail/harness.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"
#include "avail/orchestrator.hpp"
#include "avail/rl.hpp"
#include "avail/taskgraph.hpp"

namespace {

using namespace avail;

harness::ExperimentConfig load_or_default(const std::string& path) {
  if (path.empty()) return harness::config_from_string("");
  return harness::load_config(path);
}

int cmd_gen_milestones(const std::string& config_path, const std::string& out_path,
                       std::uint64_t seed) {
  auto cfg = load_or_default(config_path);
  milestones::MilestoneGraph graph = milestones::build_graph(cfg.edge_list());
  milestones::populate_examples(graph, cfg.graph.milestones_per_task, cfg.env,
                                cfg.graph.example_margin, seed);
  milestones::save_graph(graph, out_path);
  std::printf("wrote %d tasks x %d examples to %s\n", graph.size(),
              cfg.graph.milestones_per_task, out_path.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume_dir) {
  auto cfg = load_or_default(config_path);
  if (!resume_dir.empty()) {
    orch::RunArtifacts a = orch::resume_train(cfg, resume_dir);
    std::printf("resumed %s seed=%llu to step %ld (%.1fs)\n", a.method.c_str(),
                static_cast<unsigned long long>(a.seed), a.total_env_steps, a.wall_seconds);
    return 0;
  }
  return harness::run(cfg);
}

int cmd_eval(const std::string& checkpoint_dir, int episodes, std::uint64_t seed) {
  orch::EvalResult r = orch::evaluate_checkpoint(checkpoint_dir, episodes, seed);
  for (const auto& [name, rate] : r.per_task) std::printf("%-12s %.3f\n", name.c_str(), rate);
  std::printf("%-12s %.3f\n", "full_chain", r.full_chain);
  return 0;
}

int cmd_export(const std::vector<std::string>& dirs, const std::string& out) {
  harness::export_curves(dirs, out);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// Quick pass over the core property suites; more thorough versions live in
// the test tree.
int cmd_selftest() {
  int failures = 0;
  auto check = [&failures](bool ok, const char* what) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what);
    if (!ok) ++failures;
  };

  {
    Rng rng(7);
    auto net = nn::make_mlp(4,
                            {{8, nn::Activation::Tanh, true, 0.2},
                             {6, nn::Activation::Relu},
                             {1, nn::Activation::None}},
                            rng);
    Eigen::VectorXd input(4);
    for (int i = 0; i < 4; ++i) input(i) = uniform_range(rng, -1.0, 1.0);
    nn::LossSpec loss{[](const Eigen::VectorXd& y) { return 0.5 * y.squaredNorm(); },
                      [](const Eigen::VectorXd& y) { return y; }};
    check(nn::grad_check(net, input, loss) < 1e-4, "gradient check (tanh/relu/ln/dropout)");
  }

  {
    env::EnvConfig cfg;
    env::EnvState s = env::init(cfg, 11);
    Rng rng(12);
    bool ok = true;
    for (int i = 0; i < 100000 && ok; ++i) {
      env::Action a;
      a.delta = {uniform_range(rng, -1, 1), uniform_range(rng, -1, 1), uniform_range(rng, -1, 1)};
      a.grip_cmd = uniform_range(rng, -1, 1);
      s = env::step(cfg, s, a);
      ok = env::check_invariants(cfg, s);
    }
    check(ok, "environment invariants over 1e5 fuzzed steps");
  }

  {
    env::EnvConfig cfg;
    bool ok = true;
    for (double ox = -0.15; ox <= 0.15 && ok; ox += 0.05)
      for (double oy = -0.15; oy <= 0.15 && ok; oy += 0.05)
        for (double hx = -0.25; hx <= 0.25 && ok; hx += 0.1)
          for (double hy = -0.25; hy <= 0.25 && ok; hy += 0.1) {
            env::EnvState s;
            s.obj_pos = {ox, oy, 0.0};
            s.hand_pos = {hx, hy, 0.1};
            const bool centered = std::hypot(ox, oy) < 0.1;
            const bool over = std::hypot(ox - hx, oy - hy) < 0.15;
            env::Phase want = centered          ? env::Phase::Pickup
                              : over            ? env::Phase::Reposition
                                                : env::Phase::Reach;
            ok = taskgraph::select_oracle(cfg, s) == want;
          }
    check(ok, "oracle task graph matches the branch table");
  }

  {
    env::EnvConfig cfg;
    milestones::MilestoneGraph g = milestones::default_valve3_graph();
    milestones::populate_examples(g, 100, cfg, 0.1, 21);
    bool ok = true;
    for (int v = 0; v < g.size() && ok; ++v) {
      const env::Phase phase = env::phase_from_name(g.vertex(v).task.name);
      for (const auto& obs : g.vertex(v).examples) {
        env::EnvState s;
        s.hand_pos = {obs(0), obs(1), obs(2)};
        s.grip = obs(3);
        s.obj_pos = {obs(4), obs(5), obs(6)};
        s.held = obs(7) > 0.5;
        ok = ok && env::success(cfg, s, phase);
      }
    }
    check(ok, "generated milestone examples satisfy their predicates");
  }

  {
    Rng rng(31);
    rl::ReplayBuffer buf(8);
    for (int i = 0; i < 12; ++i) {
      rl::Transition t;
      t.obs.setConstant(i);
      t.action.setZero();
      t.next_obs.setConstant(i);
      buf.push(t);
    }
    bool ok = buf.size() == 8 && buf.at(0).obs(0) == 8.0;  // oldest evicted
    auto idx = buf.sample_indices(8, rng);
    for (long i : idx) ok = ok && i >= 0 && i < 8;
    check(ok, "replay buffer FIFO eviction and sampling bounds");
  }

  std::printf("%s\n", failures == 0 ? "selftest passed" : "selftest FAILED");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"autonomous reset-free multi-task RL trainer"};
  app.require_subcommand(1);

  std::string config_path, out_path = "milestones.ms", resume_dir, checkpoint_dir;
  std::string export_out = "curves.csv";
  std::vector<std::string> run_dirs;
  int episodes = 20;
  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-milestones", "generate milestone examples");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_path, "output record file")->required();
  gen->add_option("--seed", seed, "generation seed");

  auto* train = app.add_subcommand("train", "train per the config file");
  train->add_option("--config", config_path, "config file");
  train->add_option("--resume", resume_dir, "resume from a run directory's checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpointed run");
  ev->add_option("--checkpoint", checkpoint_dir, "run directory containing checkpoint/")
      ->required();
  ev->add_option("--episodes", episodes, "evaluation episodes per task");
  ev->add_option("--seed", seed, "evaluation seed");

  auto* ex = app.add_subcommand("export-curves", "merge run rows into one tidy CSV");
  ex->add_option("dirs", run_dirs, "run directories")->required();
  ex->add_option("--out", export_out, "output CSV path");

  app.add_subcommand("selftest", "run the quick property suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_milestones(config_path, out_path, seed);
    if (train->parsed()) return cmd_train(config_path, resume_dir);
    if (ev->parsed()) return cmd_eval(checkpoint_dir, episodes, seed);
    if (ex->parsed()) return cmd_export(run_dirs, export_out);
    return cmd_selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
