#include "avail/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "avail/harness.hpp"

namespace avail::orch {

namespace fs = std::filesystem;
using Eigen::MatrixXd;
using Eigen::Vector4d;
using Eigen::VectorXd;
using harness::ExperimentConfig;

MethodKind method_from_name(std::string_view name) {
  if (name == "avail") return MethodKind::Avail;
  if (name == "sac-sparse") return MethodKind::SacSparse;
  if (name == "sac-vice") return MethodKind::SacVice;
  if (name == "forward-backward") return MethodKind::ForwardBackward;
  if (name == "r3l-lite") return MethodKind::R3lLite;
  throw ConfigError("unknown method: " + std::string(name));
}

std::string_view method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Avail:
      return "avail";
    case MethodKind::SacSparse:
      return "sac-sparse";
    case MethodKind::SacVice:
      return "sac-vice";
    case MethodKind::ForwardBackward:
      return "forward-backward";
    case MethodKind::R3lLite:
      return "r3l-lite";
  }
  throw ConfigError("unknown method kind");
}

// ---------------------------------------------------------------------------
// RND

RndModule RndModule::make(int obs_dim, const RndConfig& cfg, Rng& rng) {
  RndModule rnd;
  const std::vector<nn::LayerConfig> layers = {{cfg.hidden_dim, nn::Activation::Relu},
                                               {cfg.hidden_dim, nn::Activation::Relu},
                                               {cfg.embed_dim, nn::Activation::None}};
  rnd.target = nn::make_mlp(obs_dim, layers, rng);
  rnd.predictor = nn::make_mlp(obs_dim, layers, rng);
  rnd.opt = nn::make_optim(rnd.predictor, {.lr = cfg.lr});
  return rnd;
}

double rnd_reward(const RndModule& rnd, const env::Observation& obs) {
  Rng rng(0);
  const VectorXd t = nn::forward_vec(rnd.target, obs, nn::Mode::Eval, rng);
  const VectorXd p = nn::forward_vec(rnd.predictor, obs, nn::Mode::Eval, rng);
  return (p - t).squaredNorm() / static_cast<double>(t.size());
}

VectorXd rnd_reward_batch(const RndModule& rnd, const MatrixXd& obs_rows) {
  Rng rng(0);
  const MatrixXd t = nn::forward(rnd.target, obs_rows, nn::Mode::Eval, rng);
  const MatrixXd p = nn::forward(rnd.predictor, obs_rows, nn::Mode::Eval, rng);
  return (p - t).rowwise().squaredNorm() / static_cast<double>(t.cols());
}

double rnd_update(RndModule& rnd, const MatrixXd& obs_rows) {
  Rng rng(0);
  const MatrixXd t = nn::forward(rnd.target, obs_rows, nn::Mode::Eval, rng);
  nn::ForwardTrace trace;
  const MatrixXd p = nn::forward(rnd.predictor, obs_rows, nn::Mode::Eval, rng, &trace);
  const MatrixXd diff = p - t;
  const double n = static_cast<double>(obs_rows.rows());
  const double dim = static_cast<double>(t.cols());
  const double loss = diff.squaredNorm() / (n * dim);
  nn::Gradients grads = nn::backward(rnd.predictor, trace, 2.0 * diff / (n * dim));
  nn::adam_step(rnd.opt, rnd.predictor, grads);
  rnd.n_updates += 1;
  for (long i = 0; i < diff.rows(); ++i) {
    const double r = diff.row(i).squaredNorm() / dim;
    rnd.reward_count += 1;
    const double d = r - rnd.reward_mean;
    rnd.reward_mean += d / static_cast<double>(rnd.reward_count);
    rnd.reward_m2 += d * (r - rnd.reward_mean);
  }
  return loss;
}

void save_rnd(const RndModule& rnd, const std::string& dir) {
  fs::create_directories(dir);
  nn::save_params(rnd.target, dir + "/target.net");
  nn::save_params(rnd.predictor, dir + "/predictor.net");
  nn::save_optim(rnd.opt, dir + "/predictor.opt");
  std::ofstream out(dir + "/stats.bin", std::ios::binary | std::ios::trunc);
  const std::int64_t nu = rnd.n_updates, rc = rnd.reward_count;
  out.write(reinterpret_cast<const char*>(&nu), 8);
  out.write(reinterpret_cast<const char*>(&rc), 8);
  out.write(reinterpret_cast<const char*>(&rnd.reward_mean), 8);
  out.write(reinterpret_cast<const char*>(&rnd.reward_m2), 8);
  if (!out) throw IoError("save_rnd: write failed");
}

RndModule load_rnd(const std::string& dir) {
  RndModule rnd;
  rnd.target = nn::load_params(dir + "/target.net");
  rnd.predictor = nn::load_params(dir + "/predictor.net");
  rnd.opt = nn::load_optim(dir + "/predictor.opt");
  std::ifstream in(dir + "/stats.bin", std::ios::binary);
  if (!in) throw IoError("load_rnd: cannot open stats");
  std::int64_t nu = 0, rc = 0;
  in.read(reinterpret_cast<char*>(&nu), 8);
  in.read(reinterpret_cast<char*>(&rc), 8);
  in.read(reinterpret_cast<char*>(&rnd.reward_mean), 8);
  in.read(reinterpret_cast<char*>(&rnd.reward_m2), 8);
  rnd.n_updates = nu;
  rnd.reward_count = rc;
  return rnd;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

env::EnvState state_from_obs(const env::Observation& o) {
  env::EnvState s;
  s.hand_pos = {o(0), o(1), o(2)};
  s.grip = o(3);
  s.obj_pos = {o(4), o(5), o(6)};
  s.held = o(7) > 0.5;
  return s;
}

SuccessFn phase_predicate(const env::EnvConfig& cfg, env::Phase phase) {
  return [cfg, phase](const env::EnvState& s) { return env::success(cfg, s, phase); };
}

SuccessFn backward_predicate(const env::EnvConfig& cfg) {
  return [cfg](const env::EnvState& s) {
    return !s.held && s.obj_pos.z() < cfg.reposition_max_z &&
           s.obj_pos.head<2>().norm() > cfg.success_radius;
  };
}

}  // namespace

EvalResult evaluate(const env::EnvConfig& cfg, const std::vector<EvalTask>& tasks,
                    const EvalSchedulerFn& scheduler, const SuccessFn& chain_goal, int T,
                    int n_episodes, int chain_slots, int success_window, std::uint64_t seed) {
  if (n_episodes < 1) throw ValidationError("evaluate: n_episodes must be >= 1");
  EvalResult result;

  for (size_t z = 0; z < tasks.size(); ++z) {
    if (!tasks[z].scored) continue;
    long successes = 0;
    for (int ep = 0; ep < n_episodes; ++ep) {
      env::EnvState s = env::init(cfg, mix_seed(seed, z + 1, static_cast<std::uint64_t>(ep)));
      bool ok = false;
      for (int t = 0; t < T; ++t) {
        const env::Action a = env::Action::from_vector(tasks[z].policy(env::observe(s)));
        s = env::step(cfg, s, a);
        if (t >= T - success_window && tasks[z].success(s)) ok = true;
      }
      if (ok) ++successes;
    }
    result.per_task.emplace_back(tasks[z].name,
                                 static_cast<double>(successes) / n_episodes);
  }

  long chain_successes = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    env::EnvState s = env::init(cfg, mix_seed(seed, 0, static_cast<std::uint64_t>(ep)));
    bool ok = false;
    for (int slot = 0; slot < chain_slots && !ok; ++slot) {
      const int z = scheduler(s, slot);
      if (z < 0 || z >= static_cast<int>(tasks.size()))
        throw ValidationError("evaluate: scheduler selected an unknown task");
      for (int t = 0; t < T; ++t) {
        const env::Action a = env::Action::from_vector(tasks[static_cast<size_t>(z)].policy(env::observe(s)));
        s = env::step(cfg, s, a);
        if (chain_goal(s)) {
          ok = true;
          break;
        }
      }
    }
    if (ok) ++chain_successes;
  }
  result.full_chain = static_cast<double>(chain_successes) / n_episodes;
  return result;
}

// ---------------------------------------------------------------------------
// Run artifacts

long RunArtifacts::steps_to_threshold(const std::string& task, double threshold) const {
  for (const auto& row : rows)
    if (row.task == task && row.success_rate >= threshold) return row.step;
  return -1;
}

MethodLayout method_layout(MethodKind kind) {
  switch (kind) {
    case MethodKind::Avail:
      return {{"reach", "reposition", "pickup"}, 3, 3, true, false};
    case MethodKind::SacSparse:
      return {{"pickup"}, 0, 0, false, false};
    case MethodKind::SacVice:
      return {{"pickup"}, 1, 1, false, false};
    case MethodKind::ForwardBackward:
      return {{"pickup", "backward"}, 2, 2, false, false};
    case MethodKind::R3lLite:
      return {{"pickup", "perturb"}, 1, 1, false, true};
  }
  throw ConfigError("unknown method kind");
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

constexpr std::uint64_t kEnvStream = 0x0e17f00d;
constexpr std::uint64_t kTrainStream = 0x7ea11a17;
constexpr std::uint64_t kTaskModelStream = 0x7a5cb0de;
constexpr std::uint64_t kNetStream = 0x11e7b007;
constexpr std::uint64_t kExampleStream = 0xe8a31701;
constexpr std::uint64_t kEvalStream = 0xe7a10000;

struct TaskSlot {
  std::string name;
  std::optional<env::Phase> phase;
  rl::SacAgent agent;
  rl::ReplayBuffer buffer;
  std::optional<rewards::SuccessClassifier> classifier;
  MatrixXd positives;
  bool sparse = false;
  bool rnd = false;
  bool scored = true;
  long collected = 0;

  TaskSlot(rl::SacAgent a, long capacity) : agent(std::move(a)), buffer(capacity) {}
};

MatrixXd to_matrix(const std::vector<env::Observation>& rows) {
  MatrixXd m(static_cast<long>(rows.size()), env::kObservationDim);
  for (size_t i = 0; i < rows.size(); ++i) m.row(static_cast<long>(i)) = rows[i].transpose();
  return m;
}

void write_matrix_file(const MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path);
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!out) throw IoError("write failed: " + path);
}

MatrixXd read_matrix_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  MatrixXd m(static_cast<long>(rows), static_cast<long>(cols));
  for (std::uint64_t r = 0; r < rows; ++r)
    for (std::uint64_t c = 0; c < cols; ++c) {
      double v;
      in.read(reinterpret_cast<char*>(&v), 8);
      m(static_cast<long>(r), static_cast<long>(c)) = v;
    }
  if (!in) throw IoError("record truncated: " + path);
  return m;
}

std::string timestamp_string() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  char buf[64];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d-%02d%02d%02d-%03d", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec,
                static_cast<int>(ms));
  return buf;
}

class Trainer {
 public:
  Trainer(MethodKind kind, const ExperimentConfig& config,
          const milestones::MilestoneGraph* graph, std::uint64_t seed)
      : kind_(kind), cfg_(config), env_(config.env), seed_(seed) {
    cfg_.validate();
    rl_cfg_ = cfg_.rl;
    rl_cfg_.aug_sigma = cfg_.augment.sigma;  // one augmentation distribution everywhere
    clf_cfg_ = cfg_.classifier;
    clf_cfg_.augment = cfg_.augment;
    build_slots(graph);
    label_ = kind_ == MethodKind::Avail
                 ? "avail-" + cfg_.run.scheduler
                 : std::string(method_name(kind_));
    train_rng_ = Rng(mix_seed(seed_, kTrainStream));
    env_.initialize(mix_seed(seed_, kEnvStream));
  }

  void restore(const std::string& run_dir);
  RunArtifacts run(const std::string& run_dir_override = "");
  EvalResult eval_snapshots(long step) const;

 private:
  void build_slots(const milestones::MilestoneGraph* graph);
  rl::RewardFn reward_fn(size_t slot_idx);
  int select_train_task(long slot_index);
  std::vector<EvalTask> make_eval_tasks() const;
  EvalSchedulerFn make_eval_scheduler() const;
  void record_eval(long step, const EvalResult& r);
  void save_checkpoint(long step) const;
  void write_rows_csv() const;
  void write_summary(double wall_seconds) const;

  MethodKind kind_;
  ExperimentConfig cfg_;
  rl::SacConfig rl_cfg_;
  rewards::ClassifierConfig clf_cfg_;
  env::CountingEnv env_;
  std::uint64_t seed_;
  std::string label_;
  std::vector<TaskSlot> slots_;
  milestones::MilestoneGraph graph_;  // valid for Avail
  std::optional<taskgraph::TaskModel> task_model_;
  std::optional<RndModule> rnd_;
  taskgraph::TaskModelConfig tm_cfg_;
  Rng train_rng_;
  long step_ = 0;
  int current_task_ = 0;
  std::vector<EvalRow> rows_;
  std::set<long> evaluated_steps_;
  std::string run_dir_;
  double wall_before_ = 0.0;  // accumulated over previous sessions of this run
};

void Trainer::build_slots(const milestones::MilestoneGraph* graph) {
  Rng net_rng(mix_seed(seed_, kNetStream));
  const int obs_dim = env::kObservationDim;
  const int act_dim = env::kActionDim;
  auto make_agent = [&]() { return rl::SacAgent::make(obs_dim, act_dim, rl_cfg_, net_rng); };

  tm_cfg_ = cfg_.taskmodel;
  tm_cfg_.augment = {cfg_.augment.sigma, false};

  switch (kind_) {
    case MethodKind::Avail: {
      if (!graph) throw ValidationError("avail_train: milestone graph required");
      graph_ = *graph;
      graph_.validate();
      for (int v = 0; v < graph_.size(); ++v) {
        if (graph_.vertex(v).examples.empty())
          throw ValidationError("avail_train: vertex '" + graph_.vertex(v).task.name +
                                "' has no examples");
        TaskSlot slot(make_agent(), rl_cfg_.buffer_capacity);
        slot.name = graph_.vertex(v).task.name;
        slot.phase = env::phase_from_name(slot.name);
        slot.classifier = rewards::SuccessClassifier::make(obs_dim, clf_cfg_, v, net_rng);
        slot.positives = graph_.examples_matrix(v);
        slots_.push_back(std::move(slot));
      }
      Rng tm_rng(mix_seed(seed_, kTaskModelStream));
      taskgraph::FitReport report;
      task_model_ = taskgraph::fit_task_model(graph_, tm_cfg_, cfg_.env, tm_rng, &report);
      if (cfg_.run.log_progress)
        std::fprintf(stderr, "[%s seed=%llu] task model holdout accuracy %.3f\n",
                     ("avail-" + cfg_.run.scheduler).c_str(),
                     static_cast<unsigned long long>(seed_), report.holdout_accuracy);
      break;
    }
    case MethodKind::SacSparse:
    case MethodKind::SacVice: {
      TaskSlot slot(make_agent(), rl_cfg_.buffer_capacity);
      slot.name = "pickup";
      slot.phase = env::Phase::Pickup;
      if (kind_ == MethodKind::SacVice) {
        auto pickup_graph = milestones::build_graph({{"pickup", "pickup"}});
        slot.positives = to_matrix(milestones::generate_examples(
            pickup_graph, 0, cfg_.graph.milestones_per_task, cfg_.env,
            cfg_.graph.example_margin, mix_seed(seed_, kExampleStream)));
        slot.classifier = rewards::SuccessClassifier::make(obs_dim, clf_cfg_, 0, net_rng);
      } else {
        slot.sparse = true;
      }
      slots_.push_back(std::move(slot));
      break;
    }
    case MethodKind::ForwardBackward: {
      auto pickup_graph = milestones::build_graph({{"pickup", "pickup"}});
      TaskSlot fwd(make_agent(), rl_cfg_.buffer_capacity);
      fwd.name = "pickup";
      fwd.phase = env::Phase::Pickup;
      fwd.positives = to_matrix(milestones::generate_examples(
          pickup_graph, 0, cfg_.graph.milestones_per_task, cfg_.env, cfg_.graph.example_margin,
          mix_seed(seed_, kExampleStream)));
      fwd.classifier = rewards::SuccessClassifier::make(obs_dim, clf_cfg_, 0, net_rng);
      slots_.push_back(std::move(fwd));

      TaskSlot bwd(make_agent(), rl_cfg_.buffer_capacity);
      bwd.name = "backward";
      bwd.positives = to_matrix(milestones::sample_off_center_table_states(
          cfg_.graph.milestones_per_task, cfg_.env, cfg_.graph.example_margin,
          mix_seed(seed_, kExampleStream, 1)));
      bwd.classifier = rewards::SuccessClassifier::make(obs_dim, clf_cfg_, 1, net_rng);
      slots_.push_back(std::move(bwd));
      break;
    }
    case MethodKind::R3lLite: {
      auto pickup_graph = milestones::build_graph({{"pickup", "pickup"}});
      TaskSlot fwd(make_agent(), rl_cfg_.buffer_capacity);
      fwd.name = "pickup";
      fwd.phase = env::Phase::Pickup;
      fwd.positives = to_matrix(milestones::generate_examples(
          pickup_graph, 0, cfg_.graph.milestones_per_task, cfg_.env, cfg_.graph.example_margin,
          mix_seed(seed_, kExampleStream)));
      fwd.classifier = rewards::SuccessClassifier::make(obs_dim, clf_cfg_, 0, net_rng);
      slots_.push_back(std::move(fwd));

      TaskSlot pert(make_agent(), rl_cfg_.buffer_capacity);
      pert.name = "perturb";
      pert.rnd = true;
      pert.scored = false;
      slots_.push_back(std::move(pert));
      rnd_ = RndModule::make(obs_dim, RndConfig{}, net_rng);
      break;
    }
  }
}

rl::RewardFn Trainer::reward_fn(size_t slot_idx) {
  TaskSlot& slot = slots_[slot_idx];
  if (slot.sparse) {
    const env::EnvConfig cfg = cfg_.env;
    const env::Phase phase = *slot.phase;
    return [cfg, phase](const MatrixXd& next_obs) {
      VectorXd r(next_obs.rows());
      for (long i = 0; i < next_obs.rows(); ++i) {
        const env::Observation o = next_obs.row(i).transpose();
        r(i) = env::success(cfg, state_from_obs(o), phase) ? 1.0 : 0.0;
      }
      return r;
    };
  }
  if (slot.rnd) {
    const RndModule* rnd = &*rnd_;
    return [rnd](const MatrixXd& next_obs) { return rnd_reward_batch(*rnd, next_obs); };
  }
  const rewards::SuccessClassifier* clf = &*slot.classifier;
  return [clf](const MatrixXd& next_obs) { return rewards::reward_batch(*clf, next_obs); };
}

int Trainer::select_train_task(long slot_index) {
  if (slots_.size() == 1) return 0;
  if (kind_ == MethodKind::ForwardBackward || kind_ == MethodKind::R3lLite)
    return static_cast<int>(slot_index % 2);

  const auto kind = taskgraph::scheduler_from_name(cfg_.run.scheduler);
  switch (kind) {
    case taskgraph::SchedulerKind::Learned: {
      const env::Observation obs = env::observe(env_.state());
      if (tm_cfg_.sample_task)
        return taskgraph::select_sampled(*task_model_, obs, train_rng_);
      return taskgraph::select_learned(*task_model_, obs);
    }
    case taskgraph::SchedulerKind::Naive:
      return taskgraph::select_naive(slot_index, static_cast<int>(slots_.size()));
    case taskgraph::SchedulerKind::Oracle: {
      const env::Phase phase = taskgraph::select_oracle(cfg_.env, env_.state());
      const int idx = graph_.index_of(env::phase_name(phase));
      if (idx < 0) throw ValidationError("oracle scheduler: graph lacks task");
      return idx;
    }
  }
  throw ConfigError("unknown scheduler");
}

std::vector<EvalTask> Trainer::make_eval_tasks() const {
  std::vector<EvalTask> tasks;
  for (const auto& slot : slots_) {
    EvalTask t;
    t.name = slot.name;
    t.scored = slot.scored;
    // deterministic snapshot policy
    auto actor = std::make_shared<nn::MlpParams>(slot.agent.actor);
    const int act_dim = slot.agent.action_dim;
    t.policy = [actor, act_dim](const env::Observation& obs) {
      Rng rng(0);
      const VectorXd head = nn::forward_vec(*actor, obs, nn::Mode::Eval, rng);
      Vector4d a;
      for (int j = 0; j < act_dim; ++j) a(j) = std::tanh(head(j));
      return a;
    };
    if (slot.phase) {
      t.success = phase_predicate(cfg_.env, *slot.phase);
    } else if (slot.name == "backward") {
      t.success = backward_predicate(cfg_.env);
    } else {
      t.success = [](const env::EnvState&) { return false; };
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

EvalSchedulerFn Trainer::make_eval_scheduler() const {
  if (kind_ != MethodKind::Avail) {
    return [](const env::EnvState&, long) { return 0; };  // deploy the task policy
  }
  const auto kind = taskgraph::scheduler_from_name(cfg_.run.scheduler);
  switch (kind) {
    case taskgraph::SchedulerKind::Learned: {
      auto model = std::make_shared<taskgraph::TaskModel>(*task_model_);
      return [model](const env::EnvState& s, long) {
        return taskgraph::select_learned(*model, env::observe(s));
      };
    }
    case taskgraph::SchedulerKind::Naive: {
      const int k = static_cast<int>(slots_.size());
      return [k](const env::EnvState&, long slot) { return taskgraph::select_naive(slot, k); };
    }
    case taskgraph::SchedulerKind::Oracle: {
      const env::EnvConfig cfg = cfg_.env;
      milestones::MilestoneGraph g = graph_;
      return [cfg, g](const env::EnvState& s, long) {
        return g.index_of(env::phase_name(taskgraph::select_oracle(cfg, s)));
      };
    }
  }
  throw ConfigError("unknown scheduler");
}

EvalResult Trainer::eval_snapshots(long step) const {
  const SuccessFn chain_goal = phase_predicate(cfg_.env, env::Phase::Pickup);
  return evaluate(cfg_.env, make_eval_tasks(), make_eval_scheduler(), chain_goal,
                  cfg_.run.task_horizon, cfg_.run.eval_episodes, cfg_.run.chain_slots,
                  cfg_.run.eval_success_window,
                  mix_seed(seed_, kEvalStream, static_cast<std::uint64_t>(step)));
}

void Trainer::record_eval(long step, const EvalResult& r) {
  for (const auto& [name, rate] : r.per_task) rows_.push_back({step, name, rate});
  rows_.push_back({step, "full_chain", r.full_chain});
  evaluated_steps_.insert(step);
  if (cfg_.run.log_progress) {
    std::string parts;
    for (const auto& [name, rate] : r.per_task) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " %s=%.2f", name.c_str(), rate);
      parts += buf;
    }
    std::fprintf(stderr, "[%s seed=%llu] step %ld/%ld%s full_chain=%.2f\n", label_.c_str(),
                 static_cast<unsigned long long>(seed_), step, cfg_.run.budget_steps,
                 parts.c_str(), r.full_chain);
  }
}

void Trainer::write_rows_csv() const {
  harness::write_rows_csv(run_dir_ + "/rows.csv", rows_, label_, seed_);
}

void Trainer::write_summary(double wall_seconds) const {
  RunArtifacts a;
  a.method = label_;
  a.scheduler = cfg_.run.scheduler;
  a.seed = seed_;
  a.rows = rows_;
  a.config_echo = cfg_.echo();
  a.run_dir = run_dir_;
  a.wall_seconds = wall_seconds;
  a.total_env_steps = env_.steps();
  a.env_init_calls = env_.init_calls();
  for (const auto& row : rows_)
    if (row.step == step_) a.final_rates[row.task] = row.success_rate;
  harness::write_summary_json(run_dir_ + "/summary.json", a);
}

void Trainer::save_checkpoint(long step) const {
  const std::string tmp = run_dir_ + "/checkpoint.tmp";
  const std::string final_dir = run_dir_ + "/checkpoint";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  std::ofstream meta(tmp + "/meta.bin", std::ios::binary | std::ios::trunc);
  if (!meta) throw IoError("save_checkpoint: cannot open meta");
  auto wl = [&meta](std::int64_t v) { meta.write(reinterpret_cast<const char*>(&v), 8); };
  auto wd = [&meta](double v) { meta.write(reinterpret_cast<const char*>(&v), 8); };
  wl(static_cast<std::int64_t>(kind_));
  wl(static_cast<std::int64_t>(seed_));
  wl(step);
  wl(current_task_);
  wl(static_cast<std::int64_t>(slots_.size()));
  const env::EnvState& s = env_.state();
  wd(s.hand_pos.x());
  wd(s.hand_pos.y());
  wd(s.hand_pos.z());
  wd(s.grip);
  wd(s.obj_pos.x());
  wd(s.obj_pos.y());
  wd(s.obj_pos.z());
  wl(s.held ? 1 : 0);
  wl(s.step_count);
  wl(env_.init_calls());
  wl(env_.steps());
  wd(wall_before_);
  for (const auto& slot : slots_) wl(slot.collected);
  if (!meta) throw IoError("save_checkpoint: meta write failed");
  meta.close();

  std::ofstream rng_out(tmp + "/rng.txt", std::ios::trunc);
  rng_out << rng_to_string(train_rng_);
  if (!rng_out) throw IoError("save_checkpoint: rng write failed");
  rng_out.close();

  harness::save_rows_bin(tmp + "/rows.bin", rows_);

  if (kind_ == MethodKind::Avail) {
    milestones::save_graph(graph_, tmp + "/graph.ms");
    taskgraph::save_task_model(*task_model_, tmp + "/taskmodel.net");
  }
  if (rnd_) save_rnd(*rnd_, tmp + "/rnd");

  for (size_t i = 0; i < slots_.size(); ++i) {
    const std::string sd = tmp + "/slot_" + std::to_string(i);
    fs::create_directories(sd);
    rl::save_agent(slots_[i].agent, sd + "/agent");
    slots_[i].buffer.save(sd + "/buffer.buf");
    if (slots_[i].classifier) {
      nn::save_params(slots_[i].classifier->params, sd + "/classifier.net");
      nn::save_optim(slots_[i].classifier->opt, sd + "/classifier.opt");
    }
    if (slots_[i].positives.size()) write_matrix_file(slots_[i].positives, sd + "/positives.bin");
  }

  const std::string old_dir = run_dir_ + "/checkpoint.old";
  fs::remove_all(old_dir);
  if (fs::exists(final_dir)) fs::rename(final_dir, old_dir);
  fs::rename(tmp, final_dir);
  fs::remove_all(old_dir);
}

void Trainer::restore(const std::string& run_dir) {
  const std::string cp = run_dir + "/checkpoint";
  std::ifstream meta(cp + "/meta.bin", std::ios::binary);
  if (!meta) throw IoError("restore: no checkpoint under " + run_dir);
  auto rl_ = [&meta]() {
    std::int64_t v = 0;
    meta.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto rd = [&meta]() {
    double v = 0;
    meta.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const MethodKind kind = static_cast<MethodKind>(rl_());
  if (kind != kind_) throw ValidationError("restore: method mismatch with checkpoint");
  const std::uint64_t seed = static_cast<std::uint64_t>(rl_());
  if (seed != seed_) throw ValidationError("restore: seed mismatch with checkpoint");
  step_ = rl_();
  current_task_ = static_cast<int>(rl_());
  const long n_slots = rl_();
  if (n_slots != static_cast<long>(slots_.size()))
    throw ValidationError("restore: slot count mismatch");
  env::EnvState s;
  s.hand_pos.x() = rd();
  s.hand_pos.y() = rd();
  s.hand_pos.z() = rd();
  s.grip = rd();
  s.obj_pos.x() = rd();
  s.obj_pos.y() = rd();
  s.obj_pos.z() = rd();
  s.held = rl_() != 0;
  s.step_count = rl_();
  const long init_calls = rl_();
  const long env_steps = rl_();
  wall_before_ = rd();
  for (auto& slot : slots_) slot.collected = rl_();
  if (!meta) throw IoError("restore: meta truncated");
  env_.restore(s, init_calls, env_steps);

  std::ifstream rng_in(cp + "/rng.txt");
  std::stringstream ss;
  ss << rng_in.rdbuf();
  train_rng_ = rng_from_string(ss.str());

  rows_ = harness::load_rows_bin(cp + "/rows.bin");
  evaluated_steps_.clear();
  for (const auto& row : rows_) evaluated_steps_.insert(row.step);

  if (kind_ == MethodKind::Avail) {
    graph_ = milestones::load_graph(cp + "/graph.ms");
    task_model_ = taskgraph::load_task_model(cp + "/taskmodel.net");
  }
  if (fs::exists(cp + "/rnd")) rnd_ = load_rnd(cp + "/rnd");

  for (size_t i = 0; i < slots_.size(); ++i) {
    const std::string sd = cp + "/slot_" + std::to_string(i);
    slots_[i].agent = rl::load_agent(sd + "/agent");
    slots_[i].buffer = rl::ReplayBuffer::load(sd + "/buffer.buf");
    if (slots_[i].classifier) {
      slots_[i].classifier->params = nn::load_params(sd + "/classifier.net");
      slots_[i].classifier->opt = nn::load_optim(sd + "/classifier.opt");
    }
    if (fs::exists(sd + "/positives.bin"))
      slots_[i].positives = read_matrix_file(sd + "/positives.bin");
  }
  run_dir_ = run_dir;
}

RunArtifacts Trainer::run(const std::string& run_dir_override) {
  const auto t0 = std::chrono::steady_clock::now();
  if (run_dir_.empty()) {
    if (!run_dir_override.empty()) {
      run_dir_ = run_dir_override;
    } else if (!cfg_.run.run_name.empty()) {
      // stable name; the seed keeps multi-seed configs collision-free
      run_dir_ = cfg_.run.out_dir + "/" + cfg_.run.run_name + "-" + std::to_string(seed_);
    } else {
      run_dir_ = cfg_.run.out_dir + "/" + label_ + "-" + std::to_string(seed_) + "-" +
                 timestamp_string();
    }
  }
  fs::create_directories(run_dir_);
  harness::save_config(cfg_, run_dir_ + "/config.ini");

  const long T = cfg_.run.task_horizon;
  const long budget = cfg_.run.budget_steps;

  if (!evaluated_steps_.count(0) && step_ == 0) {
    record_eval(0, eval_snapshots(0));
    write_rows_csv();
    if (cfg_.run.checkpoint) save_checkpoint(0);
  }

  for (long s = step_; s < budget; ++s) {
    if (s % T == 0) current_task_ = select_train_task(s / T);
    TaskSlot& slot = slots_[static_cast<size_t>(current_task_)];

    const env::Observation obs = env::observe(env_.state());
    Vector4d action_vec;
    if (slot.collected < cfg_.run.warmup_steps) {
      for (int j = 0; j < env::kActionDim; ++j)
        action_vec(j) = uniform_range(train_rng_, -1.0, 1.0);
    } else {
      action_vec = rl::act(slot.agent, obs, /*stochastic=*/true, train_rng_);
    }
    env_.apply(env::Action::from_vector(action_vec));
    const env::Observation next_obs = env::observe(env_.state());

    slot.buffer.push({obs, action_vec, next_obs, false, current_task_});
    slot.collected += 1;

    if (slot.collected > cfg_.run.warmup_steps && slot.buffer.size() >= rl_cfg_.batch_size) {
      rl::sac_update(slot.agent, slot.buffer, reward_fn(static_cast<size_t>(current_task_)),
                     cfg_.env, train_rng_);
      if (slot.classifier) {
        const long n_pos =
            std::max<long>(1, static_cast<long>(clf_cfg_.batch_size * clf_cfg_.positive_fraction));
        const long n_neg = std::max<long>(1, clf_cfg_.batch_size - n_pos);
        for (int k = 0; k < clf_cfg_.steps_per_iteration; ++k) {
          const auto idx =
              slot.buffer.sample_recent_indices(n_neg, clf_cfg_.negative_window, train_rng_);
          MatrixXd negatives(n_neg, env::kObservationDim);
          for (long i = 0; i < n_neg; ++i)
            negatives.row(i) = slot.buffer.at(idx[static_cast<size_t>(i)]).next_obs.transpose();
          rewards::classifier_update(*slot.classifier, slot.positives, negatives, clf_cfg_,
                                     cfg_.env, train_rng_);
        }
      }
      if (slot.rnd) {
        const auto idx = slot.buffer.sample_indices(rl_cfg_.batch_size, train_rng_);
        MatrixXd states(rl_cfg_.batch_size, env::kObservationDim);
        for (long i = 0; i < rl_cfg_.batch_size; ++i)
          states.row(i) = slot.buffer.at(idx[static_cast<size_t>(i)]).next_obs.transpose();
        rnd_update(*rnd_, states);
      }
    }

    step_ = s + 1;
    const bool due = (step_ % cfg_.run.eval_interval == 0) || step_ == budget;
    if (due && !evaluated_steps_.count(step_)) {
      record_eval(step_, eval_snapshots(step_));
      write_rows_csv();
      if (cfg_.run.checkpoint) save_checkpoint(step_);
    }
  }

  const double wall =
      wall_before_ +
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_rows_csv();
  write_summary(wall);

  RunArtifacts a;
  a.method = label_;
  a.scheduler = cfg_.run.scheduler;
  a.seed = seed_;
  a.rows = rows_;
  a.config_echo = cfg_.echo();
  a.run_dir = run_dir_;
  a.wall_seconds = wall;
  a.total_env_steps = env_.steps();
  a.env_init_calls = env_.init_calls();
  for (const auto& row : rows_)
    if (row.step == step_) a.final_rates[row.task] = row.success_rate;
  return a;
}

}  // namespace

RunArtifacts avail_train(const ExperimentConfig& config, const milestones::MilestoneGraph& graph,
                         std::uint64_t seed) {
  Trainer trainer(MethodKind::Avail, config, &graph, seed);
  return trainer.run();
}

RunArtifacts baseline_train(MethodKind kind, const ExperimentConfig& config, std::uint64_t seed) {
  if (kind == MethodKind::Avail)
    throw ValidationError("baseline_train: use avail_train for the avail method");
  Trainer trainer(kind, config, nullptr, seed);
  return trainer.run();
}

RunArtifacts resume_train(const ExperimentConfig& config, const std::string& run_dir) {
  std::ifstream meta(run_dir + "/checkpoint/meta.bin", std::ios::binary);
  if (!meta) throw IoError("resume_train: no checkpoint under " + run_dir);
  std::int64_t kind_raw = 0, seed_raw = 0;
  meta.read(reinterpret_cast<char*>(&kind_raw), 8);
  meta.read(reinterpret_cast<char*>(&seed_raw), 8);
  meta.close();
  const MethodKind kind = static_cast<MethodKind>(kind_raw);
  const std::uint64_t seed = static_cast<std::uint64_t>(seed_raw);

  std::optional<milestones::MilestoneGraph> graph;
  if (kind == MethodKind::Avail)
    graph = milestones::load_graph(run_dir + "/checkpoint/graph.ms");

  Trainer trainer(kind, config, graph ? &*graph : nullptr, seed);
  trainer.restore(run_dir);
  return trainer.run();
}

EvalResult evaluate_checkpoint(const std::string& run_dir, int n_episodes, std::uint64_t seed) {
  ExperimentConfig config = harness::load_config(run_dir + "/config.ini");
  config.run.eval_episodes = n_episodes;
  config.run.budget_steps = 0;  // no training; evaluate restored snapshots only
  config.run.checkpoint = false;
  config.run.log_progress = false;

  std::ifstream meta(run_dir + "/checkpoint/meta.bin", std::ios::binary);
  if (!meta) throw IoError("evaluate_checkpoint: no checkpoint under " + run_dir);
  std::int64_t kind_raw = 0, seed_raw = 0;
  meta.read(reinterpret_cast<char*>(&kind_raw), 8);
  meta.read(reinterpret_cast<char*>(&seed_raw), 8);
  meta.close();
  const MethodKind kind = static_cast<MethodKind>(kind_raw);

  std::optional<milestones::MilestoneGraph> graph;
  if (kind == MethodKind::Avail)
    graph = milestones::load_graph(run_dir + "/checkpoint/graph.ms");

  Trainer trainer(kind, config, graph ? &*graph : nullptr,
                  static_cast<std::uint64_t>(seed_raw));
  trainer.restore(run_dir);
  return trainer.eval_snapshots(static_cast<long>(seed));
}

}  // namespace avail::orch
