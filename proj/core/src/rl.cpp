#include "avail/rl.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace avail::rl {

using Eigen::MatrixXd;
using Eigen::Vector4d;
using Eigen::VectorXd;

namespace {

constexpr double kLogStdMin = -20.0;
constexpr double kLogStdMax = 2.0;
constexpr double kTanhEps = 1e-6;
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

}  // namespace

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(long capacity) : capacity_(capacity) {
  if (capacity < 1) throw ValidationError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[static_cast<size_t>(cursor_)] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<long> ReplayBuffer::sample_indices(long n, Rng& rng) const {
  if (size() < n)
    throw ValidationError("ReplayBuffer: cannot sample " + std::to_string(n) + " from " +
                          std::to_string(size()));
  std::vector<long> out(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i)
    out[static_cast<size_t>(i)] =
        static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(size())));
  return out;
}

std::vector<long> ReplayBuffer::sample_recent_indices(long n, long window, Rng& rng) const {
  if (size() < 1) throw ValidationError("ReplayBuffer: empty");
  const long w = std::min(window, size());
  std::vector<long> out(static_cast<size_t>(n));
  for (long i = 0; i < n; ++i) {
    const long back = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(w)));
    // cursor_ points at the next write slot; cursor_-1 is the newest entry
    long idx = (cursor_ - 1 - back) % capacity_;
    if (idx < 0) idx += capacity_;
    if (size() < capacity_) idx = size() - 1 - back;
    out[static_cast<size_t>(i)] = idx;
  }
  return out;
}

Batch gather(const ReplayBuffer& buf, const std::vector<long>& indices) {
  const long n = static_cast<long>(indices.size());
  Batch b;
  b.obs.resize(n, env::kObservationDim);
  b.actions.resize(n, env::kActionDim);
  b.next_obs.resize(n, env::kObservationDim);
  for (long i = 0; i < n; ++i) {
    const Transition& t = buf.at(indices[static_cast<size_t>(i)]);
    b.obs.row(i) = t.obs.transpose();
    b.actions.row(i) = t.action.transpose();
    b.next_obs.row(i) = t.next_obs.transpose();
  }
  return b;
}

void ReplayBuffer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("ReplayBuffer::save: cannot open " + path);
  const char magic[8] = {'A', 'V', 'A', 'I', 'L', 'B', 'U', 'F'};
  out.write(magic, 8);
  const std::uint64_t cap = static_cast<std::uint64_t>(capacity_);
  const std::uint64_t n = static_cast<std::uint64_t>(data_.size());
  const std::uint64_t cur = static_cast<std::uint64_t>(cursor_);
  out.write(reinterpret_cast<const char*>(&cap), 8);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&cur), 8);
  for (const auto& t : data_) {
    out.write(reinterpret_cast<const char*>(t.obs.data()), 8 * env::kObservationDim);
    out.write(reinterpret_cast<const char*>(t.action.data()), 8 * env::kActionDim);
    out.write(reinterpret_cast<const char*>(t.next_obs.data()), 8 * env::kObservationDim);
    const std::uint8_t done = t.done ? 1 : 0;
    const std::int32_t task = t.task;
    out.write(reinterpret_cast<const char*>(&done), 1);
    out.write(reinterpret_cast<const char*>(&task), 4);
  }
  if (!out) throw IoError("ReplayBuffer::save: write failed");
}

ReplayBuffer ReplayBuffer::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ReplayBuffer::load: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "AVAILBUF", 8) != 0)
    throw IoError("ReplayBuffer::load: bad magic");
  std::uint64_t cap = 0, n = 0, cur = 0;
  in.read(reinterpret_cast<char*>(&cap), 8);
  in.read(reinterpret_cast<char*>(&n), 8);
  in.read(reinterpret_cast<char*>(&cur), 8);
  ReplayBuffer buf(static_cast<long>(cap));
  buf.cursor_ = static_cast<long>(cur);
  buf.data_.resize(n);
  for (auto& t : buf.data_) {
    in.read(reinterpret_cast<char*>(t.obs.data()), 8 * env::kObservationDim);
    in.read(reinterpret_cast<char*>(t.action.data()), 8 * env::kActionDim);
    in.read(reinterpret_cast<char*>(t.next_obs.data()), 8 * env::kObservationDim);
    std::uint8_t done = 0;
    std::int32_t task = 0;
    in.read(reinterpret_cast<char*>(&done), 1);
    in.read(reinterpret_cast<char*>(&task), 4);
    t.done = done != 0;
    t.task = task;
  }
  if (!in) throw IoError("ReplayBuffer::load: record truncated");
  return buf;
}

// ---------------------------------------------------------------------------
// Agent

double SacAgent::alpha() const { return std::exp(log_alpha); }
double SacAgent::entropy_target() const { return -static_cast<double>(action_dim); }

SacAgent SacAgent::make(int obs_dim, int action_dim, const SacConfig& cfg, Rng& rng) {
  SacAgent a;
  a.cfg = cfg;
  a.obs_dim = obs_dim;
  a.action_dim = action_dim;
  // near-zero initial actions: the head starts at 1e-2 of the fan-in scale
  a.actor = nn::make_mlp(obs_dim,
                         {{cfg.hidden_dim, nn::Activation::Relu},
                          {cfg.hidden_dim, nn::Activation::Relu},
                          {2 * action_dim, nn::Activation::None, false, 0.0, 1e-2}},
                         rng);
  auto critic_layers = std::vector<nn::LayerConfig>{
      {cfg.hidden_dim, nn::Activation::Relu, true, cfg.critic_dropout},
      {cfg.hidden_dim, nn::Activation::Relu, true, cfg.critic_dropout},
      {1, nn::Activation::None}};
  a.critic1 = nn::make_mlp(obs_dim + action_dim, critic_layers, rng);
  a.critic2 = nn::make_mlp(obs_dim + action_dim, critic_layers, rng);
  a.target1 = a.critic1;
  a.target2 = a.critic2;
  a.actor_opt = nn::make_optim(a.actor, {.lr = cfg.lr});
  a.critic1_opt = nn::make_optim(a.critic1, {.lr = cfg.lr});
  a.critic2_opt = nn::make_optim(a.critic2, {.lr = cfg.lr});
  a.log_alpha = cfg.init_log_alpha;
  a.alpha_opt.cfg.lr = cfg.lr;
  return a;
}

// ---------------------------------------------------------------------------
// Squashed-Gaussian policy head

namespace {

struct PolicySample {
  MatrixXd mean, log_std, std_dev, eps, actions;  // N x A
  MatrixXd clamp_active;                          // 1 where log_std within bounds
  VectorXd log_prob;                              // N
};

// head = [mean | log_std]; stochastic draws eps ~ N(0,1), deterministic uses
// eps = 0 (so actions = tanh(mean)).
PolicySample run_policy(const MatrixXd& head, int action_dim, bool stochastic, Rng& rng) {
  const long n = head.rows();
  PolicySample ps;
  ps.mean = head.leftCols(action_dim);
  ps.clamp_active.resize(n, action_dim);
  ps.log_std.resize(n, action_dim);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < action_dim; ++j) {
      const double raw = head(i, action_dim + j);
      ps.log_std(i, j) = std::clamp(raw, kLogStdMin, kLogStdMax);
      ps.clamp_active(i, j) = (raw > kLogStdMin && raw < kLogStdMax) ? 1.0 : 0.0;
    }
  ps.std_dev = ps.log_std.array().exp();
  ps.eps.resize(n, action_dim);
  if (stochastic) {
    for (long i = 0; i < n; ++i)
      for (int j = 0; j < action_dim; ++j) ps.eps(i, j) = normal_sample(rng);
  } else {
    ps.eps.setZero();
  }
  MatrixXd pre = ps.mean + ps.std_dev.cwiseProduct(ps.eps);
  ps.actions = pre.array().tanh();
  ps.log_prob.resize(n);
  for (long i = 0; i < n; ++i) {
    double lp = 0.0;
    for (int j = 0; j < action_dim; ++j) {
      const double a = ps.actions(i, j);
      lp += -0.5 * ps.eps(i, j) * ps.eps(i, j) - kHalfLog2Pi - ps.log_std(i, j) -
            std::log(1.0 - a * a + kTanhEps);
    }
    ps.log_prob(i) = lp;
  }
  return ps;
}

MatrixXd concat_obs_actions(const MatrixXd& obs, const MatrixXd& actions) {
  MatrixXd x(obs.rows(), obs.cols() + actions.cols());
  x.leftCols(obs.cols()) = obs;
  x.rightCols(actions.cols()) = actions;
  return x;
}

MatrixXd augment_rows(const MatrixXd& rows, double sigma, Rng& rng) {
  // state-noise augmentation; the held flag (last column) is never noised
  MatrixXd out = rows;
  if (sigma <= 0.0) return out;
  for (long c = 0; c + 1 < out.cols(); ++c)
    for (long r = 0; r < out.rows(); ++r) out(r, c) += sigma * normal_sample(rng);
  return out;
}

}  // namespace

Vector4d act(const SacAgent& agent, const env::Observation& obs, bool stochastic, Rng& rng) {
  Rng eval_rng(0);
  MatrixXd head = nn::forward(agent.actor, obs.transpose(), nn::Mode::Eval, eval_rng);
  PolicySample ps = run_policy(head, agent.action_dim, stochastic, rng);
  return ps.actions.row(0).transpose();
}

VectorXd compute_target(const SacAgent& agent, const Batch& batch, const RewardFn& reward_fn,
                        const env::EnvConfig& env_cfg, Rng& rng) {
  (void)env_cfg;
  if (batch.size() == 0) throw ValidationError("compute_target: empty batch");
  const long n = batch.size();
  const int L = agent.cfg.l_augmentations;

  VectorXd rewards = reward_fn(batch.next_obs);
  if (rewards.size() != n) throw ShapeError("compute_target: reward_fn returned wrong size");

  MatrixXd stacked(L * n, batch.next_obs.cols());
  for (int l = 0; l < L; ++l)
    stacked.middleRows(l * n, n) = augment_rows(batch.next_obs, agent.cfg.aug_sigma, rng);

  Rng eval_rng(0);
  MatrixXd head = nn::forward(agent.actor, stacked, nn::Mode::Eval, eval_rng);
  PolicySample ps = run_policy(head, agent.action_dim, true, rng);

  MatrixXd critic_in = concat_obs_actions(stacked, ps.actions);
  VectorXd q1 = nn::forward(agent.target1, critic_in, nn::Mode::Eval, eval_rng).col(0);
  VectorXd q2 = nn::forward(agent.target2, critic_in, nn::Mode::Eval, eval_rng).col(0);

  const double alpha = agent.alpha();
  VectorXd y = rewards;
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int l = 0; l < L; ++l) {
      const long k = l * n + i;
      acc += std::min(q1(k), q2(k)) - alpha * ps.log_prob(k);
    }
    y(i) += agent.cfg.gamma * acc / static_cast<double>(L);
  }
  if (!y.allFinite()) throw NumericError("compute_target: non-finite targets");
  return y;
}

namespace {

double one_critic_update(nn::MlpParams& critic, nn::OptimState& opt, const Batch& batch,
                         const VectorXd& targets, int M, double sigma, Rng& rng) {
  const long n = batch.size();
  MatrixXd stacked_obs(M * n, batch.obs.cols());
  for (int m = 0; m < M; ++m)
    stacked_obs.middleRows(m * n, n) = augment_rows(batch.obs, sigma, rng);
  MatrixXd actions_tiled(M * n, batch.actions.cols());
  for (int m = 0; m < M; ++m) actions_tiled.middleRows(m * n, n) = batch.actions;

  nn::ForwardTrace trace;
  MatrixXd q =
      nn::forward(critic, concat_obs_actions(stacked_obs, actions_tiled), nn::Mode::Train, rng,
                  &trace);

  VectorXd pred = VectorXd::Zero(n);
  for (int m = 0; m < M; ++m) pred += q.col(0).segment(m * n, n);
  pred /= static_cast<double>(M);

  VectorXd resid = pred - targets;
  const double loss = resid.squaredNorm() / static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("critic_update: non-finite loss");

  MatrixXd dq(M * n, 1);
  for (int m = 0; m < M; ++m)
    dq.col(0).segment(m * n, n) = 2.0 * resid / static_cast<double>(n * M);

  nn::Gradients grads = nn::backward(critic, trace, dq);
  nn::adam_step(opt, critic, grads);
  return loss;
}

}  // namespace

double critic_update(SacAgent& agent, const Batch& batch, const VectorXd& targets,
                     const env::EnvConfig& env_cfg, Rng& rng) {
  (void)env_cfg;
  if (batch.size() != targets.size())
    throw ShapeError("critic_update: batch/target size mismatch");
  const int M = agent.cfg.m_augmentations;
  const double sigma = agent.cfg.aug_sigma;
  const double l1 = one_critic_update(agent.critic1, agent.critic1_opt, batch, targets, M, sigma, rng);
  const double l2 = one_critic_update(agent.critic2, agent.critic2_opt, batch, targets, M, sigma, rng);
  agent.update_count += 1;
  return 0.5 * (l1 + l2);
}

std::pair<double, double> actor_and_alpha_update(SacAgent& agent, const Batch& batch, Rng& rng) {
  if (batch.size() == 0) throw ValidationError("actor_and_alpha_update: empty batch");
  const long n = batch.size();
  const int A = agent.action_dim;
  const double alpha = agent.alpha();

  nn::ForwardTrace actor_trace;
  MatrixXd head = nn::forward(agent.actor, batch.obs, nn::Mode::Train, rng, &actor_trace);
  PolicySample ps = run_policy(head, A, true, rng);

  MatrixXd critic_in = concat_obs_actions(batch.obs, ps.actions);
  Rng eval_rng(0);
  nn::ForwardTrace tr1, tr2;
  VectorXd q1 = nn::forward(agent.critic1, critic_in, nn::Mode::Eval, eval_rng, &tr1).col(0);
  VectorXd q2 = nn::forward(agent.critic2, critic_in, nn::Mode::Eval, eval_rng, &tr2).col(0);

  double actor_loss = 0.0;
  MatrixXd g1 = MatrixXd::Zero(n, 1), g2 = MatrixXd::Zero(n, 1);
  for (long i = 0; i < n; ++i) {
    actor_loss += alpha * ps.log_prob(i) - std::min(q1(i), q2(i));
    // d(-q_min)/dq routes through the argmin critic
    if (q1(i) <= q2(i))
      g1(i, 0) = -1.0 / static_cast<double>(n);
    else
      g2(i, 0) = -1.0 / static_cast<double>(n);
  }
  actor_loss /= static_cast<double>(n);
  if (!std::isfinite(actor_loss)) throw NumericError("actor update: non-finite loss");

  MatrixXd dq_din1 = nn::backward_input_only(agent.critic1, tr1, g1);
  MatrixXd dq_din2 = nn::backward_input_only(agent.critic2, tr2, g2);
  MatrixXd dL_da = dq_din1.rightCols(A) + dq_din2.rightCols(A);

  // entropy term: d(alpha * logpi)/da, plus the direct -log_std path
  MatrixXd dhead(n, 2 * A);
  const double w = alpha / static_cast<double>(n);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < A; ++j) {
      const double a = ps.actions(i, j);
      const double one_minus_a2 = 1.0 - a * a;
      const double dlogpi_da = 2.0 * a / (one_minus_a2 + kTanhEps);
      const double da = dL_da(i, j) + w * dlogpi_da;
      const double dpre = da * one_minus_a2;  // tanh'
      dhead(i, j) = dpre;
      dhead(i, A + j) =
          (dpre * ps.std_dev(i, j) * ps.eps(i, j) - w) * ps.clamp_active(i, j);
    }

  nn::Gradients agrads = nn::backward(agent.actor, actor_trace, dhead);
  nn::adam_step(agent.actor_opt, agent.actor, agrads);

  // temperature: J(alpha) = -alpha * mean(logpi + H_target), logpi detached
  double alpha_loss = 0.0;
  if (agent.cfg.entropy_tuning) {
    const double drift = ps.log_prob.mean() + agent.entropy_target();
    alpha_loss = -alpha * drift;
    const double dlog_alpha = -alpha * drift;
    agent.alpha_opt.step(agent.log_alpha, dlog_alpha);
  }
  return {actor_loss, alpha_loss};
}

void polyak_update(SacAgent& agent) {
  const double tau = agent.cfg.tau;
  auto blend = [tau](nn::MlpParams& target, const nn::MlpParams& online) {
    for (size_t i = 0; i < target.layers.size(); ++i) {
      target.layers[i].weights =
          (1.0 - tau) * target.layers[i].weights + tau * online.layers[i].weights;
      target.layers[i].bias = (1.0 - tau) * target.layers[i].bias + tau * online.layers[i].bias;
      if (target.layers[i].layer_norm) {
        target.layers[i].ln_gain =
            (1.0 - tau) * target.layers[i].ln_gain + tau * online.layers[i].ln_gain;
        target.layers[i].ln_shift =
            (1.0 - tau) * target.layers[i].ln_shift + tau * online.layers[i].ln_shift;
      }
    }
  };
  blend(agent.target1, agent.critic1);
  blend(agent.target2, agent.critic2);
}

UpdateStats sac_update(SacAgent& agent, const ReplayBuffer& buffer, const RewardFn& reward_fn,
                       const env::EnvConfig& env_cfg, Rng& rng) {
  Batch batch = gather(buffer, buffer.sample_indices(agent.cfg.batch_size, rng));
  VectorXd targets = compute_target(agent, batch, reward_fn, env_cfg, rng);
  UpdateStats stats;
  stats.mean_reward = reward_fn(batch.next_obs).mean();
  stats.critic_loss = critic_update(agent, batch, targets, env_cfg, rng);
  std::tie(stats.actor_loss, stats.alpha_loss) = actor_and_alpha_update(agent, batch, rng);
  polyak_update(agent);
  return stats;
}

// ---------------------------------------------------------------------------
// Checkpointing

void save_agent(const SacAgent& agent, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nn::save_params(agent.actor, dir + "/actor.net");
  nn::save_params(agent.critic1, dir + "/critic1.net");
  nn::save_params(agent.critic2, dir + "/critic2.net");
  nn::save_params(agent.target1, dir + "/target1.net");
  nn::save_params(agent.target2, dir + "/target2.net");
  nn::save_optim(agent.actor_opt, dir + "/actor.opt");
  nn::save_optim(agent.critic1_opt, dir + "/critic1.opt");
  nn::save_optim(agent.critic2_opt, dir + "/critic2.opt");
  std::ofstream meta(dir + "/agent.meta", std::ios::binary | std::ios::trunc);
  if (!meta) throw IoError("save_agent: cannot open meta");
  auto wf = [&meta](double v) { meta.write(reinterpret_cast<const char*>(&v), 8); };
  auto wl = [&meta](long v) {
    const std::int64_t x = v;
    meta.write(reinterpret_cast<const char*>(&x), 8);
  };
  wf(agent.log_alpha);
  wf(agent.alpha_opt.m);
  wf(agent.alpha_opt.v);
  wl(agent.alpha_opt.step_count);
  wf(agent.alpha_opt.cfg.lr);
  wl(agent.update_count);
  wl(agent.obs_dim);
  wl(agent.action_dim);
  wf(agent.cfg.lr);
  wf(agent.cfg.gamma);
  wf(agent.cfg.tau);
  wl(agent.cfg.batch_size);
  wl(agent.cfg.hidden_dim);
  wl(agent.cfg.m_augmentations);
  wl(agent.cfg.l_augmentations);
  wf(agent.cfg.critic_dropout);
  wf(agent.cfg.aug_sigma);
  wf(agent.cfg.init_log_alpha);
  wl(agent.cfg.buffer_capacity);
  wl(agent.cfg.entropy_tuning ? 1 : 0);
  if (!meta) throw IoError("save_agent: meta write failed");
}

SacAgent load_agent(const std::string& dir) {
  SacAgent a;
  a.actor = nn::load_params(dir + "/actor.net");
  a.critic1 = nn::load_params(dir + "/critic1.net");
  a.critic2 = nn::load_params(dir + "/critic2.net");
  a.target1 = nn::load_params(dir + "/target1.net");
  a.target2 = nn::load_params(dir + "/target2.net");
  a.actor_opt = nn::load_optim(dir + "/actor.opt");
  a.critic1_opt = nn::load_optim(dir + "/critic1.opt");
  a.critic2_opt = nn::load_optim(dir + "/critic2.opt");
  std::ifstream meta(dir + "/agent.meta", std::ios::binary);
  if (!meta) throw IoError("load_agent: cannot open meta");
  auto rf = [&meta]() {
    double v;
    meta.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto rl_ = [&meta]() {
    std::int64_t v;
    meta.read(reinterpret_cast<char*>(&v), 8);
    return static_cast<long>(v);
  };
  a.log_alpha = rf();
  a.alpha_opt.m = rf();
  a.alpha_opt.v = rf();
  a.alpha_opt.step_count = rl_();
  a.alpha_opt.cfg.lr = rf();
  a.update_count = rl_();
  a.obs_dim = static_cast<int>(rl_());
  a.action_dim = static_cast<int>(rl_());
  a.cfg.lr = rf();
  a.cfg.gamma = rf();
  a.cfg.tau = rf();
  a.cfg.batch_size = static_cast<int>(rl_());
  a.cfg.hidden_dim = static_cast<int>(rl_());
  a.cfg.m_augmentations = static_cast<int>(rl_());
  a.cfg.l_augmentations = static_cast<int>(rl_());
  a.cfg.critic_dropout = rf();
  a.cfg.aug_sigma = rf();
  a.cfg.init_log_alpha = rf();
  a.cfg.buffer_capacity = rl_();
  a.cfg.entropy_tuning = rl_() != 0;
  if (!meta) throw IoError("load_agent: meta truncated");
  return a;
}

}  // namespace avail::rl
