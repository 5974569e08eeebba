#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "avail/common.hpp"
#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"

namespace avail::rl {

struct Transition {
  env::Observation obs;
  Eigen::Vector4d action;
  env::Observation next_obs;
  bool done = false;  // always false during reset-free training
  int task = 0;
};

/// FIFO ring buffer with uniform with-replacement sampling. Rewards are not
/// stored; they are recomputed from the live classifier at sample time.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity);

  void push(const Transition& t);
  long size() const { return static_cast<long>(data_.size()); }
  long capacity() const { return capacity_; }
  const Transition& at(long i) const { return data_[static_cast<size_t>(i)]; }

  /// Throws ValidationError when size < n.
  std::vector<long> sample_indices(long n, Rng& rng) const;

  /// Uniform over the `window` most recently pushed transitions.
  std::vector<long> sample_recent_indices(long n, long window, Rng& rng) const;

  void save(const std::string& path) const;
  static ReplayBuffer load(const std::string& path);

 private:
  long capacity_;
  long cursor_ = 0;
  std::vector<Transition> data_;
};

struct Batch {
  Eigen::MatrixXd obs;       // N x obs_dim
  Eigen::MatrixXd actions;   // N x action_dim
  Eigen::MatrixXd next_obs;  // N x obs_dim
  long size() const { return obs.rows(); }
};

Batch gather(const ReplayBuffer& buf, const std::vector<long>& indices);

struct SacConfig {
  double lr = 3e-4;
  double gamma = 0.99;
  double tau = 0.005;
  int batch_size = 256;
  int hidden_dim = 256;
  int m_augmentations = 2;  // Q-estimate average in the critic loss
  int l_augmentations = 2;  // next-state average in the target
  double critic_dropout = 0.01;
  double aug_sigma = 0.02;
  double init_log_alpha = 0.0;
  long buffer_capacity = 200000;
  bool entropy_tuning = true;
};

/// Soft actor-critic learner for one task: tanh-squashed Gaussian actor, twin
/// dropout+layer-norm critics, Polyak-averaged targets, learned temperature.
struct SacAgent {
  nn::MlpParams actor;  // outputs [mean, log_std]
  nn::MlpParams critic1, critic2;
  nn::MlpParams target1, target2;
  nn::OptimState actor_opt, critic1_opt, critic2_opt;
  double log_alpha = 0.0;
  nn::ScalarAdam alpha_opt;
  SacConfig cfg;
  int obs_dim = 0;
  int action_dim = 0;
  long update_count = 0;

  double alpha() const;
  double entropy_target() const;  // -action_dim

  static SacAgent make(int obs_dim, int action_dim, const SacConfig& cfg, Rng& rng);
};

/// Reward assignment for a batch of resulting states.
using RewardFn = std::function<Eigen::VectorXd(const Eigen::MatrixXd& next_obs_rows)>;

/// Squashed-Gaussian sample (stochastic) or tanh(mean) (deterministic).
Eigen::Vector4d act(const SacAgent& agent, const env::Observation& obs, bool stochastic,
                    Rng& rng);

/// y_i = r_i + gamma * (1/L) sum_l [min(Q1bar, Q2bar)(aug_l(s'), a'_l) - alpha log pi(a'_l)]
Eigen::VectorXd compute_target(const SacAgent& agent, const Batch& batch,
                               const RewardFn& reward_fn, const env::EnvConfig& env_cfg,
                               Rng& rng);

/// One Adam step per critic on the mean squared Bellman residual, the
/// prediction averaged over M augmentations with fresh dropout masks.
/// Returns the mean loss across the two critics.
double critic_update(SacAgent& agent, const Batch& batch, const Eigen::VectorXd& targets,
                     const env::EnvConfig& env_cfg, Rng& rng);

/// Reparameterized actor step against the min critic, plus the temperature
/// step toward the fixed entropy target. Returns (actor_loss, alpha_loss).
std::pair<double, double> actor_and_alpha_update(SacAgent& agent, const Batch& batch, Rng& rng);

/// target <- (1 - tau) * target + tau * online
void polyak_update(SacAgent& agent);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double mean_reward = 0.0;
};

/// Full SAC update from a buffer sample: targets, both critics, actor,
/// temperature, Polyak.
UpdateStats sac_update(SacAgent& agent, const ReplayBuffer& buffer, const RewardFn& reward_fn,
                       const env::EnvConfig& env_cfg, Rng& rng);

void save_agent(const SacAgent& agent, const std::string& dir);
SacAgent load_agent(const std::string& dir);

}  // namespace avail::rl
