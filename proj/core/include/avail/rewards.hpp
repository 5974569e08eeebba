#pragma once

#include <Eigen/Dense>

#include "avail/common.hpp"
#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"

namespace avail::rewards {

constexpr double kRewardFloor = -10.0;

struct ClassifierConfig {
  double lr = 3e-4;
  int batch_size = 256;        // half positives, half negatives
  int hidden_dim = 512;
  int hidden_layers = 3;
  double dropout = 0.5;
  double mixup_alpha = 10.0;
  double label_smoothing = 0.1;
  int steps_per_iteration = 1;
  int negative_window = 50000;       // most recent transitions considered on-policy
  double positive_fraction = 0.5;    // share of positives in an update batch
  milestones::AugmentConfig augment{0.02, true};
};

/// Per-task success classifier: FC(hidden) x hidden_layers with relu and
/// dropout, one output logit.
struct SuccessClassifier {
  nn::MlpParams params;
  nn::OptimState opt;
  int task_index = 0;

  static SuccessClassifier make(int obs_dim, const ClassifierConfig& cfg, int task_index,
                                Rng& rng);
};

/// Symmetric two-class smoothing: y(1 - alpha) + alpha/2.
double smooth_label(double y, double alpha);

/// Convex blend of two rows and their labels with a fixed coefficient.
void mix_pair(const Eigen::RowVectorXd& obs_i, double label_i, const Eigen::RowVectorXd& obs_j,
              double label_j, double lambda, Eigen::RowVectorXd& obs_out, double& label_out);

/// Pairs every row with a random partner and blends with
/// lambda ~ Beta(alpha, alpha). Throws ValidationError on an empty batch.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> mixup(const Eigen::MatrixXd& obs,
                                                  const Eigen::VectorXd& labels, double alpha,
                                                  Rng& rng);

/// One Adam step of smoothed, mixed binary cross-entropy on an equal-count
/// batch (positives are noise-augmented; negatives come in as-is when exactly
/// batch/2 rows are supplied, otherwise they are resampled with replacement).
/// Returns the mean loss.
double classifier_update(SuccessClassifier& clf, const Eigen::MatrixXd& positives,
                         const Eigen::MatrixXd& negatives, const ClassifierConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng);

/// max(log p, -10), evaluated with dropout off.
double reward(const SuccessClassifier& clf, const env::Observation& obs);
Eigen::VectorXd reward_batch(const SuccessClassifier& clf, const Eigen::MatrixXd& obs_rows);

/// Classifier logit(s) in eval mode; the reward is a monotone map of this.
double logit(const SuccessClassifier& clf, const env::Observation& obs);

}  // namespace avail::rewards
