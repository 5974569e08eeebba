#include "avail/rewards.hpp"

#include <cmath>

namespace avail::rewards {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

SuccessClassifier SuccessClassifier::make(int obs_dim, const ClassifierConfig& cfg,
                                          int task_index, Rng& rng) {
  std::vector<nn::LayerConfig> layers;
  for (int i = 0; i < cfg.hidden_layers; ++i)
    layers.push_back({cfg.hidden_dim, nn::Activation::Relu, false, cfg.dropout, 1.0});
  layers.push_back({1, nn::Activation::None, false, 0.0, 1.0});
  SuccessClassifier clf;
  clf.params = nn::make_mlp(obs_dim, layers, rng);
  clf.opt = nn::make_optim(clf.params, {.lr = cfg.lr});
  clf.task_index = task_index;
  return clf;
}

double smooth_label(double y, double alpha) { return y * (1.0 - alpha) + alpha / 2.0; }

void mix_pair(const RowVectorXd& obs_i, double label_i, const RowVectorXd& obs_j, double label_j,
              double lambda, RowVectorXd& obs_out, double& label_out) {
  obs_out = lambda * obs_i + (1.0 - lambda) * obs_j;
  label_out = lambda * label_i + (1.0 - lambda) * label_j;
}

std::pair<MatrixXd, VectorXd> mixup(const MatrixXd& obs, const VectorXd& labels, double alpha,
                                    Rng& rng) {
  if (obs.rows() == 0) throw ValidationError("mixup: empty batch");
  if (obs.rows() != labels.size()) throw ShapeError("mixup: obs/label count mismatch");
  if (!(alpha > 0.0)) throw ValidationError("mixup: alpha must be positive");
  MatrixXd mixed_obs(obs.rows(), obs.cols());
  VectorXd mixed_labels(labels.size());
  for (long i = 0; i < obs.rows(); ++i) {
    const long j = static_cast<long>(uniform_index(rng, static_cast<std::uint64_t>(obs.rows())));
    const double lambda = beta_sample(rng, alpha, alpha);
    RowVectorXd row(obs.cols());
    double label;
    mix_pair(obs.row(i), labels(i), obs.row(j), labels(j), lambda, row, label);
    mixed_obs.row(i) = row;
    mixed_labels(i) = label;
  }
  return {std::move(mixed_obs), std::move(mixed_labels)};
}

namespace {

MatrixXd sample_rows(const MatrixXd& pool, long n, Rng& rng) {
  MatrixXd out(n, pool.cols());
  for (long i = 0; i < n; ++i)
    out.row(i) = pool.row(static_cast<long>(uniform_index(rng, pool.rows())));
  return out;
}

}  // namespace

double classifier_update(SuccessClassifier& clf, const MatrixXd& positives,
                         const MatrixXd& negatives, const ClassifierConfig& cfg,
                         const env::EnvConfig& env_cfg, Rng& rng) {
  if (positives.rows() == 0 || negatives.rows() == 0)
    throw ValidationError("classifier_update: positives and negatives must be non-empty");

  const long n_pos = std::max<long>(1, static_cast<long>(cfg.batch_size * cfg.positive_fraction));
  const long n_neg = std::max<long>(1, cfg.batch_size - n_pos);

  MatrixXd pos = sample_rows(positives, n_pos, rng);
  pos = milestones::augment_batch(pos, cfg.augment, env_cfg, rng);
  MatrixXd neg = negatives.rows() == n_neg ? negatives : sample_rows(negatives, n_neg, rng);

  MatrixXd batch(n_pos + n_neg, pos.cols());
  batch.topRows(n_pos) = pos;
  batch.bottomRows(n_neg) = neg;
  VectorXd labels(n_pos + n_neg);
  labels.head(n_pos).setConstant(smooth_label(1.0, cfg.label_smoothing));
  labels.tail(n_neg).setConstant(smooth_label(0.0, cfg.label_smoothing));

  auto [mixed, targets] = mixup(batch, labels, cfg.mixup_alpha, rng);

  nn::ForwardTrace trace;
  MatrixXd logits = nn::forward(clf.params, mixed, nn::Mode::Train, rng, &trace);

  // binary cross-entropy with logits:
  //   loss = softplus(l) - y*l, dloss/dl = sigmoid(l) - y
  const long n = logits.rows();
  double loss = 0.0;
  MatrixXd dlogits(n, 1);
  for (long i = 0; i < n; ++i) {
    const double l = logits(i, 0);
    const double sp = l > 0.0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
    loss += sp - targets(i) * l;
    const double sig = 1.0 / (1.0 + std::exp(-l));
    dlogits(i, 0) = (sig - targets(i)) / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericError("classifier_update: non-finite loss");

  nn::Gradients grads = nn::backward(clf.params, trace, dlogits);
  nn::adam_step(clf.opt, clf.params, grads);
  return loss;
}

double logit(const SuccessClassifier& clf, const env::Observation& obs) {
  Rng rng(0);  // eval mode draws nothing
  return nn::forward_vec(clf.params, obs, nn::Mode::Eval, rng)(0);
}

namespace {

double log_sigmoid(double l) {
  // log p = -softplus(-l), numerically stable on both tails
  return l > 0.0 ? -std::log1p(std::exp(-l)) : l - std::log1p(std::exp(l));
}

}  // namespace

double reward(const SuccessClassifier& clf, const env::Observation& obs) {
  return std::max(kRewardFloor, log_sigmoid(logit(clf, obs)));
}

VectorXd reward_batch(const SuccessClassifier& clf, const MatrixXd& obs_rows) {
  Rng rng(0);
  MatrixXd logits = nn::forward(clf.params, obs_rows, nn::Mode::Eval, rng);
  VectorXd out(logits.rows());
  for (long i = 0; i < logits.rows(); ++i)
    out(i) = std::max(kRewardFloor, log_sigmoid(logits(i, 0)));
  return out;
}

}  // namespace avail::rewards
