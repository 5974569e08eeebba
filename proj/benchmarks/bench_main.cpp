// Microbenchmarks for the inner-loop costs: dense forward/backward, Adam,
// environment stepping and the full SAC + classifier update pipeline.

#include <benchmark/benchmark.h>

#include "avail/env.hpp"
#include "avail/milestones.hpp"
#include "avail/nn.hpp"
#include "avail/rewards.hpp"
#include "avail/rl.hpp"

namespace {

using namespace avail;

nn::MlpParams make_critic_net(Rng& rng) {
  return nn::make_mlp(12,
                      {{256, nn::Activation::Relu, true, 0.01},
                       {256, nn::Activation::Relu, true, 0.01},
                       {1, nn::Activation::None}},
                      rng);
}

nn::MlpParams make_classifier_net(Rng& rng) {
  return nn::make_mlp(8,
                      {{512, nn::Activation::Relu, false, 0.5},
                       {512, nn::Activation::Relu, false, 0.5},
                       {512, nn::Activation::Relu, false, 0.5},
                       {1, nn::Activation::None}},
                      rng);
}

void BM_CriticForwardBackward(benchmark::State& state) {
  Rng rng(1);
  auto net = make_critic_net(rng);
  Eigen::MatrixXd input = Eigen::MatrixXd::Random(state.range(0), 12);
  for (auto _ : state) {
    nn::ForwardTrace trace;
    Eigen::MatrixXd out = nn::forward(net, input, nn::Mode::Train, rng, &trace);
    nn::Gradients grads = nn::backward(net, trace, out);
    benchmark::DoNotOptimize(grads.layers.front().weights.sum());
  }
}
BENCHMARK(BM_CriticForwardBackward)->Arg(256)->Arg(512);

void BM_ClassifierUpdate(benchmark::State& state) {
  Rng rng(2);
  env::EnvConfig env_cfg;
  rewards::ClassifierConfig cfg;
  auto clf = rewards::SuccessClassifier::make(8, cfg, 0, rng);
  Eigen::MatrixXd pos = Eigen::MatrixXd::Random(300, 8);
  Eigen::MatrixXd neg = Eigen::MatrixXd::Random(128, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rewards::classifier_update(clf, pos, neg, cfg, env_cfg, rng));
  }
}
BENCHMARK(BM_ClassifierUpdate);

void BM_SacUpdate(benchmark::State& state) {
  Rng rng(3);
  env::EnvConfig env_cfg;
  rl::SacConfig cfg;
  auto agent = rl::SacAgent::make(env::kObservationDim, env::kActionDim, cfg, rng);
  rl::ReplayBuffer buffer(cfg.buffer_capacity);
  env::EnvState s = env::init(env_cfg, 4);
  for (int i = 0; i < 2000; ++i) {
    env::Action a;
    a.delta = {uniform_range(rng, -1, 1), uniform_range(rng, -1, 1), uniform_range(rng, -1, 1)};
    a.grip_cmd = uniform_range(rng, -1, 1);
    env::EnvState next = env::step(env_cfg, s, a);
    buffer.push({env::observe(s), a.to_vector(), env::observe(next), false, 0});
    s = next;
  }
  rl::RewardFn reward = [](const Eigen::MatrixXd& next_obs) {
    return Eigen::VectorXd::Zero(next_obs.rows()).eval();
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(rl::sac_update(agent, buffer, reward, env_cfg, rng));
  }
}
BENCHMARK(BM_SacUpdate);

void BM_EnvStep(benchmark::State& state) {
  Rng rng(5);
  env::EnvConfig cfg;
  env::EnvState s = env::init(cfg, 6);
  env::Action a;
  a.delta = {0.3, -0.2, 0.1};
  a.grip_cmd = 0.5;
  for (auto _ : state) {
    s = env::step(cfg, s, a);
    benchmark::DoNotOptimize(s.hand_pos.x());
  }
}
BENCHMARK(BM_EnvStep);

void BM_AdamStep(benchmark::State& state) {
  Rng rng(7);
  auto net = make_classifier_net(rng);
  auto opt = nn::make_optim(net);
  Eigen::MatrixXd input = Eigen::MatrixXd::Random(1, 8);
  nn::ForwardTrace trace;
  nn::forward(net, input, nn::Mode::Train, rng, &trace);
  nn::Gradients grads = nn::backward(net, trace, Eigen::MatrixXd::Ones(1, 1));
  for (auto _ : state) {
    nn::adam_step(opt, net, grads);
    benchmark::DoNotOptimize(net.layers.back().bias(0));
  }
}
BENCHMARK(BM_AdamStep);

}  // namespace

BENCHMARK_MAIN();
