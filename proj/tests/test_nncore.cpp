#include <cmath>

#include "avail/nn.hpp"
#include "doctest.h"

using namespace avail;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

nn::LossSpec least_squares(const VectorXd& target) {
  return {[target](const VectorXd& y) { return 0.5 * (y - target).squaredNorm(); },
          [target](const VectorXd& y) { return (y - target).eval(); }};
}

nn::MlpParams identity_linear(int dim) {
  nn::MlpParams p;
  nn::Layer l;
  l.weights = MatrixXd::Identity(dim, dim);
  l.bias = VectorXd::Zero(dim);
  l.act = nn::Activation::None;
  p.layers.push_back(std::move(l));
  return p;
}

}  // namespace

TEST_CASE("forward: identity-initialized linear net returns its input") {
  Rng rng(0);
  auto net = identity_linear(3);
  VectorXd x(3);
  x << 0.5, -1.25, 2.0;
  VectorXd y = nn::forward_vec(net, x, nn::Mode::Eval, rng);
  CHECK(y.isApprox(x));
}

TEST_CASE("forward: zero weights propagate activation(bias)") {
  Rng rng(1);
  nn::MlpParams net;
  nn::Layer l;
  l.weights = MatrixXd::Zero(2, 4);
  l.bias = VectorXd(2);
  l.bias << 1.5, -0.75;
  l.act = nn::Activation::Tanh;
  net.layers.push_back(l);
  VectorXd x = VectorXd::Random(4);
  VectorXd y = nn::forward_vec(net, x, nn::Mode::Eval, rng);
  CHECK(y(0) == doctest::Approx(std::tanh(1.5)));
  CHECK(y(1) == doctest::Approx(std::tanh(-0.75)));
}

TEST_CASE("forward: dropout in train mode replays identically under the same seed") {
  Rng make_rng(7);
  auto net = nn::make_mlp(
      5, {{16, nn::Activation::Relu, false, 0.5}, {3, nn::Activation::None}}, make_rng);
  VectorXd x = VectorXd::Random(5);
  Rng a(42), b(42);
  VectorXd ya = nn::forward_vec(net, x, nn::Mode::Train, a);
  VectorXd yb = nn::forward_vec(net, x, nn::Mode::Train, b);
  CHECK(ya == yb);
}

TEST_CASE("forward: eval mode is independent of the rng") {
  Rng make_rng(8);
  auto net = nn::make_mlp(
      4, {{8, nn::Activation::Tanh, true, 0.3}, {2, nn::Activation::None}}, make_rng);
  VectorXd x = VectorXd::Random(4);
  Rng a(1), b(999);
  CHECK(nn::forward_vec(net, x, nn::Mode::Eval, a) == nn::forward_vec(net, x, nn::Mode::Eval, b));
}

TEST_CASE("forward: eval-mode traces carry no dropout masks") {
  Rng make_rng(9);
  auto net = nn::make_mlp(4, {{8, nn::Activation::Relu, false, 0.5}}, make_rng);
  MatrixXd x = MatrixXd::Random(3, 4);
  Rng rng(2);
  nn::ForwardTrace trace;
  nn::forward(net, x, nn::Mode::Eval, rng, &trace);
  CHECK(trace.layers[0].dropout_mask.size() == 0);  // empty mask means all-ones
}

TEST_CASE("forward: shape and numeric errors") {
  Rng make_rng(10);
  auto net = nn::make_mlp(4, {{2, nn::Activation::None}}, make_rng);
  Rng rng(0);
  CHECK_THROWS_AS(nn::forward(net, MatrixXd::Random(1, 5), nn::Mode::Eval, rng), ShapeError);
  MatrixXd bad = MatrixXd::Random(1, 4);
  bad(0, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nn::forward(net, bad, nn::Mode::Eval, rng), NumericError);
}

TEST_CASE("backward: closed form for a pure linear layer") {
  // y = Wx, so dL/dW = g x^T and dL/dx = W^T g
  Rng make_rng(11);
  auto net = nn::make_mlp(3, {{2, nn::Activation::None}}, make_rng);
  net.layers[0].bias.setZero();
  VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  Rng rng(0);
  nn::ForwardTrace trace;
  nn::forward(net, x.transpose(), nn::Mode::Eval, rng, &trace);
  MatrixXd g(1, 2);
  g << 0.7, -0.3;
  MatrixXd grad_input;
  nn::Gradients grads = nn::backward(net, trace, g, &grad_input);
  CHECK(grads.layers[0].weights.isApprox(g.transpose() * x.transpose()));
  CHECK(grad_input.transpose().isApprox(net.layers[0].weights.transpose() * g.transpose()));
}

TEST_CASE("backward: zero upstream gradient gives exactly zero gradients") {
  Rng make_rng(12);
  auto net = nn::make_mlp(
      4, {{8, nn::Activation::Relu, true, 0.2}, {3, nn::Activation::Tanh}}, make_rng);
  Rng rng(5);
  nn::ForwardTrace trace;
  nn::forward(net, MatrixXd::Random(6, 4), nn::Mode::Train, rng, &trace);
  nn::Gradients grads = nn::backward(net, trace, MatrixXd::Zero(6, 3));
  for (const auto& l : grads.layers) {
    CHECK(l.weights.isZero(0.0));
    CHECK(l.bias.isZero(0.0));
  }
}

TEST_CASE("backward: finite differences on a random 3-layer net") {
  Rng make_rng(13);
  auto net = nn::make_mlp(5,
                          {{8, nn::Activation::Tanh, false, 0.0},
                           {8, nn::Activation::Relu, true, 0.0},
                           {2, nn::Activation::None}},
                          make_rng);
  VectorXd x = VectorXd::Random(5);
  VectorXd target = VectorXd::Random(2);
  CHECK(nn::grad_check(net, x, least_squares(target)) < 1e-4);
}

TEST_CASE("grad_check: linear least-squares head is exact to 1e-6") {
  Rng make_rng(14);
  auto net = nn::make_mlp(4, {{3, nn::Activation::None}}, make_rng);
  VectorXd x = VectorXd::Random(4);
  VectorXd target = VectorXd::Random(3);
  CHECK(nn::grad_check(net, x, least_squares(target)) < 1e-6);
}

TEST_CASE("grad_check: layer norm and frozen dropout stay under 1e-4") {
  Rng make_rng(15);
  SUBCASE("layer norm") {
    auto net = nn::make_mlp(
        6, {{10, nn::Activation::Relu, true, 0.0}, {1, nn::Activation::None}}, make_rng);
    CHECK(nn::grad_check(net, VectorXd::Random(6), least_squares(VectorXd::Random(1))) < 1e-4);
  }
  SUBCASE("frozen dropout mask") {
    auto net = nn::make_mlp(
        6, {{12, nn::Activation::Tanh, false, 0.5}, {1, nn::Activation::None}}, make_rng);
    CHECK(nn::grad_check(net, VectorXd::Random(6), least_squares(VectorXd::Random(1))) < 1e-4);
  }
}

TEST_CASE("gradient correctness property: 20 random architectures") {
  Rng arch_rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const int input_dim = 2 + static_cast<int>(uniform_index(arch_rng, 5));
    const int depth = 1 + static_cast<int>(uniform_index(arch_rng, 3));
    std::vector<nn::LayerConfig> layers;
    for (int d = 0; d < depth; ++d) {
      nn::LayerConfig cfg;
      cfg.out_dim = 3 + static_cast<int>(uniform_index(arch_rng, 6));
      cfg.act = std::array{nn::Activation::Relu, nn::Activation::Tanh,
                           nn::Activation::None}[uniform_index(arch_rng, 3)];
      cfg.layer_norm = uniform_double(arch_rng) < 0.5;
      cfg.dropout_rate = uniform_double(arch_rng) < 0.5 ? 0.3 : 0.0;
      layers.push_back(cfg);
    }
    layers.push_back({1, nn::Activation::None});
    auto net = nn::make_mlp(input_dim, layers, arch_rng);
    VectorXd x(input_dim);
    for (int i = 0; i < input_dim; ++i) x(i) = uniform_range(arch_rng, -1.0, 1.0);
    VectorXd target(1);
    target << uniform_range(arch_rng, -1.0, 1.0);
    const double err = nn::grad_check(net, x, least_squares(target));
    INFO("trial ", trial, " err ", err);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged but advance the step") {
  Rng make_rng(16);
  auto net = nn::make_mlp(3, {{4, nn::Activation::Relu}, {1, nn::Activation::None}}, make_rng);
  auto opt = nn::make_optim(net);
  auto before = net;
  nn::Gradients zeros;
  zeros.layers.resize(2);
  for (size_t i = 0; i < 2; ++i) {
    zeros.layers[i].weights = MatrixXd::Zero(net.layers[i].weights.rows(),
                                             net.layers[i].weights.cols());
    zeros.layers[i].bias = VectorXd::Zero(net.layers[i].bias.size());
  }
  nn::adam_step(opt, net, zeros);
  CHECK(opt.step_count == 1);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(net.layers[i].weights == before.layers[i].weights);
    CHECK(net.layers[i].bias == before.layers[i].bias);
  }
}

TEST_CASE("adam: hand-computed bias-corrected first step on a scalar") {
  // g = 1: m_hat = 1, v_hat = 1, delta = -lr / (1 + eps)
  nn::MlpParams net;
  nn::Layer l;
  l.weights = MatrixXd::Constant(1, 1, 0.25);
  l.bias = VectorXd::Zero(1);
  net.layers.push_back(l);
  auto opt = nn::make_optim(net);
  nn::Gradients g;
  g.layers.resize(1);
  g.layers[0].weights = MatrixXd::Constant(1, 1, 1.0);
  g.layers[0].bias = VectorXd::Zero(1);
  nn::adam_step(opt, net, g);
  const double expected_delta = -3e-4 / (1.0 + 1e-8);
  CHECK(net.layers[0].weights(0, 0) == doctest::Approx(0.25 + expected_delta).epsilon(1e-12));
}

TEST_CASE("adam: bitwise determinism of identical calls from identical states") {
  Rng make_rng(17);
  auto net_a = nn::make_mlp(4, {{6, nn::Activation::Tanh}, {2, nn::Activation::None}}, make_rng);
  auto net_b = net_a;
  auto opt_a = nn::make_optim(net_a);
  auto opt_b = nn::make_optim(net_b);
  Rng rng_a(3), rng_b(3);
  for (int i = 0; i < 5; ++i) {
    MatrixXd x = MatrixXd::Random(4, 4);
    nn::ForwardTrace ta, tb;
    MatrixXd ya = nn::forward(net_a, x, nn::Mode::Train, rng_a, &ta);
    MatrixXd yb = nn::forward(net_b, x, nn::Mode::Train, rng_b, &tb);
    nn::adam_step(opt_a, net_a, nn::backward(net_a, ta, ya));
    nn::adam_step(opt_b, net_b, nn::backward(net_b, tb, yb));
  }
  for (size_t i = 0; i < net_a.layers.size(); ++i) {
    CHECK(net_a.layers[i].weights == net_b.layers[i].weights);
    CHECK(net_a.layers[i].bias == net_b.layers[i].bias);
  }
}

TEST_CASE("adam: non-finite gradients abort the update untouched") {
  Rng make_rng(18);
  auto net = nn::make_mlp(2, {{2, nn::Activation::None}}, make_rng);
  auto opt = nn::make_optim(net);
  auto before = net;
  nn::Gradients g;
  g.layers.resize(1);
  g.layers[0].weights = MatrixXd::Constant(2, 2, std::numeric_limits<double>::infinity());
  g.layers[0].bias = VectorXd::Zero(2);
  CHECK_THROWS_AS(nn::adam_step(opt, net, g), NumericError);
  CHECK(opt.step_count == 0);
  CHECK(net.layers[0].weights == before.layers[0].weights);
}

TEST_CASE("adam: second moments stay nonnegative and the step count is monotone") {
  Rng make_rng(19);
  auto net =
      nn::make_mlp(3, {{5, nn::Activation::Relu, true, 0.1}, {1, nn::Activation::None}}, make_rng);
  auto opt = nn::make_optim(net);
  Rng rng(4);
  long last = 0;
  for (int i = 0; i < 50; ++i) {
    nn::ForwardTrace trace;
    MatrixXd y = nn::forward(net, MatrixXd::Random(8, 3), nn::Mode::Train, rng, &trace);
    nn::adam_step(opt, net, nn::backward(net, trace, y));
    CHECK(opt.step_count == last + 1);
    last = opt.step_count;
    for (const auto& v : opt.v) {
      CHECK(v.weights.minCoeff() >= 0.0);
      CHECK(v.bias.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("checkpoint: parameter and optimizer round trips are exact") {
  Rng make_rng(20);
  auto net = nn::make_mlp(
      5, {{7, nn::Activation::Relu, true, 0.25}, {2, nn::Activation::Tanh}}, make_rng);
  auto opt = nn::make_optim(net);
  Rng rng(6);
  nn::ForwardTrace trace;
  MatrixXd y = nn::forward(net, MatrixXd::Random(4, 5), nn::Mode::Train, rng, &trace);
  nn::adam_step(opt, net, nn::backward(net, trace, y));

  const std::string net_path = "/tmp/avail_test_net.bin";
  const std::string opt_path = "/tmp/avail_test_opt.bin";
  nn::save_params(net, net_path);
  nn::save_optim(opt, opt_path);
  auto net2 = nn::load_params(net_path);
  auto opt2 = nn::load_optim(opt_path);

  REQUIRE(net2.layers.size() == net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(net2.layers[i].weights == net.layers[i].weights);
    CHECK(net2.layers[i].bias == net.layers[i].bias);
    CHECK(net2.layers[i].act == net.layers[i].act);
    CHECK(net2.layers[i].dropout_rate == net.layers[i].dropout_rate);
    if (net.layers[i].layer_norm) {
      CHECK(net2.layers[i].ln_gain == net.layers[i].ln_gain);
      CHECK(net2.layers[i].ln_shift == net.layers[i].ln_shift);
    }
  }
  CHECK(opt2.step_count == opt.step_count);
  for (size_t i = 0; i < opt.m.size(); ++i) {
    CHECK(opt2.m[i].weights == opt.m[i].weights);
    CHECK(opt2.v[i].weights == opt.v[i].weights);
  }
}

TEST_CASE("scalar adam matches the tensor update") {
  double param = 1.0;
  nn::ScalarAdam sopt;
  sopt.step(param, 1.0);
  CHECK(param == doctest::Approx(1.0 - 3e-4 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK_THROWS_AS(sopt.step(param, std::numeric_limits<double>::quiet_NaN()), NumericError);
}
