#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "avail/common.hpp"

namespace avail::nn {

enum class Activation { None = 0, Relu = 1, Tanh = 2 };
enum class Mode { Train, Eval };

constexpr double kLayerNormEps = 1e-5;

struct LayerConfig {
  int out_dim = 0;
  Activation act = Activation::None;
  bool layer_norm = false;
  double dropout_rate = 0.0;
  double init_scale = 1.0;  // extra multiplier on the fan-in init
};

struct Layer {
  Eigen::MatrixXd weights;  // out_dim x in_dim
  Eigen::VectorXd bias;     // out_dim
  Activation act = Activation::None;
  bool layer_norm = false;
  double dropout_rate = 0.0;
  Eigen::VectorXd ln_gain, ln_shift;  // out_dim when layer_norm, else empty

  int in_dim() const { return static_cast<int>(weights.cols()); }
  int out_dim() const { return static_cast<int>(weights.rows()); }
};

/// Dense network parameters. Per layer the transform is
///   linear -> dropout (train only) -> layer norm -> activation
struct MlpParams {
  std::vector<Layer> layers;

  int input_dim() const;
  int output_dim() const;
  long parameter_count() const;
  void validate() const;  // dimension chaining, dropout < 1, finite entries
};

/// Uniform fan-in init: W, b ~ U(-s/sqrt(fan_in), s/sqrt(fan_in)) with
/// s = init_scale. Layer-norm gain starts at 1, shift at 0.
MlpParams make_mlp(int input_dim, const std::vector<LayerConfig>& layers, Rng& rng);

struct LayerTrace {
  Eigen::MatrixXd dropout_mask;  // N x out, scaled by 1/keep; empty means all-ones (eval mode)
  Eigen::MatrixXd normalized;    // N x out, the x-hat of layer norm; empty otherwise
  Eigen::VectorXd ln_inv_std;    // N; empty when no layer norm
  Eigen::MatrixXd output;        // N x out; pre-activations are recovered from this
};

struct ForwardTrace {
  Mode mode = Mode::Eval;
  Eigen::MatrixXd input;  // N x input_dim
  std::vector<LayerTrace> layers;
  const Eigen::MatrixXd& output() const { return layers.back().output; }
};

/// Batched forward pass; rows are samples. Eval mode draws nothing from rng.
Eigen::MatrixXd forward(const MlpParams& params, const Eigen::MatrixXd& input,
                        Mode mode, Rng& rng, ForwardTrace* trace = nullptr);

Eigen::VectorXd forward_vec(const MlpParams& params, const Eigen::VectorXd& input,
                            Mode mode, Rng& rng);

struct LayerGrads {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
  Eigen::VectorXd ln_gain, ln_shift;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  bool all_finite() const;
};

/// Exact reverse-mode gradients of the traced computation (dropout masks
/// frozen, layer-norm statistics differentiated through). grad_output is
/// N x output_dim. Pass grad_input to also get d(loss)/d(input).
Gradients backward(const MlpParams& params, const ForwardTrace& trace,
                   const Eigen::MatrixXd& grad_output,
                   Eigen::MatrixXd* grad_input = nullptr);

/// Cheaper path when only d(loss)/d(input) is needed (no parameter grads).
Eigen::MatrixXd backward_input_only(const MlpParams& params, const ForwardTrace& trace,
                                    const Eigen::MatrixXd& grad_output);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  std::vector<LayerGrads> m, v;  // first/second moments, shaped like the params
  long step_count = 0;
  AdamConfig cfg;
};

OptimState make_optim(const MlpParams& params, AdamConfig cfg = {});

/// Bias-corrected Adam. Throws NumericError (without touching params or
/// moments) when any gradient entry is non-finite.
void adam_step(OptimState& opt, MlpParams& params, const Gradients& grads);

/// Adam for a single scalar parameter (e.g. the SAC log-temperature).
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long step_count = 0;
  AdamConfig cfg;
  void step(double& param, double grad);
};

/// A scalar-valued head over the network output, with its gradient.
struct LossSpec {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
};

/// Central finite differences (h = 1e-5) against backward(); dropout masks are
/// frozen by reseeding every forward identically. Returns
/// max over parameters of |analytic - numeric| / max(1e-8, |numeric|).
double grad_check(const MlpParams& params, const Eigen::VectorXd& input,
                  const LossSpec& loss);

/// Versioned flat binary record: magic, version, layer count, per-layer
/// dims/flags, row-major little-endian 64-bit weight data.
void save_params(const MlpParams& params, const std::string& path);
MlpParams load_params(const std::string& path);
void save_optim(const OptimState& opt, const std::string& path);
OptimState load_optim(const std::string& path);

}  // namespace avail::nn
