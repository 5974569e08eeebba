#include "avail/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace avail::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int MlpParams::input_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: empty network");
  return layers.front().in_dim();
}

int MlpParams::output_dim() const {
  if (layers.empty()) throw ShapeError("MlpParams: empty network");
  return layers.back().out_dim();
}

long MlpParams::parameter_count() const {
  long n = 0;
  for (const auto& l : layers) {
    n += l.weights.size() + l.bias.size() + l.ln_gain.size() + l.ln_shift.size();
  }
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ShapeError("MlpParams: empty network");
  for (size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.size() != l.out_dim())
      throw ShapeError("MlpParams: bias/weight mismatch in layer " + std::to_string(i));
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim())
      throw ShapeError("MlpParams: dimension chain broken at layer " + std::to_string(i));
    if (!(l.dropout_rate >= 0.0 && l.dropout_rate < 1.0))
      throw ValidationError("MlpParams: dropout_rate must be in [0,1)");
    if (l.layer_norm && (l.ln_gain.size() != l.out_dim() || l.ln_shift.size() != l.out_dim()))
      throw ShapeError("MlpParams: layer-norm vectors mis-sized in layer " + std::to_string(i));
    if (!l.weights.allFinite() || !l.bias.allFinite())
      throw NumericError("MlpParams: non-finite parameter in layer " + std::to_string(i));
  }
}

MlpParams make_mlp(int input_dim, const std::vector<LayerConfig>& cfgs, Rng& rng) {
  if (input_dim <= 0) throw ShapeError("make_mlp: input_dim must be positive");
  if (cfgs.empty()) throw ShapeError("make_mlp: need at least one layer");
  MlpParams params;
  int in = input_dim;
  for (const auto& cfg : cfgs) {
    if (cfg.out_dim <= 0) throw ShapeError("make_mlp: out_dim must be positive");
    Layer l;
    const double bound = cfg.init_scale / std::sqrt(static_cast<double>(in));
    l.weights.resize(cfg.out_dim, in);
    l.bias.resize(cfg.out_dim);
    for (int c = 0; c < in; ++c)
      for (int r = 0; r < cfg.out_dim; ++r) l.weights(r, c) = uniform_range(rng, -bound, bound);
    for (int r = 0; r < cfg.out_dim; ++r) l.bias(r) = uniform_range(rng, -bound, bound);
    l.act = cfg.act;
    l.layer_norm = cfg.layer_norm;
    l.dropout_rate = cfg.dropout_rate;
    if (cfg.layer_norm) {
      l.ln_gain = VectorXd::Ones(cfg.out_dim);
      l.ln_shift = VectorXd::Zero(cfg.out_dim);
    }
    in = cfg.out_dim;
    params.layers.push_back(std::move(l));
  }
  params.validate();
  return params;
}

namespace {

inline double activate(Activation act, double v) {
  switch (act) {
    case Activation::Relu:
      return v > 0.0 ? v : 0.0;
    case Activation::Tanh:
      return std::tanh(v);
    case Activation::None:
      break;
  }
  return v;
}

void apply_activation(Activation act, MatrixXd& x) {
  switch (act) {
    case Activation::None:
      break;
    case Activation::Relu:
      x = x.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      x = x.array().tanh().matrix();
      break;
  }
}

// One 64-bit engine draw yields two 32-bit Bernoulli trials.
class BernoulliStream {
 public:
  explicit BernoulliStream(Rng& rng, double keep)
      : rng_(rng),
        threshold_(static_cast<std::uint32_t>(
            std::min(4294967295.0, keep * 4294967296.0))) {}

  bool keep() {
    if (!have_spare_) {
      word_ = rng_();
      have_spare_ = true;
      return static_cast<std::uint32_t>(word_) < threshold_;
    }
    have_spare_ = false;
    return static_cast<std::uint32_t>(word_ >> 32) < threshold_;
  }

 private:
  Rng& rng_;
  std::uint32_t threshold_;
  std::uint64_t word_ = 0;
  bool have_spare_ = false;
};

}  // namespace

MatrixXd forward(const MlpParams& params, const MatrixXd& input, Mode mode, Rng& rng,
                 ForwardTrace* trace) {
  if (params.layers.empty()) throw ShapeError("forward: empty network");
  if (input.cols() != params.input_dim())
    throw ShapeError("forward: input has " + std::to_string(input.cols()) +
                     " columns, network expects " + std::to_string(params.input_dim()));
  if (!input.allFinite()) throw NumericError("forward: non-finite input");

  if (trace) {
    trace->mode = mode;
    trace->input = input;
    trace->layers.clear();
    trace->layers.resize(params.layers.size());
  }

  const long n = input.rows();
  MatrixXd x;  // holds the running activation when no trace is kept
  const MatrixXd* cur = &input;
  for (size_t li = 0; li < params.layers.size(); ++li) {
    const Layer& l = params.layers[li];
    LayerTrace* lt = trace ? &trace->layers[li] : nullptr;

    MatrixXd z;
    z.noalias() = (*cur) * l.weights.transpose();
    z.rowwise() += l.bias.transpose();

    if (l.dropout_rate > 0.0 && mode == Mode::Train) {
      const double keep = 1.0 - l.dropout_rate;
      const double scale = 1.0 / keep;
      BernoulliStream bits(rng, keep);
      if (lt) {
        lt->dropout_mask.resize(n, l.out_dim());
        for (long c = 0; c < z.cols(); ++c)
          for (long r = 0; r < n; ++r) {
            const double m = bits.keep() ? scale : 0.0;
            lt->dropout_mask(r, c) = m;
            z(r, c) *= m;
          }
      } else {
        for (long c = 0; c < z.cols(); ++c)
          for (long r = 0; r < n; ++r) z(r, c) = bits.keep() ? z(r, c) * scale : 0.0;
      }
    }

    if (l.layer_norm) {
      // single stats pass, then vectorized normalize + affine
      VectorXd mean = VectorXd::Zero(n), sumsq = VectorXd::Zero(n);
      for (long c = 0; c < z.cols(); ++c) {
        mean += z.col(c);
        sumsq.array() += z.col(c).array().square();
      }
      const double inv_cols = 1.0 / static_cast<double>(z.cols());
      mean *= inv_cols;
      VectorXd inv_std =
          (sumsq.array() * inv_cols - mean.array().square() + kLayerNormEps).rsqrt();
      for (long c = 0; c < z.cols(); ++c)
        z.col(c).array() = (z.col(c).array() - mean.array()) * inv_std.array();
      if (lt) {
        lt->normalized = z;
        lt->ln_inv_std = std::move(inv_std);
      }
      for (long c = 0; c < z.cols(); ++c)
        z.col(c).array() = z.col(c).array() * l.ln_gain(c) + l.ln_shift(c);
      apply_activation(l.act, z);
    } else {
      apply_activation(l.act, z);
    }

    if (lt) {
      lt->output = std::move(z);
      cur = &lt->output;
    } else {
      x = std::move(z);
      cur = &x;
    }
  }
  return trace ? trace->layers.back().output : x;
}

VectorXd forward_vec(const MlpParams& params, const VectorXd& input, Mode mode, Rng& rng) {
  MatrixXd out = forward(params, input.transpose(), mode, rng);
  return out.row(0).transpose();
}

bool Gradients::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    if (l.ln_gain.size() && !l.ln_gain.allFinite()) return false;
    if (l.ln_shift.size() && !l.ln_shift.allFinite()) return false;
  }
  return true;
}

// Shared reverse sweep. When grads == nullptr only the input gradient chain is
// computed (one GEMM per layer instead of three).
static void backward_impl(const MlpParams& params, const ForwardTrace& trace,
                          const MatrixXd& grad_output, Gradients* grads,
                          MatrixXd* grad_input) {
  if (trace.layers.size() != params.layers.size())
    throw ShapeError("backward: trace does not match network depth");
  if (trace.input.cols() != params.input_dim())
    throw ShapeError("backward: trace does not match network input");
  const auto& last = trace.layers.back();
  if (grad_output.rows() != last.output.rows() || grad_output.cols() != last.output.cols())
    throw ShapeError("backward: grad_output shape mismatch");

  if (grads) grads->layers.resize(params.layers.size());

  const long n = grad_output.rows();
  MatrixXd delta = grad_output;
  for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = params.layers[li];
    const LayerTrace& lt = trace.layers[li];
    if (lt.output.cols() != l.out_dim())
      throw ShapeError("backward: trace layer " + std::to_string(li) + " mismatches params");

    switch (l.act) {
      case Activation::None:
        break;
      case Activation::Relu:
        // the stored output sign recovers the pre-activation mask
        delta = (lt.output.array() > 0.0).select(delta, 0.0);
        break;
      case Activation::Tanh:
        delta.array() *= (1.0 - lt.output.array().square());
        break;
    }

    if (l.layer_norm) {
      if (grads) {
        auto& g = grads->layers[li];
        g.ln_gain.resize(l.out_dim());
        g.ln_shift.resize(l.out_dim());
        for (long c = 0; c < delta.cols(); ++c) {
          g.ln_gain(c) = delta.col(c).dot(lt.normalized.col(c));
          g.ln_shift(c) = delta.col(c).sum();
        }
      }
      VectorXd mean_d = VectorXd::Zero(n), mean_dx = VectorXd::Zero(n);
      for (long c = 0; c < delta.cols(); ++c) {
        delta.col(c) *= l.ln_gain(c);
        mean_d += delta.col(c);
        mean_dx.array() += delta.col(c).array() * lt.normalized.col(c).array();
      }
      const double inv_cols = 1.0 / static_cast<double>(delta.cols());
      mean_d *= inv_cols;
      mean_dx *= inv_cols;
      for (long c = 0; c < delta.cols(); ++c)
        delta.col(c).array() =
            (delta.col(c).array() - mean_d.array() -
             lt.normalized.col(c).array() * mean_dx.array()) *
            lt.ln_inv_std.array();
    }

    if (lt.dropout_mask.size()) delta.array() *= lt.dropout_mask.array();

    if (grads) {
      const MatrixXd& layer_input = li > 0 ? trace.layers[li - 1].output : trace.input;
      auto& g = grads->layers[li];
      g.weights.noalias() = delta.transpose() * layer_input;
      g.bias = delta.colwise().sum().transpose();
    }
    if (li > 0 || grad_input) {
      MatrixXd prev;
      prev.noalias() = delta * l.weights;
      delta = std::move(prev);
    }
  }
  if (grad_input) *grad_input = std::move(delta);
}

Gradients backward(const MlpParams& params, const ForwardTrace& trace,
                   const MatrixXd& grad_output, MatrixXd* grad_input) {
  Gradients grads;
  backward_impl(params, trace, grad_output, &grads, grad_input);
  return grads;
}

MatrixXd backward_input_only(const MlpParams& params, const ForwardTrace& trace,
                             const MatrixXd& grad_output) {
  MatrixXd grad_input;
  backward_impl(params, trace, grad_output, nullptr, &grad_input);
  return grad_input;
}

OptimState make_optim(const MlpParams& params, AdamConfig cfg) {
  OptimState opt;
  opt.cfg = cfg;
  opt.m.resize(params.layers.size());
  opt.v.resize(params.layers.size());
  for (size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& l = params.layers[i];
    opt.m[i].weights = MatrixXd::Zero(l.out_dim(), l.in_dim());
    opt.m[i].bias = VectorXd::Zero(l.out_dim());
    opt.v[i].weights = MatrixXd::Zero(l.out_dim(), l.in_dim());
    opt.v[i].bias = VectorXd::Zero(l.out_dim());
    if (l.layer_norm) {
      opt.m[i].ln_gain = VectorXd::Zero(l.out_dim());
      opt.m[i].ln_shift = VectorXd::Zero(l.out_dim());
      opt.v[i].ln_gain = VectorXd::Zero(l.out_dim());
      opt.v[i].ln_shift = VectorXd::Zero(l.out_dim());
    }
  }
  return opt;
}

namespace {

template <typename T>
void adam_update_tensor(T& param, T& m, T& v, const T& g, const AdamConfig& cfg,
                        double bc1, double bc2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
  param.array() -= cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
}

}  // namespace

void adam_step(OptimState& opt, MlpParams& params, const Gradients& grads) {
  if (grads.layers.size() != params.layers.size() || opt.m.size() != params.layers.size())
    throw ShapeError("adam_step: shape mismatch");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient, update aborted");

  opt.step_count += 1;
  const double bc1 = 1.0 - std::pow(opt.cfg.beta1, static_cast<double>(opt.step_count));
  const double bc2 = 1.0 - std::pow(opt.cfg.beta2, static_cast<double>(opt.step_count));
  for (size_t i = 0; i < params.layers.size(); ++i) {
    Layer& l = params.layers[i];
    const LayerGrads& g = grads.layers[i];
    if (g.weights.rows() != l.weights.rows() || g.weights.cols() != l.weights.cols())
      throw ShapeError("adam_step: gradient shape mismatch in layer " + std::to_string(i));
    adam_update_tensor(l.weights, opt.m[i].weights, opt.v[i].weights, g.weights, opt.cfg, bc1, bc2);
    adam_update_tensor(l.bias, opt.m[i].bias, opt.v[i].bias, g.bias, opt.cfg, bc1, bc2);
    if (l.layer_norm) {
      adam_update_tensor(l.ln_gain, opt.m[i].ln_gain, opt.v[i].ln_gain, g.ln_gain, opt.cfg, bc1, bc2);
      adam_update_tensor(l.ln_shift, opt.m[i].ln_shift, opt.v[i].ln_shift, g.ln_shift, opt.cfg, bc1, bc2);
    }
  }
}

void ScalarAdam::step(double& param, double grad) {
  if (!std::isfinite(grad)) throw NumericError("ScalarAdam: non-finite gradient");
  step_count += 1;
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double mc = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step_count)));
  const double vc = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step_count)));
  param -= cfg.lr * mc / (std::sqrt(vc) + cfg.eps);
}

namespace {

constexpr std::uint64_t kGradCheckSeed = 0x5eedc0ffee123ULL;

double loss_at(const MlpParams& params, const VectorXd& input, const LossSpec& loss) {
  Rng rng(kGradCheckSeed);  // identical dropout masks on every evaluation
  return loss.value(forward_vec(params, input, Mode::Train, rng));
}

struct ParamRef {
  double* p;
};

std::vector<ParamRef> flatten(MlpParams& params) {
  std::vector<ParamRef> refs;
  for (auto& l : params.layers) {
    for (long i = 0; i < l.weights.size(); ++i) refs.push_back({l.weights.data() + i});
    for (long i = 0; i < l.bias.size(); ++i) refs.push_back({l.bias.data() + i});
    for (long i = 0; i < l.ln_gain.size(); ++i) refs.push_back({l.ln_gain.data() + i});
    for (long i = 0; i < l.ln_shift.size(); ++i) refs.push_back({l.ln_shift.data() + i});
  }
  return refs;
}

std::vector<double> flatten_grads(const Gradients& grads) {
  std::vector<double> out;
  for (const auto& l : grads.layers) {
    for (long i = 0; i < l.weights.size(); ++i) out.push_back(l.weights.data()[i]);
    for (long i = 0; i < l.bias.size(); ++i) out.push_back(l.bias.data()[i]);
    for (long i = 0; i < l.ln_gain.size(); ++i) out.push_back(l.ln_gain.data()[i]);
    for (long i = 0; i < l.ln_shift.size(); ++i) out.push_back(l.ln_shift.data()[i]);
  }
  return out;
}

}  // namespace

double grad_check(const MlpParams& params, const VectorXd& input, const LossSpec& loss) {
  Rng rng(kGradCheckSeed);
  ForwardTrace trace;
  MatrixXd out = forward(params, input.transpose(), Mode::Train, rng, &trace);
  VectorXd dloss = loss.grad(out.row(0).transpose());
  Gradients grads = backward(params, trace, dloss.transpose());
  std::vector<double> analytic = flatten_grads(grads);

  MlpParams work = params;
  std::vector<ParamRef> refs = flatten(work);
  if (refs.size() != analytic.size()) throw ShapeError("grad_check: flatten mismatch");

  const double h = 1e-5;
  double max_rel = 0.0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const double orig = *refs[i].p;
    *refs[i].p = orig + h;
    const double fp = loss_at(work, input, loss);
    *refs[i].p = orig - h;
    const double fm = loss_at(work, input, loss);
    *refs[i].p = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kNetMagic[8] = {'A', 'V', 'A', 'I', 'L', 'N', 'E', 'T'};
constexpr char kOptMagic[8] = {'A', 'V', 'A', 'I', 'L', 'O', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ofstream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) throw IoError("record truncated");
}

void write_u32(std::ofstream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ofstream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ofstream& out, double v) { write_bytes(out, &v, 8); }

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v;
  read_bytes(in, &v, 4);
  return v;
}
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v;
  read_bytes(in, &v, 8);
  return v;
}
double read_f64(std::ifstream& in) {
  double v;
  read_bytes(in, &v, 8);
  return v;
}

// row-major on disk regardless of Eigen's in-memory layout
void write_matrix(std::ofstream& out, const MatrixXd& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) write_f64(out, m(r, c));
}

void read_matrix(std::ifstream& in, MatrixXd& m) {
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) m(r, c) = read_f64(in);
}

void write_vector(std::ofstream& out, const VectorXd& v) {
  for (long i = 0; i < v.size(); ++i) write_f64(out, v(i));
}

void read_vector(std::ifstream& in, VectorXd& v) {
  for (long i = 0; i < v.size(); ++i) v(i) = read_f64(in);
}

void write_layer_shape(std::ofstream& out, const Layer& l) {
  write_u32(out, static_cast<std::uint32_t>(l.in_dim()));
  write_u32(out, static_cast<std::uint32_t>(l.out_dim()));
  write_u32(out, static_cast<std::uint32_t>(l.act));
  write_u32(out, l.layer_norm ? 1 : 0);
  write_f64(out, l.dropout_rate);
}

}  // namespace

void save_params(const MlpParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_params: cannot open " + path);
  write_bytes(out, kNetMagic, 8);
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    write_layer_shape(out, l);
    write_matrix(out, l.weights);
    write_vector(out, l.bias);
    if (l.layer_norm) {
      write_vector(out, l.ln_gain);
      write_vector(out, l.ln_shift);
    }
  }
  if (!out) throw IoError("save_params: write failed for " + path);
}

MlpParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_params: cannot open " + path);
  char magic[8];
  read_bytes(in, magic, 8);
  if (std::memcmp(magic, kNetMagic, 8) != 0) throw IoError("load_params: bad magic in " + path);
  if (read_u32(in) != kFormatVersion) throw IoError("load_params: unsupported version");
  const std::uint32_t n_layers = read_u32(in);
  MlpParams params;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer l;
    const std::uint32_t in_dim = read_u32(in);
    const std::uint32_t out_dim = read_u32(in);
    l.act = static_cast<Activation>(read_u32(in));
    l.layer_norm = read_u32(in) != 0;
    l.dropout_rate = read_f64(in);
    l.weights.resize(out_dim, in_dim);
    l.bias.resize(out_dim);
    read_matrix(in, l.weights);
    read_vector(in, l.bias);
    if (l.layer_norm) {
      l.ln_gain.resize(out_dim);
      l.ln_shift.resize(out_dim);
      read_vector(in, l.ln_gain);
      read_vector(in, l.ln_shift);
    }
    params.layers.push_back(std::move(l));
  }
  params.validate();
  return params;
}

void save_optim(const OptimState& opt, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_optim: cannot open " + path);
  write_bytes(out, kOptMagic, 8);
  write_u32(out, kFormatVersion);
  write_u64(out, static_cast<std::uint64_t>(opt.step_count));
  write_f64(out, opt.cfg.lr);
  write_f64(out, opt.cfg.beta1);
  write_f64(out, opt.cfg.beta2);
  write_f64(out, opt.cfg.eps);
  write_u32(out, static_cast<std::uint32_t>(opt.m.size()));
  auto write_side = [&](const std::vector<LayerGrads>& side) {
    for (const auto& l : side) {
      write_u32(out, static_cast<std::uint32_t>(l.weights.rows()));
      write_u32(out, static_cast<std::uint32_t>(l.weights.cols()));
      write_u32(out, static_cast<std::uint32_t>(l.ln_gain.size()));
      write_matrix(out, l.weights);
      write_vector(out, l.bias);
      write_vector(out, l.ln_gain);
      write_vector(out, l.ln_shift);
    }
  };
  write_side(opt.m);
  write_side(opt.v);
  if (!out) throw IoError("save_optim: write failed for " + path);
}

OptimState load_optim(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_optim: cannot open " + path);
  char magic[8];
  read_bytes(in, magic, 8);
  if (std::memcmp(magic, kOptMagic, 8) != 0) throw IoError("load_optim: bad magic in " + path);
  if (read_u32(in) != kFormatVersion) throw IoError("load_optim: unsupported version");
  OptimState opt;
  opt.step_count = static_cast<long>(read_u64(in));
  opt.cfg.lr = read_f64(in);
  opt.cfg.beta1 = read_f64(in);
  opt.cfg.beta2 = read_f64(in);
  opt.cfg.eps = read_f64(in);
  const std::uint32_t n = read_u32(in);
  auto read_side = [&](std::vector<LayerGrads>& side) {
    side.resize(n);
    for (auto& l : side) {
      const std::uint32_t rows = read_u32(in);
      const std::uint32_t cols = read_u32(in);
      const std::uint32_t ln = read_u32(in);
      l.weights.resize(rows, cols);
      l.bias.resize(rows);
      l.ln_gain.resize(ln);
      l.ln_shift.resize(ln);
      read_matrix(in, l.weights);
      read_vector(in, l.bias);
      read_vector(in, l.ln_gain);
      read_vector(in, l.ln_shift);
    }
  };
  read_side(opt.m);
  read_side(opt.v);
  return opt;
}

}  // namespace avail::nn
