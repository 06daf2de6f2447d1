// Multilayer perceptrons, squashed-Gaussian policy heads, Adam and Polyak
// updates. Everything here is a pure function of its arguments plus an
// explicit RNG handle.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace simlauncher {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Flat parameter array; layout is fixed by an MlpSpec (per layer: W column-major, then b).
using ParamVector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims{1};
  std::size_t output_dim = 1;
  Activation activation = Activation::relu;

  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  std::size_t layer_in(std::size_t l) const { return l == 0 ? input_dim : hidden_dims[l - 1]; }
  std::size_t layer_out(std::size_t l) const {
    return l + 1 == layer_count() ? output_dim : hidden_dims[l];
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) n += layer_in(l) * layer_out(l) + layer_out(l);
    return n;
  }

  void validate() const {
    if (input_dim == 0 || output_dim == 0) throw std::invalid_argument("MlpSpec: dims must be >= 1");
    for (auto h : hidden_dims)
      if (h == 0) throw std::invalid_argument("MlpSpec: hidden dims must be >= 1");
  }

  bool operator==(const MlpSpec&) const = default;
};

namespace detail {

inline void check_params(const ParamVector& p, const MlpSpec& spec) {
  if (static_cast<std::size_t>(p.size()) != spec.param_count())
    throw std::invalid_argument("parameter vector length " + std::to_string(p.size()) +
                                " does not match spec (" + std::to_string(spec.param_count()) + ")");
}

inline void activate(Mat& z, Activation a) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::identity: break;
  }
}

// Derivative expressed through the post-activation value.
inline void scale_by_derivative(Mat& delta, const Mat& post, Activation a) {
  switch (a) {
    case Activation::relu: delta = (post.array() > 0.0).select(delta, 0.0); break;
    case Activation::tanh: delta.array() *= 1.0 - post.array().square(); break;
    case Activation::identity: break;
  }
}

}  // namespace detail

/// Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline ParamVector init_mlp(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamVector p(static_cast<Eigen::Index>(spec.param_count()));
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_in(l)));
    std::uniform_real_distribution<double> u(-bound, bound);
    const auto n = static_cast<Eigen::Index>(spec.layer_in(l) * spec.layer_out(l) + spec.layer_out(l));
    for (Eigen::Index i = 0; i < n; ++i) p[off + i] = u(rng);
    off += n;
  }
  return p;
}

/// Intermediate activations kept by forward_batch for a later backward pass.
/// activations[0] is the input, activations[l + 1] the output of layer l.
struct MlpTape {
  std::vector<Mat> activations;
};

/// Column-per-sample forward pass: input is (input_dim x B), result is (output_dim x B).
inline Mat forward_batch(const ParamVector& params, const MlpSpec& spec, const Mat& input,
                         MlpTape* tape = nullptr) {
  detail::check_params(params, spec);
  if (static_cast<std::size_t>(input.rows()) != spec.input_dim)
    throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) +
                                " rows, spec expects " + std::to_string(spec.input_dim));
  if (tape) {
    tape->activations.resize(spec.layer_count() + 1);
    tape->activations[0] = input;
  }
  Mat x = input;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto in = static_cast<Eigen::Index>(spec.layer_in(l));
    const auto out = static_cast<Eigen::Index>(spec.layer_out(l));
    Eigen::Map<const Mat> w(params.data() + off, out, in);
    Eigen::Map<const Vec> b(params.data() + off + out * in, out);
    off += out * in + out;
    Mat z = w * x;
    z.colwise() += b;
    if (l + 1 < spec.layer_count()) detail::activate(z, spec.activation);
    x = std::move(z);
    if (tape) tape->activations[l + 1] = x;
  }
  return x;
}

/// Reverse pass for forward_batch. Returns parameter gradients of sum_j upstream_j . output_j
/// (summed over the batch); writes input gradients when requested.
inline ParamVector backward_batch(const ParamVector& params, const MlpSpec& spec, const MlpTape& tape,
                                  const Mat& upstream, Mat* input_grad = nullptr) {
  detail::check_params(params, spec);
  if (tape.activations.size() != spec.layer_count() + 1)
    throw std::invalid_argument("backward: tape does not belong to this spec");
  if (static_cast<std::size_t>(upstream.rows()) != spec.output_dim ||
      upstream.cols() != tape.activations[0].cols())
    throw std::invalid_argument("backward: upstream shape mismatch");

  ParamVector grad(params.size());
  // Offsets of each layer, computed front to back.
  std::vector<Eigen::Index> offsets(spec.layer_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    offsets[l] = off;
    off += static_cast<Eigen::Index>(spec.layer_in(l) * spec.layer_out(l) + spec.layer_out(l));
  }

  Mat delta = upstream;
  for (std::size_t li = spec.layer_count(); li-- > 0;) {
    const auto in = static_cast<Eigen::Index>(spec.layer_in(li));
    const auto out = static_cast<Eigen::Index>(spec.layer_out(li));
    const Mat& x = tape.activations[li];
    Eigen::Map<const Mat> w(params.data() + offsets[li], out, in);
    Eigen::Map<Mat> dw(grad.data() + offsets[li], out, in);
    Eigen::Map<Vec> db(grad.data() + offsets[li] + out * in, out);
    dw.noalias() = delta * x.transpose();
    db = delta.rowwise().sum();
    if (li > 0 || input_grad) {
      Mat dx = w.transpose() * delta;
      if (li > 0) {
        detail::scale_by_derivative(dx, x, spec.activation);
        delta = std::move(dx);
      } else {
        *input_grad = std::move(dx);
      }
    }
  }
  return grad;
}

inline Vec forward(const ParamVector& params, const MlpSpec& spec, const Vec& input) {
  return forward_batch(params, spec, input).col(0);
}

struct MlpGradients {
  ParamVector param_grads;
  Vec input_grad;
};

inline MlpGradients backward(const ParamVector& params, const MlpSpec& spec, const Vec& input,
                             const Vec& upstream) {
  MlpTape tape;
  forward_batch(params, spec, input, &tape);
  Mat dx;
  MlpGradients g;
  g.param_grads = backward_batch(params, spec, tape, upstream, &dx);
  g.input_grad = dx.col(0);
  return g;
}

// ---------------------------------------------------------------------------
// Squashed Gaussian policy head. The network emits [mean; raw_log_std].

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// log(1 - tanh(u)^2), stable for large |u|.
inline double log1m_tanh_sq(double u) { return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u)); }

struct GaussianPolicyOutput {
  Vec mean;
  Vec log_std;
  Vec action;
  double log_prob = 0.0;
};

/// Batched policy evaluation with everything the reparameterised gradient needs.
struct PolicySample {
  Mat mean;
  Mat log_std;
  Mat noise;
  Mat pre_squash;
  Mat action;
  Vec log_prob;
  Mat log_std_active;  // 1 where the clamp is inactive
  MlpTape tape;
};

inline std::size_t policy_action_dim(const MlpSpec& spec) {
  if (spec.output_dim % 2 != 0) throw std::invalid_argument("policy head needs an even output_dim");
  return spec.output_dim / 2;
}

/// An explicit noise matrix (action_dim x B) may be supplied; otherwise it is drawn from rng.
inline PolicySample sample_policy_batch(const ParamVector& params, const MlpSpec& spec, const Mat& obs,
                                        Rng& rng, const Mat* fixed_noise = nullptr) {
  const auto a = static_cast<Eigen::Index>(policy_action_dim(spec));
  PolicySample s;
  Mat out = forward_batch(params, spec, obs, &s.tape);
  const Eigen::Index batch = obs.cols();
  s.mean = out.topRows(a);
  Mat raw = out.bottomRows(a);
  s.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  s.log_std_active = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>().matrix();
  if (fixed_noise) {
    if (fixed_noise->rows() != a || fixed_noise->cols() != batch)
      throw std::invalid_argument("policy noise shape mismatch");
    s.noise = *fixed_noise;
  } else {
    s.noise.resize(a, batch);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (Eigen::Index j = 0; j < batch; ++j)
      for (Eigen::Index i = 0; i < a; ++i) s.noise(i, j) = n01(rng);
  }
  s.pre_squash = s.mean + (s.log_std.array().exp() * s.noise.array()).matrix();
  s.action = s.pre_squash.array().tanh().matrix();
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  s.log_prob.resize(batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < a; ++i)
      lp += -0.5 * s.noise(i, j) * s.noise(i, j) - s.log_std(i, j) - half_log_2pi -
            log1m_tanh_sq(s.pre_squash(i, j));
    s.log_prob[j] = lp;
  }
  return s;
}

/// Gradient with respect to the raw network output of sum_j L_j, where each L_j depends on
/// the squashed action (through dloss_daction) and the log-probability (through dloss_dlogp).
inline Mat policy_head_upstream(const PolicySample& s, const Mat& dloss_daction, const Vec& dloss_dlogp) {
  const Eigen::Index a = s.mean.rows();
  const Eigen::Index batch = s.mean.cols();
  Mat up(2 * a, batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index i = 0; i < a; ++i) {
      const double act = s.action(i, j);
      const double sig = std::exp(s.log_std(i, j));
      const double eps = s.noise(i, j);
      const double dsquash = 1.0 - act * act;
      const double ga = dloss_daction(i, j);
      const double gl = dloss_dlogp[j];
      up(i, j) = ga * dsquash + gl * 2.0 * act;
      up(a + i, j) = s.log_std_active(i, j) * (ga * dsquash * sig * eps + gl * (-1.0 + 2.0 * act * sig * eps));
    }
  }
  return up;
}

inline GaussianPolicyOutput sample_squashed_gaussian(const ParamVector& params, const MlpSpec& spec,
                                                     const Vec& obs, Rng& rng) {
  PolicySample s = sample_policy_batch(params, spec, obs, rng);
  return {s.mean.col(0), s.log_std.col(0), s.action.col(0), s.log_prob[0]};
}

/// Deterministic action tanh(mean).
inline Mat policy_mean_action(const ParamVector& params, const MlpSpec& spec, const Mat& obs) {
  const auto a = static_cast<Eigen::Index>(policy_action_dim(spec));
  return forward_batch(params, spec, obs).topRows(a).array().tanh().matrix();
}

// ---------------------------------------------------------------------------

/// Elementwise rho * target + (1 - rho) * online.
inline ParamVector polyak_update(const ParamVector& target, const ParamVector& online, double rho) {
  if (target.size() != online.size()) throw std::invalid_argument("polyak_update: length mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("polyak_update: rho outside [0,1]");
  return rho * target + (1.0 - rho) * online;
}

struct AdamState {
  Vec first_moment;
  Vec second_moment;
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n, double lr = 3e-4) {
    AdamState s;
    s.first_moment = Vec::Zero(n);
    s.second_moment = Vec::Zero(n);
    s.learning_rate = lr;
    return s;
  }
};

/// Bias-corrected Adam step, in place on both state and params.
inline void adam_step(AdamState& state, ParamVector& params, const ParamVector& grads) {
  if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw std::invalid_argument("adam_step: length mismatch");
  if (!grads.allFinite()) throw std::domain_error("adam_step: non-finite gradient");
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max(std::abs(analytic) + std::abs(numeric), 1e-6);
  return std::abs(analytic - numeric) / denom;
}

/// Hook applied to analytic parameter gradients before comparison (used to inject faults).
using GradientHook = std::function<void(ParamVector&)>;

/// Central finite differences (step 1e-5) of f(params, x) = upstream . forward(params, x)
/// against backward(), over every parameter and input coordinate of three random probes.
/// A parameter of layer l moves one pre-activation of that layer, so perturbed values are
/// pushed through the remaining layers with forward_batch, many perturbations per call.
inline GradCheckReport grad_check(const MlpSpec& spec, std::uint64_t seed, double tolerance,
                                  const GradientHook& corrupt = {}) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("grad_check: tolerance must be > 0");
  spec.validate();
  constexpr double h = 1e-5;
  constexpr int probes = 3;
  constexpr Eigen::Index chunk = 1024;
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> n01(0.0, 1.0);
  GradCheckReport rep;
  rep.tolerance = tolerance;
  const ParamVector params = init_mlp(spec, seed);
  const std::size_t layers = spec.layer_count();
  std::vector<Eigen::Index> offsets(layers + 1, 0);
  for (std::size_t l = 0; l < layers; ++l)
    offsets[l + 1] = offsets[l] + static_cast<Eigen::Index>(spec.layer_in(l) * spec.layer_out(l) + spec.layer_out(l));
  auto compare = [&](double analytic, double fp, double fm) {
    rep.max_rel_error = std::max(rep.max_rel_error, relative_error(analytic, (fp - fm) / (2 * h)));
    ++rep.checked;
  };

  for (int probe = 0; probe < probes; ++probe) {
    Vec x(static_cast<Eigen::Index>(spec.input_dim));
    Vec up(static_cast<Eigen::Index>(spec.output_dim));
    for (auto& v : x) v = n01(rng);
    for (auto& v : up) v = n01(rng);
    MlpGradients g = backward(params, spec, x, up);
    if (corrupt) corrupt(g.param_grads);
    MlpTape tape;
    forward_batch(params, spec, x, &tape);

    for (std::size_t l = 0; l < layers; ++l) {
      const auto in = static_cast<Eigen::Index>(spec.layer_in(l));
      const auto out = static_cast<Eigen::Index>(spec.layer_out(l));
      const Vec& a = tape.activations[l];
      Eigen::Map<const Mat> w(params.data() + offsets[l], out, in);
      Eigen::Map<const Vec> b(params.data() + offsets[l] + out * in, out);
      const Vec z = w * a + b;
      // Layers after l as their own network.
      const bool last = l + 1 == layers;
      MlpSpec suffix;
      ParamVector suffix_params;
      if (!last) {
        suffix.input_dim = spec.hidden_dims[l];
        suffix.hidden_dims.assign(spec.hidden_dims.begin() + static_cast<std::ptrdiff_t>(l) + 1, spec.hidden_dims.end());
        suffix.output_dim = spec.output_dim;
        suffix.activation = spec.activation;
        suffix_params = params.segment(offsets[l + 1], offsets[layers] - offsets[l + 1]);
      }
      auto value = [&](Mat cols) -> Vec {
        if (last) return (up.transpose() * cols).transpose();
        detail::activate(cols, spec.activation);
        return (up.transpose() * forward_batch(suffix_params, suffix, cols)).transpose();
      };
      // Parameter k of layer l: row k % out for weights (input k / out), row k - out*in for biases.
      const Eigen::Index count = out * in + out;
      for (Eigen::Index start = 0; start < count; start += chunk) {
        const Eigen::Index n = std::min(chunk, count - start);
        Mat plus = z.replicate(1, n), minus = plus;
        for (Eigen::Index c = 0; c < n; ++c) {
          const Eigen::Index k = start + c;
          const Eigen::Index row = k < out * in ? k % out : k - out * in;
          const double orig = params[offsets[l] + k];
          const double scale = k < out * in ? a[k / out] : 1.0;
          // Same rounding as a forward pass with the parameter itself perturbed.
          plus(row, c) += ((orig + h) - orig) * scale;
          minus(row, c) += ((orig - h) - orig) * scale;
        }
        const Vec fp = value(plus), fm = value(minus);
        for (Eigen::Index c = 0; c < n; ++c) compare(g.param_grads[offsets[l] + start + c], fp[c], fm[c]);
      }
    }

    Vec xi = x;
    for (Eigen::Index i = 0; i < xi.size(); ++i) {
      const double orig = xi[i];
      xi[i] = orig + h;
      const double fp = up.dot(forward(params, spec, xi));
      xi[i] = orig - h;
      const double fm = up.dot(forward(params, spec, xi));
      xi[i] = orig;
      compare(g.input_grad[i], fp, fm);
    }
  }
  rep.passed = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace simlauncher
