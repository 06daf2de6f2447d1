// Soft actor-critic learner with a critic ensemble, subsampled-min targets and
// the optional max-over-proposals bootstrap.
#pragma once

#include "simlauncher/bc_policy.hpp"
#include "simlauncher/buffers.hpp"
#include "simlauncher/checkpoint.hpp"

#include <numeric>

namespace simlauncher {

struct SacHypers {
  double gamma = 0.97;
  double rho = 0.995;
  int ensemble_size = 10;
  int subsample = 2;
  int grad_steps = 4;
  int batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double init_alpha = 0.01;
  std::vector<std::size_t> actor_hidden{256, 256};
  std::vector<std::size_t> critic_hidden{256, 256};

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
    if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must be in (0,1]");
    if (ensemble_size < 1) throw std::invalid_argument("ensemble_size must be >= 1");
    if (subsample < 1 || subsample > ensemble_size) throw std::invalid_argument("subsample must be in [1, K]");
    if (grad_steps < 1) throw std::invalid_argument("grad_steps must be >= 1");
    if (batch_size < 4 || batch_size % 4 != 0) throw std::invalid_argument("batch_size must be a positive multiple of 4");
    for (double lr : {actor_lr, critic_lr, alpha_lr})
      if (!(lr > 0.0)) throw std::invalid_argument("learning rates must be > 0");
    if (!(init_alpha > 0.0)) throw std::invalid_argument("init_alpha must be > 0");
    if (actor_hidden.empty() || critic_hidden.empty()) throw std::invalid_argument("hidden layers must be non-empty");
  }

  bool operator==(const SacHypers&) const = default;
};

struct Actor {
  MlpSpec spec;
  ParamVector params;
  AdamState opt;

  int act_dim() const { return static_cast<int>(spec.output_dim / 2); }
  PolicySample sample(const Mat& obs, Rng& rng) const { return sample_policy_batch(params, spec, obs, rng); }
  Mat mean_action(const Mat& obs) const { return policy_mean_action(params, spec, obs); }
};

struct CriticEnsemble {
  MlpSpec spec;  // input is concat(obs, action), scalar output
  std::vector<ParamVector> online;
  std::vector<ParamVector> target;
  std::vector<AdamState> opt;

  int size() const { return static_cast<int>(online.size()); }
};

struct AlphaState {
  double log_alpha = 0.0;
  double target_entropy = -1.0;
  AdamState opt = AdamState::for_size(1);

  double alpha() const { return std::exp(log_alpha); }
};

struct LearnerCounters {
  std::int64_t learner_steps = 0;
  std::int64_t critic_updates = 0;
  std::int64_t polyak_updates = 0;
  std::int64_t actor_updates = 0;
  std::int64_t alpha_updates = 0;

  bool operator==(const LearnerCounters&) const = default;
};

struct SacLearner {
  SacHypers hypers;
  int obs_dim = 0;
  int act_dim = 0;
  Actor actor;
  CriticEnsemble critics;
  AlphaState alpha;
  LearnerCounters counters;
};

inline SacLearner make_learner(int obs_dim, int act_dim, const SacHypers& h, std::uint64_t seed) {
  h.validate();
  SacLearner l;
  l.hypers = h;
  l.obs_dim = obs_dim;
  l.act_dim = act_dim;
  l.actor.spec = {static_cast<std::size_t>(obs_dim), h.actor_hidden, static_cast<std::size_t>(2 * act_dim),
                  Activation::relu};
  l.actor.params = init_mlp(l.actor.spec, seed);
  l.actor.opt = AdamState::for_size(l.actor.params.size(), h.actor_lr);
  l.critics.spec = {static_cast<std::size_t>(obs_dim + act_dim), h.critic_hidden, 1, Activation::relu};
  for (int k = 0; k < h.ensemble_size; ++k) {
    ParamVector p = init_mlp(l.critics.spec, seed + 1000003ULL * static_cast<std::uint64_t>(k + 1));
    l.critics.online.push_back(p);
    l.critics.target.push_back(p);
    l.critics.opt.push_back(AdamState::for_size(p.size(), h.critic_lr));
  }
  l.alpha.log_alpha = std::log(h.init_alpha);
  l.alpha.target_entropy = -static_cast<double>(act_dim);
  l.alpha.opt = AdamState::for_size(1, h.alpha_lr);
  return l;
}

// ---------------------------------------------------------------------------

inline Mat concat_rows(const Mat& top, const Mat& bottom) {
  if (top.cols() != bottom.cols()) throw std::invalid_argument("concat_rows: column mismatch");
  Mat m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

/// One scalar per ensemble member.
inline Vec q_values(const CriticEnsemble& ens, const Vec& obs, const Vec& action) {
  const Mat in = concat_rows(obs, action);
  Vec q(ens.size());
  for (int k = 0; k < ens.size(); ++k) q[k] = forward_batch(ens.online[static_cast<std::size_t>(k)], ens.spec, in)(0, 0);
  return q;
}

/// Uniformly random m-subset of {0..k-1}, without replacement, in draw order.
inline std::vector<int> draw_subset(int k, int m, Rng& rng) {
  if (m < 1 || m > k) throw std::invalid_argument("subset size out of range");
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, k - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(m));
  return idx;
}

inline double min_over(const Vec& q, const std::vector<int>& subset) {
  double v = std::numeric_limits<double>::infinity();
  for (int i : subset) v = std::min(v, q[i]);
  return v;
}

inline double subsampled_min(const Vec& q, int m, Rng& rng) {
  return min_over(q, draw_subset(static_cast<int>(q.size()), m, rng));
}

/// Potential over the observation; adds gamma * phi(s') * (1 - terminated) - phi(s) to rewards.
using Potential = std::function<double(const Vec&)>;

struct TargetOptions {
  bool include_entropy = true;
  const Potential* shaping = nullptr;
};

namespace detail {

// Elementwise min over a critic subset evaluated on the given input.
inline Vec subset_min_q(const std::vector<ParamVector>& params, const MlpSpec& spec, const std::vector<int>& subset,
                        const Mat& input) {
  Vec out = Vec::Constant(input.cols(), std::numeric_limits<double>::infinity());
  for (int k : subset) out = out.cwiseMin(forward_batch(params[static_cast<std::size_t>(k)], spec, input).row(0).transpose());
  return out;
}

inline Vec shaped_rewards(const Batch& b, double gamma, const TargetOptions& opt) {
  Vec r = b.reward;
  if (!opt.shaping) return r;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    const double phi_s = (*opt.shaping)(b.obs.col(j));
    const double phi_n = b.terminated[j] > 0.5 ? 0.0 : (*opt.shaping)(b.next_obs.col(j));
    r[j] += gamma * phi_n - phi_s;
  }
  return r;
}

}  // namespace detail

/// y = r + (1 - terminated) * gamma * (min_subset Q_target(s', a') - alpha * log pi(a'|s')), a' ~ pi(.|s').
/// Random draws: critic subset first, then actor noise.
inline Vec td_target_standard(const Batch& b, const Actor& actor, const CriticEnsemble& ens, const AlphaState& alpha,
                              const SacHypers& h, Rng& rng, const TargetOptions& opt = {}) {
  const auto subset = draw_subset(ens.size(), h.subsample, rng);
  const PolicySample next = actor.sample(b.next_obs, rng);
  Vec soft = detail::subset_min_q(ens.target, ens.spec, subset, concat_rows(b.next_obs, next.action));
  if (opt.include_entropy) soft -= alpha.alpha() * next.log_prob;
  const Vec cont = Vec::Ones(b.size()) - b.terminated;
  return detail::shaped_rewards(b, h.gamma, opt) + h.gamma * cont.cwiseProduct(soft);
}

/// y = r + (1 - terminated) * gamma * max(min_subset Q(s', a_rl) - alpha log pi, min_subset Q(s', a_bc)).
/// Both candidates share the critic subset; the BC branch carries no entropy term.
inline Vec td_target_proposal(const Batch& b, const Actor& actor, const BcPolicy& bc, const CriticEnsemble& ens,
                              const AlphaState& alpha, const SacHypers& h, Rng& rng, const TargetOptions& opt = {}) {
  if (static_cast<Eigen::Index>(bc.spec.input_dim) != b.next_obs.rows())
    throw std::invalid_argument("td_target_proposal: BC policy observation size mismatch");
  const auto subset = draw_subset(ens.size(), h.subsample, rng);
  const PolicySample next = actor.sample(b.next_obs, rng);
  Vec q_rl = detail::subset_min_q(ens.target, ens.spec, subset, concat_rows(b.next_obs, next.action));
  if (opt.include_entropy) q_rl -= alpha.alpha() * next.log_prob;
  const Vec q_bc = detail::subset_min_q(ens.target, ens.spec, subset, concat_rows(b.next_obs, bc.act_batch(b.next_obs)));
  const Vec cont = Vec::Ones(b.size()) - b.terminated;
  return detail::shaped_rewards(b, h.gamma, opt) + h.gamma * cont.cwiseProduct(q_rl.cwiseMax(q_bc));
}

/// One Adam step per member on mean((Q - y)^2). Returns the member-averaged loss.
inline double critic_update(CriticEnsemble& ens, const Batch& b, const Vec& y) {
  if (y.size() != b.size()) throw std::invalid_argument("critic_update: target length mismatch");
  const Mat in = concat_rows(b.obs, b.action);
  const double n = static_cast<double>(b.size());
  std::vector<ParamVector> grads(static_cast<std::size_t>(ens.size()));
  double total = 0.0;
  for (int k = 0; k < ens.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    MlpTape tape;
    const Mat q = forward_batch(ens.online[ku], ens.spec, in, &tape);
    const Mat diff = q - y.transpose();
    const double loss = diff.squaredNorm() / n;
    if (!std::isfinite(loss)) throw std::domain_error("critic_update: non-finite loss");
    total += loss;
    grads[ku] = backward_batch(ens.online[ku], ens.spec, tape, (2.0 / n) * diff);
  }
  for (int k = 0; k < ens.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    adam_step(ens.opt[ku], ens.online[ku], grads[ku]);
  }
  return total / ens.size();
}

struct ActorUpdateResult {
  double loss = 0.0;
  Vec log_probs;
  double mean_log_std = 0.0;
};

/// One step on mean(alpha * log pi(a|s) - min(Q_i, Q_j)(s, a)) with reparameterised a and a
/// random pair (i, j) of online critics, re-drawn per call.
inline ActorUpdateResult actor_update(Actor& actor, const CriticEnsemble& ens, const AlphaState& alpha,
                                      const Batch& b, Rng& rng) {
  const auto pair = draw_subset(ens.size(), std::min(2, ens.size()), rng);
  const PolicySample s = actor.sample(b.obs, rng);
  const Mat in = concat_rows(b.obs, s.action);
  const Eigen::Index n = b.size();
  const double a = alpha.alpha();

  std::vector<MlpTape> tapes(pair.size());
  std::vector<Vec> qs(pair.size());
  for (std::size_t p = 0; p < pair.size(); ++p)
    qs[p] = forward_batch(ens.online[static_cast<std::size_t>(pair[p])], ens.spec, in, &tapes[p]).row(0).transpose();
  std::vector<int> which(static_cast<std::size_t>(n), 0);
  Vec qagg = qs[0];
  for (std::size_t p = 1; p < pair.size(); ++p)
    for (Eigen::Index j = 0; j < n; ++j)
      if (qs[p][j] < qagg[j]) {
        qagg[j] = qs[p][j];
        which[static_cast<std::size_t>(j)] = static_cast<int>(p);
      }
  const double loss = (a * s.log_prob - qagg).mean();
  if (!std::isfinite(loss)) throw std::domain_error("actor_update: non-finite loss");

  const auto ad = s.action.rows();
  Mat dloss_da = Mat::Zero(ad, n);
  for (std::size_t p = 0; p < pair.size(); ++p) {
    Mat up = Mat::Zero(1, n);
    for (Eigen::Index j = 0; j < n; ++j)
      if (which[static_cast<std::size_t>(j)] == static_cast<int>(p)) up(0, j) = -1.0 / static_cast<double>(n);
    Mat dx;
    backward_batch(ens.online[static_cast<std::size_t>(pair[p])], ens.spec, tapes[p], up, &dx);
    dloss_da += dx.bottomRows(ad);
  }
  const Vec dloss_dlogp = Vec::Constant(n, a / static_cast<double>(n));
  const Mat head = policy_head_upstream(s, dloss_da, dloss_dlogp);
  const ParamVector g = backward_batch(actor.params, actor.spec, s.tape, head);
  adam_step(actor.opt, actor.params, g);
  return {loss, s.log_prob, s.log_std.mean()};
}

/// Step on L(log_alpha) = -log_alpha * mean(log_pi + target_entropy).
inline double alpha_update(AlphaState& st, const Vec& log_probs) {
  const double gap = (log_probs.array() + st.target_entropy).mean();
  const double loss = -st.log_alpha * gap;
  Vec p(1), g(1);
  p[0] = st.log_alpha;
  g[0] = -gap;
  adam_step(st.opt, p, g);
  st.log_alpha = p[0];
  return loss;
}

// ---------------------------------------------------------------------------

enum class TargetKind { standard, proposal };

struct LearnerSources {
  const BufferStore* replay;
  const BufferStore* d_sim;
  const BufferStore* d_real;
};

struct LearnerConfig {
  std::array<double, 3> fractions{0.5, 0.25, 0.25};
  TargetKind target = TargetKind::standard;
  const BcPolicy* bc = nullptr;  // required for TargetKind::proposal
  TargetOptions target_options{};
};

struct LearnerMetrics {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double q_target_mean = 0.0;
  double mean_log_std = 0.0;
  std::vector<std::array<int, 3>> batch_counts;  // one per sampled batch, actor batch last

  bool operator==(const LearnerMetrics&) const = default;
};

/// G x {stratified batch, target, critic step, Polyak}, then one actor and one alpha step on a
/// fresh stratified batch.
inline LearnerMetrics learner_step(SacLearner& l, const LearnerSources& src, const LearnerConfig& cfg, Rng& rng) {
  if (cfg.target == TargetKind::proposal && !cfg.bc)
    throw std::invalid_argument("learner_step: proposal target requires a BC policy");
  const auto& h = l.hypers;
  LearnerMetrics m;
  for (int g = 0; g < h.grad_steps; ++g) {
    const Batch b = sample_stratified(*src.replay, *src.d_sim, *src.d_real, h.batch_size, cfg.fractions, rng);
    m.batch_counts.push_back(b.counts);
    const Vec y = cfg.target == TargetKind::proposal
                      ? td_target_proposal(b, l.actor, *cfg.bc, l.critics, l.alpha, h, rng, cfg.target_options)
                      : td_target_standard(b, l.actor, l.critics, l.alpha, h, rng, cfg.target_options);
    m.q_target_mean += y.mean() / h.grad_steps;
    m.critic_loss += critic_update(l.critics, b, y) / h.grad_steps;
    ++l.counters.critic_updates;
    for (int k = 0; k < l.critics.size(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      l.critics.target[ku] = polyak_update(l.critics.target[ku], l.critics.online[ku], h.rho);
    }
    ++l.counters.polyak_updates;
  }
  const Batch b = sample_stratified(*src.replay, *src.d_sim, *src.d_real, h.batch_size, cfg.fractions, rng);
  m.batch_counts.push_back(b.counts);
  const ActorUpdateResult ar = actor_update(l.actor, l.critics, l.alpha, b, rng);
  ++l.counters.actor_updates;
  m.actor_loss = ar.loss;
  m.mean_log_std = ar.mean_log_std;
  m.alpha_loss = alpha_update(l.alpha, ar.log_probs);
  ++l.counters.alpha_updates;
  m.alpha = l.alpha.alpha();
  ++l.counters.learner_steps;
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

inline void save_learner(Checkpoint& ck, const SacLearner& l) {
  const auto& h = l.hypers;
  ck.put("learner.dims", std::vector<double>{static_cast<double>(l.obs_dim), static_cast<double>(l.act_dim)});
  ck.put("learner.hypers", std::vector<double>{h.gamma, h.rho, static_cast<double>(h.ensemble_size),
                                               static_cast<double>(h.subsample), static_cast<double>(h.grad_steps),
                                               static_cast<double>(h.batch_size), h.actor_lr, h.critic_lr, h.alpha_lr,
                                               h.init_alpha});
  put_spec(ck, "actor.spec", l.actor.spec);
  ck.put("actor", l.actor.params);
  put_adam(ck, "actor.opt", l.actor.opt);
  put_spec(ck, "critic.spec", l.critics.spec);
  for (int k = 0; k < l.critics.size(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    ck.put("critic." + std::to_string(k), l.critics.online[ku]);
    ck.put("target." + std::to_string(k), l.critics.target[ku]);
    put_adam(ck, "critic." + std::to_string(k) + ".opt", l.critics.opt[ku]);
  }
  ck.put("alpha", std::vector<double>{l.alpha.log_alpha, l.alpha.target_entropy});
  put_adam(ck, "alpha.opt", l.alpha.opt);
  const auto& c = l.counters;
  ck.put("learner.counters",
         std::vector<double>{static_cast<double>(c.learner_steps), static_cast<double>(c.critic_updates),
                             static_cast<double>(c.polyak_updates), static_cast<double>(c.actor_updates),
                             static_cast<double>(c.alpha_updates)});
}

inline SacLearner load_learner(const Checkpoint& ck) {
  SacLearner l;
  const auto& dims = ck.get_sized("learner.dims", 2);
  l.obs_dim = static_cast<int>(dims[0]);
  l.act_dim = static_cast<int>(dims[1]);
  const auto& hv = ck.get_sized("learner.hypers", 10);
  auto& h = l.hypers;
  h.gamma = hv[0];
  h.rho = hv[1];
  h.ensemble_size = static_cast<int>(hv[2]);
  h.subsample = static_cast<int>(hv[3]);
  h.grad_steps = static_cast<int>(hv[4]);
  h.batch_size = static_cast<int>(hv[5]);
  h.actor_lr = hv[6];
  h.critic_lr = hv[7];
  h.alpha_lr = hv[8];
  h.init_alpha = hv[9];
  l.actor.spec = get_spec(ck, "actor.spec");
  l.critics.spec = get_spec(ck, "critic.spec");
  h.actor_hidden = l.actor.spec.hidden_dims;
  h.critic_hidden = l.critics.spec.hidden_dims;
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto na = l.actor.spec.param_count();
  l.actor.params = Eigen::Map<const Vec>(ck.get_sized("actor", na).data(), static_cast<Eigen::Index>(na));
  l.actor.opt = get_adam(ck, "actor.opt", na);
  const auto nc = l.critics.spec.param_count();
  for (int k = 0; k < h.ensemble_size; ++k) {
    const std::string ks = std::to_string(k);
    l.critics.online.emplace_back(Eigen::Map<const Vec>(ck.get_sized("critic." + ks, nc).data(), static_cast<Eigen::Index>(nc)));
    l.critics.target.emplace_back(Eigen::Map<const Vec>(ck.get_sized("target." + ks, nc).data(), static_cast<Eigen::Index>(nc)));
    l.critics.opt.push_back(get_adam(ck, "critic." + ks + ".opt", nc));
  }
  const auto& al = ck.get_sized("alpha", 2);
  l.alpha.log_alpha = al[0];
  l.alpha.target_entropy = al[1];
  l.alpha.opt = get_adam(ck, "alpha.opt", 1);
  const auto& c = ck.get_sized("learner.counters", 5);
  l.counters = {static_cast<std::int64_t>(c[0]), static_cast<std::int64_t>(c[1]), static_cast<std::int64_t>(c[2]),
                static_cast<std::int64_t>(c[3]), static_cast<std::int64_t>(c[4])};
  return l;
}

}  // namespace simlauncher
