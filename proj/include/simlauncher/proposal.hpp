// Boltzmann choice between the RL actor's action and the BC policy's action,
// with a geometric inverse-temperature schedule that ends in argmax.
#pragma once

#include "simlauncher/sac_core.hpp"

namespace simlauncher {

struct BetaSchedule {
  double beta0 = 50.0;
  std::int64_t doubling_period = 3000;  // env steps
  double beta_max = 1e6;

  void validate() const {
    if (!(beta0 > 0.0)) throw std::invalid_argument("beta0 must be > 0");
    if (doubling_period < 1) throw std::invalid_argument("beta doubling period must be >= 1");
    if (!(beta_max > beta0)) throw std::invalid_argument("beta_max must exceed beta0");
  }
  bool operator==(const BetaSchedule&) const = default;
};

/// Inverse temperature, or the argmax marker once it exceeds beta_max.
struct Beta {
  double value = 0.0;
  bool argmax = false;
};

inline Beta beta_at(const BetaSchedule& s, std::int64_t env_step) {
  if (env_step < 0) throw std::invalid_argument("beta_at: env_step must be >= 0");
  const double b = s.beta0 * std::exp2(static_cast<double>(env_step) / static_cast<double>(s.doubling_period));
  if (b > s.beta_max) return {std::numeric_limits<double>::infinity(), true};
  return {b, false};
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class ProposalSource { rl, bc };

struct ProposalDecision {
  Vec action;
  ProposalSource source = ProposalSource::rl;
  double q_rl = 0.0;
  double q_bc = 0.0;
  double p_bc = 0.0;
  Beta beta;
};

/// Probability of picking the BC candidate; argmax mode is deterministic with ties to RL.
inline double bc_probability(double q_rl, double q_bc, const Beta& beta) {
  if (beta.argmax) return q_bc > q_rl ? 1.0 : 0.0;
  return logistic(beta.value * (q_bc - q_rl));
}

/// Candidates are a_rl ~ pi(.|obs) and the BC mean action, scored by the mean over all online
/// critics. Random draws: actor noise, then the selection uniform (finite beta only).
inline ProposalDecision propose(const Vec& obs, const Actor& actor, const BcPolicy& bc, const CriticEnsemble& critics,
                                const Beta& beta, Rng& rng) {
  if (critics.size() < 1) throw std::invalid_argument("propose: empty critic ensemble");
  if (static_cast<Eigen::Index>(bc.spec.input_dim) != obs.size() ||
      static_cast<Eigen::Index>(actor.spec.input_dim) != obs.size())
    throw std::invalid_argument("propose: observation dimension mismatch");
  if (bc.act_dim() != actor.act_dim()) throw std::invalid_argument("propose: action dimension mismatch");
  ProposalDecision d;
  d.beta = beta;
  const Vec a_rl = actor.sample(obs, rng).action.col(0);
  const Vec a_bc = bc.act(obs);
  d.q_rl = q_values(critics, obs, a_rl).mean();
  d.q_bc = q_values(critics, obs, a_bc).mean();
  d.p_bc = bc_probability(d.q_rl, d.q_bc, beta);
  bool take_bc = false;
  if (beta.argmax) {
    take_bc = d.p_bc == 1.0;
  } else {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    take_bc = u(rng) < d.p_bc;
  }
  d.source = take_bc ? ProposalSource::bc : ProposalSource::rl;
  d.action = take_bc ? a_bc : a_rl;
  return d;
}

}  // namespace simlauncher
