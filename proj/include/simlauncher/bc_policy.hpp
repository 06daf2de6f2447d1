#pragma once

#include "simlauncher/checkpoint.hpp"

namespace simlauncher {

/// Deterministic imitation policy: action = tanh(mlp(obs)).
struct BcPolicy {
  MlpSpec spec;
  ParamVector params;
  double final_loss = std::numeric_limits<double>::quiet_NaN();

  int act_dim() const { return static_cast<int>(spec.output_dim); }
  Mat act_batch(const Mat& obs) const { return forward_batch(params, spec, obs).array().tanh().matrix(); }
  Vec act(const Vec& obs) const { return act_batch(obs).col(0); }

  void save(Checkpoint& ck, const std::string& prefix = "bc") const {
    put_spec(ck, prefix + ".spec", spec);
    ck.put(prefix + ".params", params);
    ck.put(prefix + ".loss", std::vector<double>{final_loss});
  }

  static BcPolicy load(const Checkpoint& ck, const std::string& prefix = "bc") {
    BcPolicy p;
    p.spec = get_spec(ck, prefix + ".spec");
    const auto& v = ck.get_sized(prefix + ".params", p.spec.param_count());
    p.params = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    p.final_loss = ck.get_sized(prefix + ".loss", 1)[0];
    return p;
  }
};

}  // namespace simlauncher
