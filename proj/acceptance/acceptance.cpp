// Acceptance checks A1-A12. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.
#include "simlauncher/study.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

using namespace simlauncher;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o << std::setprecision(4) << v;
  return o.str();
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v[i]);
  return s + "]";
}

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Desk-scale configuration shared by the study criteria.
TrainConfig desk_config() {
  TrainConfig c;
  c.task = TaskId::push_place;
  c.sac.actor_hidden = {64, 64};
  c.sac.critic_hidden = {64, 64};
  c.sac.batch_size = 128;
  c.sac.grad_steps = 1;
  c.run.budget = 30000;
  c.run.wall_clock = false;
  return c;
}

double steps_to(const RunResult& r, double level) {
  const auto t = first_step_reaching(r.rows, level);
  return t ? static_cast<double>(*t) : kInf;
}

const CurveResult& curve(const StudyReport& rep, const std::string& name) {
  for (const auto& c : rep.curves)
    if (c.name == name) return c;
  throw std::logic_error("missing curve " + name);
}

std::vector<double> per_seed(const CurveResult& c, const std::function<double(const RunResult&)>& f) {
  std::vector<double> v;
  for (const auto& r : c.runs) v.push_back(f(*r.result));
  return v;
}

// Fixed-action one-dimensional setup: Q(s, a) = w * a.
struct Bandit {
  Actor actor;
  BcPolicy bc;
  CriticEnsemble critics;
};

Bandit bandit(double a_rl, double a_bc, double w) {
  Bandit b;
  b.actor.spec = {1, {}, 2, Activation::relu};
  b.actor.params = ParamVector::Zero(4);
  b.actor.params[2] = std::atanh(a_rl);
  b.actor.params[3] = -50.0;
  b.bc.spec = {1, {}, 1, Activation::relu};
  b.bc.params = ParamVector::Zero(2);
  b.bc.params[1] = std::atanh(a_bc);
  b.critics.spec = {2, {}, 1, Activation::relu};
  for (int i = 0; i < 2; ++i) {
    ParamVector p = ParamVector::Zero(3);
    p[1] = w;
    b.critics.online.push_back(p);
    b.critics.target.push_back(p);
    b.critics.opt.push_back(AdamState::for_size(3));
  }
  return b;
}

Batch random_batch(int obs_dim, int act_dim, int n, Rng& rng) {
  std::normal_distribution<double> n01;
  std::bernoulli_distribution coin(0.3);
  Batch b;
  b.obs = Mat(obs_dim, n);
  b.next_obs = Mat(obs_dim, n);
  b.action = Mat(act_dim, n);
  b.reward = Vec(n);
  b.terminated = Vec(n);
  b.truncated = Vec::Zero(n);
  for (auto* m : {&b.obs, &b.next_obs})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n01(rng);
  for (Eigen::Index i = 0; i < b.action.size(); ++i) b.action.data()[i] = std::tanh(n01(rng));
  for (int j = 0; j < n; ++j) {
    b.terminated[j] = coin(rng) ? 1.0 : 0.0;
    b.reward[j] = b.terminated[j];
  }
  b.source.assign(static_cast<std::size_t>(n), SourceTag::replay);
  return b;
}

BufferStore tagged(int n, SourceTag tag) {
  BufferStore b(1000);
  for (int i = 0; i < n; ++i)
    b.push(Transition::make(Vec::Constant(3, i), Vec::Constant(2, 0.1), 0.0, Vec::Constant(3, i + 1), false, false, tag));
  return b;
}

class Acceptance {
 public:
  Acceptance(std::vector<std::uint64_t> seeds, std::filesystem::path out)
      : seeds_(std::move(seeds)), out_(std::move(out)), runner_([](const std::string& m) { std::cerr << "  " << m << "\n"; }) {}

  Verdict a1() {
    std::vector<MlpSpec> specs;
    for (TaskId task : {TaskId::push_place, TaskId::peg_insert, TaskId::highdim_grasp}) {
      const auto& c = task_constants(task);
      const auto od = static_cast<std::size_t>(c.obs_dim), ad = static_cast<std::size_t>(c.act_dim);
      for (const std::vector<std::size_t>& h : {std::vector<std::size_t>{64, 64}, std::vector<std::size_t>{256, 256}}) {
        specs.push_back({od, h, 2 * ad, Activation::relu});
        specs.push_back({od + ad, h, 1, Activation::relu});
      }
      specs.push_back(default_bc_spec(c.obs_dim, c.act_dim));
    }
    double worst = 0.0;
    bool ok = true;
    std::uint64_t seed = 1;
    for (const auto& s : specs) {
      const GradCheckReport r = grad_check(s, seed++, 1e-4);
      worst = std::max(worst, r.max_rel_error);
      ok = ok && r.passed;
    }
    return {ok && worst < 1e-4, std::to_string(specs.size()) + " specs, max relative error " + fmt(worst)};
  }

  Verdict a2() {
    const BufferStore r = tagged(50, SourceTag::replay), s = tagged(40, SourceTag::sim_demo),
                      d = tagged(30, SourceTag::real_demo), empty(10);
    Rng rng(2);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
      const Batch b = sample_stratified(r, s, d, 256, {0.5, 0.25, 0.25}, rng);
      std::array<int, 3> n{0, 0, 0};
      for (SourceTag t : b.source) ++n[static_cast<int>(t)];
      bad += n != std::array<int, 3>{128, 64, 64};
    }
    for (int i = 0; i < 1000; ++i) {
      const Batch b = sample_stratified(r, s, empty, 240, {0.5, 0.25, 0.25}, rng);
      std::array<int, 3> n{0, 0, 0};
      for (SourceTag t : b.source) ++n[static_cast<int>(t)];
      bad += n != std::array<int, 3>{160, 80, 0};
    }
    return {bad == 0, "2000 draws, " + std::to_string(bad) + " off-composition"};
  }

  Verdict a3() {
    int cells = 0, bad = 0;
    double worst_z = 0.0;
    for (double q_rl : {-1.0, 0.0, 1.0})
      for (double q_bc : {-1.0, 0.0, 1.0})
        for (double beta : {0.0, 1.0, 50.0}) {
          const Bandit b = bandit(0.5 * q_rl, 0.5 * q_bc, 2.0);
          Rng rng(1000 + cells++);
          const int n = 10000;
          int hits = 0;
          double p = 0.0;
          for (int i = 0; i < n; ++i) {
            const ProposalDecision d = propose(Vec::Zero(1), b.actor, b.bc, b.critics, {beta, false}, rng);
            hits += d.source == ProposalSource::bc;
            p = logistic(beta * (d.q_bc - d.q_rl));
          }
          const double se = std::sqrt(p * (1 - p) / n);
          const double diff = std::abs(hits / double(n) - p);
          if (se > 0) worst_z = std::max(worst_z, diff / se);
          if (se > 0 ? diff > 3 * se : diff != 0.0) ++bad;
        }
    const bool half = bc_probability(0.7, -0.2, {0.0, false}) == 0.5;
    const Beta inf{kInf, true};
    bool det = bc_probability(0.3, 0.1, inf) == 0.0 && bc_probability(0.1, 0.3, inf) == 1.0 &&
               bc_probability(0.2, 0.2, inf) == 0.0;
    const Bandit b = bandit(0.1, 0.6, 1.0);
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) det = det && propose(Vec::Zero(1), b.actor, b.bc, b.critics, inf, rng).source == ProposalSource::bc;
    return {bad == 0 && half && det, std::to_string(cells) + " cells, worst |z| " + fmt(worst_z) + ", beta=0 -> 0.5 " +
                                         (half ? "yes" : "no") + ", argmax deterministic " + (det ? "yes" : "no")};
  }

  Verdict a4() {
    Rng data(4);
    SacHypers h;
    h.actor_hidden = {64, 64};
    h.critic_hidden = {64, 64};
    const SacLearner l = make_learner(5, 3, h, 11);
    BcPolicy bc;
    bc.spec = default_bc_spec(5, 3);
    bc.params = init_mlp(bc.spec, 12);
    int dominance = 0, terminal = 0, minimum = 0;
    for (int i = 0; i < 100; ++i) {
      const Batch b = random_batch(5, 3, 64, data);
      Rng r1(500 + i), r2(500 + i);
      const Vec ys = td_target_standard(b, l.actor, l.critics, l.alpha, l.hypers, r1, {false, nullptr});
      const Vec yp = td_target_proposal(b, l.actor, bc, l.critics, l.alpha, l.hypers, r2, {false, nullptr});
      for (Eigen::Index j = 0; j < b.size(); ++j) {
        dominance += yp[j] < ys[j];
        if (b.terminated[j] > 0.5) terminal += ys[j] != b.reward[j] || yp[j] != b.reward[j];
      }
      Vec q(10);
      std::normal_distribution<double> n01;
      for (int k = 0; k < 10; ++k) q[k] = n01(data);
      minimum += subsampled_min(q, 2, data) < q.minCoeff();
    }
    return {dominance + terminal + minimum == 0, "100 batches: " + std::to_string(dominance) + " dominance, " +
                                                     std::to_string(terminal) + " terminal, " + std::to_string(minimum) +
                                                     " min violations"};
  }

  Verdict a5() {
    TrainConfig c = desk_config();
    c.run.budget = 1500;
    auto inputs = [&] {
      const auto& k = task_constants(c.task);
      RunInputs in;
      TwinEnv sim = make_env(c.task, Variant::sim, {}, 1);
      TwinEnv real = make_env(c.task, Variant::real, c.gap.resolve(c.task, c.seed), 2);
      for (auto [env, tag, dst] : {std::tuple{&sim, SourceTag::sim_demo, &in.d_sim}, std::tuple{&real, SourceTag::real_demo, &in.d_real}}) {
        const DemoSet d = collect_oracle_demos(*env, 10, 3);
        for (std::size_t i = 0; i < d.buffer.size(); ++i) {
          Transition t = d.buffer.at(i);
          t.source = tag;
          dst->push(t);
        }
      }
      in.bc = bc_train(in.d_sim, default_bc_spec(k.obs_dim, k.act_dim), 50, 4);
      return in;
    };
    const RunResult a = run_training(c, inputs()), b = run_training(c, inputs());
    const bool same = metrics_csv(a.rows) == metrics_csv(b.rows) && a.final_checkpoint.encode() == b.final_checkpoint.encode();
    RunState half(c, inputs());
    advance(half, 700);
    RunState resumed = load_run(c, Checkpoint::decode(save_run(half).encode()));
    advance(resumed, c.run.budget);
    const bool resume = metrics_csv(resumed.rows) == metrics_csv(a.rows) && save_run(resumed).encode() == a.final_checkpoint.encode();
    const RunInputs in = inputs();
    const std::string path = (out_ / "a5_roundtrip.sldm").string();
    save_demos(in.d_real, path);
    const BufferStore back = load_demos(path);
    bool demo = back.size() == in.d_real.size() && encode_demos(back) == encode_demos(in.d_real);
    for (std::size_t i = 0; demo && i < back.size(); ++i) demo = back.at(i) == in.d_real.at(i);
    std::filesystem::remove(path);
    return {same && resume && demo, std::string("metrics bitwise ") + (same ? "yes" : "no") + ", resume equal " +
                                        (resume ? "yes" : "no") + ", SLDM round trip " + (demo ? "yes" : "no")};
  }

  Verdict a6() {
    const TrainConfig base = desk_config();
    const auto& d = base.demos;
    std::vector<double> pre, bc_sim;
    bool demos_ok = true;
    for (auto seed : seeds_) {
      auto& cache = runner_.inputs();
      pre.push_back(cache.state_policy(base.task, seed, d.pretrain_budget).final_success);
      const DemoSet& ds = cache.sim_demos(base.task, seed, d.pretrain_budget, d.n_sim, DemoMode::success_only, seed_stream::sim_demos);
      demos_ok = demos_ok && ds.trajectories.size() == 100 &&
                 std::all_of(ds.trajectories.begin(), ds.trajectories.end(), [](const Trajectory& t) { return t.success; });
      const BcPolicy& bc = cache.sim_bc(base.task, seed, d.pretrain_budget, d.n_bc, d.bc_steps);
      TwinEnv sim = make_env(base.task, Variant::sim, GapConfig::identity(), derive_seed(seed, seed_stream::eval_env));
      bc_sim.push_back(evaluate(bc_action_fn(bc), sim, 50, derive_seed(seed, seed_stream::eval)));
    }
    const bool ok = median_of(pre) >= 0.9 && d.pretrain_budget <= 60000 && demos_ok && median_of(bc_sim) >= 0.7;
    return {ok, "pretrain success " + list(pre) + " within " + std::to_string(d.pretrain_budget) + " steps, 100 successful demos " +
                    (demos_ok ? "yes" : "no") + ", BC(200) sim success " + list(bc_sim)};
  }

  Verdict a7() {
    const StudyReport rep = study(StudyKind::bc_scaling);
    std::string detail = "real success by demo count:";
    for (const auto& r : rep.bc_rows) detail += " " + std::to_string(r.demos) + "=" + list(r.real_success);
    return {rep.scalars.at("real_trend_nondecreasing") == 1.0, detail};
  }

  Verdict a8() {
    const StudyReport& rep = study(StudyKind::baselines);
    const auto at_end = [&](const RunResult& r) { return running_success_at(r.rows, desk_config().run.budget); };
    const auto ours = per_seed(curve(rep, "ours"), at_end), ibrl = per_seed(curve(rep, "ibrl"), at_end),
               rlpd = per_seed(curve(rep, "rlpd"), at_end);
    const double o = median_of(ours), i = median_of(ibrl), r = median_of(rlpd);
    const bool ok = o >= i && i >= r && o >= 0.9 && o - r >= 0.1 - 1e-12;
    return {ok, "median final running success ours " + fmt(o) + " " + list(ours) + ", ibrl " + fmt(i) + " " + list(ibrl) +
                    ", rlpd " + fmt(r) + " " + list(rlpd)};
  }

  Verdict a9() {
    const StudyReport& rep = study(StudyKind::ablations);
    const CurveResult& ours = curve(rep, "ours");
    bool ok = true;
    std::string detail = "ours first 0.9 at " + list(per_seed(ours, [](const RunResult& r) { return steps_to(r, 0.9); })) + ";";
    for (const char* name : {"ours_no_sim_demo", "ours_no_real_demo", "ours_no_ap"}) {
      const CurveResult& abl = curve(rep, name);
      std::vector<double> margins;
      for (std::size_t s = 0; s < ours.runs.size(); ++s) {
        const RunResult& o = *ours.runs[s].result;
        const RunResult& a = *abl.runs[s].result;
        const auto t = first_step_reaching(o.rows, 0.9);
        if (!t) {
          margins.push_back(-kInf);  // ours never reached 0.9: no comparison point, counted against
          continue;
        }
        const auto ta = first_step_reaching(a.rows, 0.9);
        margins.push_back(ta && *ta <= *t ? running_success_at(o.rows, *t) - running_success_at(a.rows, *t) : kInf);
      }
      const double m = median_of(margins);
      ok = ok && m >= 0.05 - 1e-12;
      detail += " " + std::string(name) + " margin " + list(margins);
    }
    return {ok, detail + " (inf: not yet at 0.9)"};
  }

  Verdict a10() {
    const StudyReport& rep = study(StudyKind::sim_demo_bootstrap);
    const auto steps = [](const RunResult& r) { return steps_to(r, 0.9); };
    const auto final = [&](const RunResult& r) { return running_success_at(r.rows, desk_config().run.budget); };
    const auto s100 = per_seed(curve(rep, "rlpd_sim100"), steps), s20 = per_seed(curve(rep, "rlpd_sim20"), steps),
               r20 = per_seed(curve(rep, "rlpd_real20"), steps);
    const double m100 = median_of(s100), m20 = median_of(s20), mr = median_of(r20);
    const bool first = std::isfinite(m100) && m100 <= 1.1 * mr;
    bool second;
    std::string tie;
    if (std::isinf(m20) && std::isinf(mr)) {
      const double f20 = median_of(per_seed(curve(rep, "rlpd_sim20"), final));
      const double fr = median_of(per_seed(curve(rep, "rlpd_real20"), final));
      second = f20 <= fr;
      tie = ", neither 20-demo run reached 0.9: final success sim20 " + fmt(f20) + " vs real20 " + fmt(fr);
    } else {
      second = m20 >= mr;
    }
    return {first && second, "median steps to 0.9: sim100 " + fmt(m100) + " " + list(s100) + ", real20 " + fmt(mr) + " " +
                                 list(r20) + ", sim20 " + fmt(m20) + " " + list(s20) + tie};
  }

  Verdict a11() {
    const StudyReport& rep = study(StudyKind::hybrid_vs_success);
    const double ch = rep.scalars.at("coverage_hybrid_median"), cs = rep.scalars.at("coverage_success_only_median");
    const auto steps = [](const RunResult& r) { return steps_to(r, 0.9); };
    const auto h = per_seed(curve(rep, "ours_hybrid"), steps), s = per_seed(curve(rep, "ours_success_only"), steps);
    const double mh = median_of(h), ms = median_of(s);
    const bool ok = ch >= cs && std::isfinite(mh) && mh <= 1.1 * ms;
    return {ok, "coverage cells hybrid " + fmt(ch) + " vs success-only " + fmt(cs) + " (min per-seed margin " +
                    fmt(rep.scalars.at("coverage_hybrid_min_margin")) + "), median steps to 0.9 hybrid " + fmt(mh) + " " +
                    list(h) + " vs success-only " + fmt(ms) + " " + list(s)};
  }

  Verdict a12() {
    const StudyReport& rep = study(StudyKind::baselines);
    int runs = 0, bad = 0;
    std::int64_t appends = 0;
    for (const auto& c : rep.curves)
      for (const auto& sr : c.runs) {
        ++runs;
        const RunResult& r = *sr.result;
        const bool append = preset_traits(c.config.method).append_success;
        std::int64_t wins = 0, len = 0;
        for (const auto& row : r.rows)
          if (row.episode_return > 0) {
            ++wins;
            len += row.length;
          }
        const auto& k = r.counters;
        const bool ok = k.d_real_violations == 0 && k.d_real_appends == (append ? wins : 0) &&
                        k.d_real_growth == (append ? len : 0);
        bad += !ok;
        appends += k.d_real_appends;
      }
    return {bad == 0, std::to_string(runs) + " runs, " + std::to_string(appends) + " appends, " + std::to_string(bad) +
                          " runs with bookkeeping mismatches"};
  }

 private:
  const StudyReport& study(StudyKind kind) {
    auto it = studies_.find(kind);
    if (it == studies_.end()) {
      std::cerr << "running study " << to_string(kind) << "\n";
      it = studies_.emplace(kind, runner_.run_study(kind, seeds_, desk_config())).first;
      write_study(it->second, out_ / to_string(kind));
    }
    return it->second;
  }

  std::vector<std::uint64_t> seeds_;
  std::filesystem::path out_;
  StudyRunner runner_;
  std::map<StudyKind, StudyReport> studies_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks A1-A12."};
  std::string out = "acceptance_runs";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<std::string> only;
  app.add_option("--out", out, "directory for study outputs and the report");
  app.add_option("--seeds", seeds, "seeds for the multi-seed criteria")->delimiter(',');
  app.add_option("--only", only, "subset of criteria, e.g. A1,A4")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out);
  Acceptance acc(seeds, out);
  const std::vector<std::pair<std::string, Verdict (Acceptance::*)()>> criteria{
      {"A1", &Acceptance::a1},  {"A2", &Acceptance::a2},   {"A3", &Acceptance::a3},   {"A4", &Acceptance::a4},
      {"A5", &Acceptance::a5},  {"A6", &Acceptance::a6},   {"A7", &Acceptance::a7},   {"A8", &Acceptance::a8},
      {"A9", &Acceptance::a9},  {"A10", &Acceptance::a10}, {"A11", &Acceptance::a11}, {"A12", &Acceptance::a12}};
  std::string report;
  int failures = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = (acc.*fn)();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const std::string line = id + " " + (v.pass ? "PASS" : "FAIL") + " " + v.detail + " (" + fmt(s) + " s)";
    std::cout << line << std::endl;
    report += line + "\n";
    failures += !v.pass;
  }
  detail::write_file((std::filesystem::path(out) / "acceptance.txt").string(), report);
  return failures == 0 ? 0 : 1;
}
