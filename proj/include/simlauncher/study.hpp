// Multi-seed experiment matrices, aggregation, CSV curves and SVG learning-curve plots.
#pragma once

#include "simlauncher/config.hpp"

#include <filesystem>
#include <sstream>

namespace simlauncher {

enum class StudyKind { baselines, ablations, bc_scaling, sim_demo_bootstrap, hybrid_vs_success };

inline const char* to_string(StudyKind k) {
  switch (k) {
    case StudyKind::baselines: return "baselines";
    case StudyKind::ablations: return "ablations";
    case StudyKind::bc_scaling: return "bc_scaling";
    case StudyKind::sim_demo_bootstrap: return "sim_demo_bootstrap";
    case StudyKind::hybrid_vs_success: return "hybrid_vs_success";
  }
  return "?";
}

inline StudyKind parse_study(std::string_view s) {
  for (auto k : {StudyKind::baselines, StudyKind::ablations, StudyKind::bc_scaling, StudyKind::sim_demo_bootstrap,
                 StudyKind::hybrid_vs_success})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown study '" + std::string(s) + "'");
}

struct CurveSpec {
  std::string name;
  TrainConfig config;  // seed is overwritten per run
};

inline std::vector<CurveSpec> study_curves(StudyKind kind, const TrainConfig& base) {
  auto with = [&](MethodPreset m) {
    TrainConfig c = base;
    c.method = m;
    return c;
  };
  std::vector<CurveSpec> out;
  switch (kind) {
    case StudyKind::baselines:
      for (auto m : {MethodPreset::ours, MethodPreset::ibrl, MethodPreset::rlpd}) out.push_back({to_string(m), with(m)});
      break;
    case StudyKind::ablations:
      for (auto m : {MethodPreset::ours, MethodPreset::ours_no_sim_demo, MethodPreset::ours_no_real_demo,
                     MethodPreset::ours_no_ap})
        out.push_back({to_string(m), with(m)});
      break;
    case StudyKind::sim_demo_bootstrap: {
      auto rlpd = [&](BaselineSource src, int n) {
        TrainConfig c = with(MethodPreset::rlpd);
        c.demos.baseline_source = src;
        c.demos.baseline_n = n;
        return c;
      };
      out.push_back({"rlpd_sim100", rlpd(BaselineSource::sim_policy, 100)});
      out.push_back({"rlpd_sim20", rlpd(BaselineSource::sim_policy, 20)});
      out.push_back({"rlpd_real20", rlpd(BaselineSource::real_oracle, 20)});
      break;
    }
    case StudyKind::hybrid_vs_success: {
      TrainConfig s = with(MethodPreset::ours), h = with(MethodPreset::ours);
      s.demos.sim_mode = DemoMode::success_only;
      h.demos.sim_mode = DemoMode::hybrid;
      out.push_back({"ours_success_only", s});
      out.push_back({"ours_hybrid", h});
      break;
    }
    case StudyKind::bc_scaling: break;
  }
  return out;
}

struct SeedRun {
  std::uint64_t seed = 0;
  std::shared_ptr<const RunResult> result;
};

struct CurveResult {
  std::string name;
  TrainConfig config;
  std::vector<SeedRun> runs;
  std::vector<std::int64_t> grid;
  std::vector<double> mean;
  std::vector<double> sd;
};

inline constexpr std::array<int, 3> kBcScalingCounts{10, 50, 200};

struct BcScalingRow {
  int demos = 0;
  std::vector<double> real_success;  // one per seed
  std::vector<double> sim_success;
};

struct StudyReport {
  StudyKind kind = StudyKind::baselines;
  std::vector<std::uint64_t> seeds;
  std::vector<CurveResult> curves;
  std::vector<BcScalingRow> bc_rows;
  std::map<std::string, double> scalars;
};

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); zero for a single value.
inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Mean is nondecreasing in demo count up to one pooled standard deviation per consecutive pair.
inline bool bc_trend_nondecreasing(const std::vector<std::vector<double>>& per_count) {
  for (std::size_t i = 1; i < per_count.size(); ++i) {
    const double a = sd_of(per_count[i - 1]), b = sd_of(per_count[i]);
    const double pooled = std::sqrt(0.5 * (a * a + b * b));
    if (mean_of(per_count[i]) < mean_of(per_count[i - 1]) - pooled) return false;
  }
  return true;
}

/// Runs configurations once and memoizes them by canonical config text, so overlapping studies share runs.
class StudyRunner {
 public:
  using Progress = std::function<void(const std::string&)>;

  explicit StudyRunner(Progress progress = {}) : progress_(std::move(progress)) {}

  InputCache& inputs() { return inputs_; }

  std::shared_ptr<const RunResult> run(const TrainConfig& cfg) {
    const std::string key = serialize_config(cfg);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    auto res = std::make_shared<const RunResult>(run_training(cfg, build_inputs(cfg, inputs_)));
    if (progress_) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      progress_(std::string(to_string(cfg.method)) + " seed " + std::to_string(cfg.seed) + " done in " +
                format_double(std::round(s * 10) / 10) + " s, final running success " +
                format_double(res->rows.empty() ? 0.0 : res->rows.back().running_success));
    }
    runs_.emplace(key, res);
    return res;
  }

  StudyReport run_study(StudyKind kind, const std::vector<std::uint64_t>& seeds, const TrainConfig& base,
                        std::int64_t grid_step = 500) {
    if (seeds.empty()) throw std::invalid_argument("run_study: seeds must be nonempty");
    StudyReport rep;
    rep.kind = kind;
    rep.seeds = seeds;
    if (kind == StudyKind::bc_scaling) {
      run_bc_scaling(rep, base);
      return rep;
    }
    for (const auto& spec : study_curves(kind, base)) {
      CurveResult c;
      c.name = spec.name;
      c.config = spec.config;
      for (auto seed : seeds) {
        TrainConfig cfg = spec.config;
        cfg.seed = seed;
        c.runs.push_back({seed, run(cfg)});
      }
      for (std::int64_t t = grid_step; t <= base.run.budget; t += grid_step) {
        std::vector<double> v;
        for (const auto& r : c.runs) v.push_back(running_success_at(r.result->rows, t));
        c.grid.push_back(t);
        c.mean.push_back(mean_of(v));
        c.sd.push_back(sd_of(v));
      }
      rep.curves.push_back(std::move(c));
    }
    if (kind == StudyKind::hybrid_vs_success) add_coverage(rep, base);
    return rep;
  }

 private:
  void run_bc_scaling(StudyReport& rep, const TrainConfig& base) {
    for (int n : kBcScalingCounts) {
      BcScalingRow row;
      row.demos = n;
      for (auto seed : rep.seeds) {
        const BcPolicy& bc = inputs_.sim_bc(base.task, seed, base.demos.pretrain_budget, n, base.demos.bc_steps);
        TwinEnv real = make_env(base.task, Variant::real, base.gap.resolve(base.task, seed),
                                derive_seed(seed, seed_stream::eval_env));
        TwinEnv sim = make_env(base.task, Variant::sim, GapConfig::identity(), derive_seed(seed, seed_stream::eval_env));
        row.real_success.push_back(evaluate(bc_action_fn(bc), real, 50, derive_seed(seed, seed_stream::eval)));
        row.sim_success.push_back(evaluate(bc_action_fn(bc), sim, 50, derive_seed(seed, seed_stream::eval)));
      }
      if (progress_)
        progress_("bc_scaling " + std::to_string(n) + " demos: real " + format_double(mean_of(row.real_success)) +
                  ", sim " + format_double(mean_of(row.sim_success)));
      rep.bc_rows.push_back(std::move(row));
    }
    std::vector<std::vector<double>> real, sim;
    for (const auto& r : rep.bc_rows) {
      real.push_back(r.real_success);
      sim.push_back(r.sim_success);
    }
    rep.scalars["real_trend_nondecreasing"] = bc_trend_nondecreasing(real) ? 1.0 : 0.0;
    rep.scalars["sim_trend_nondecreasing"] = bc_trend_nondecreasing(sim) ? 1.0 : 0.0;
  }

  /// Object-cell coverage of equal-size (in transitions) hybrid and success-only D_sim buffers.
  void add_coverage(StudyReport& rep, const TrainConfig& base) {
    std::vector<double> hyb, suc;
    for (auto seed : rep.seeds) {
      const auto& d = base.demos;
      const DemoSet& s =
          inputs_.sim_demos(base.task, seed, d.pretrain_budget, d.n_sim, DemoMode::success_only, seed_stream::sim_demos);
      const DemoSet& h =
          inputs_.sim_demos(base.task, seed, d.pretrain_budget, d.n_sim, DemoMode::hybrid, seed_stream::sim_demos);
      const std::size_t n = std::min(s.buffer.size(), h.buffer.size());
      auto prefix = [n](const BufferStore& b) {
        BufferStore out(std::max<std::size_t>(1, n));
        for (std::size_t i = 0; i < n; ++i) out.push(b.at(i));
        return out;
      };
      hyb.push_back(object_coverage_cells(prefix(h.buffer), base.task));
      suc.push_back(object_coverage_cells(prefix(s.buffer), base.task));
    }
    rep.scalars["coverage_hybrid_median"] = median_of(hyb);
    rep.scalars["coverage_success_only_median"] = median_of(suc);
    rep.scalars["coverage_hybrid_min_margin"] = [&] {
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < hyb.size(); ++i) m = std::min(m, hyb[i] - suc[i]);
      return m;
    }();
  }

  InputCache inputs_;
  std::map<std::string, std::shared_ptr<const RunResult>> runs_;
  Progress progress_;
};

// ---------------------------------------------------------------------------
// Output

inline std::string curve_csv(const CurveResult& c) {
  std::string o = "env_step,mean,std";
  for (const auto& r : c.runs) o += ",seed_" + std::to_string(r.seed);
  o += "\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    o += std::to_string(c.grid[i]) + "," + format_double(c.mean[i]) + "," + format_double(c.sd[i]);
    for (const auto& r : c.runs) o += "," + format_double(running_success_at(r.result->rows, c.grid[i]));
    o += "\n";
  }
  return o;
}

inline std::string bc_scaling_csv(const StudyReport& rep) {
  std::string o = "demos,variant,mean,std";
  for (auto s : rep.seeds) o += ",seed_" + std::to_string(s);
  o += "\n";
  for (const auto& r : rep.bc_rows) {
    for (const auto& [name, v] : {std::pair{"real", &r.real_success}, std::pair{"sim", &r.sim_success}}) {
      o += std::to_string(r.demos) + "," + name + "," + format_double(mean_of(*v)) + "," + format_double(sd_of(*v));
      for (double x : *v) o += "," + format_double(x);
      o += "\n";
    }
  }
  return o;
}

struct PlotSeries {
  std::string name;
  std::vector<double> x, y, sd;
};

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    switch (ch) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += ch;
    }
  }
  return o;
}

/// Line chart with a +-1 sd band per series; y axis fixed to [0, 1].
inline std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<PlotSeries>& series) {
  const double W = 720, H = 440, L = 70, R = 190, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  for (const auto& s : series)
    for (double x : s.x) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + (1.0 - std::clamp(y, 0.0, 1.0)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << L + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    o << "<line x1=\"" << L << "\" y1=\"" << py(y) << "\" x2=\"" << L + pw << "\" y2=\"" << py(y)
      << "\" stroke=\"#e0e0e0\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">" << format_double(y) << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double x = xmin + (xmax - xmin) * i / 5.0;
    o << "<text x=\"" << px(x) << "\" y=\"" << T + ph + 18 << "\" text-anchor=\"middle\">"
      << format_double(std::round(x * 100) / 100) << "</text>\n";
  }
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  o << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">" << xml_escape(xlabel)
    << "</text>\n";
  o << "<text transform=\"translate(18," << T + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(ylabel)
    << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 6];
    if (!s.sd.empty() && s.sd.size() == s.y.size() && !s.x.empty()) {
      o << "<polygon fill=\"" << col << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << "," << py(s.y[i] + s.sd[i]) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;) o << px(s.x[i]) << "," << py(s.y[i] - s.sd[i]) << " ";
      o << "\"/>\n";
    }
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << "," << py(s.y[i]) << " ";
    o << "\"/>\n";
    const double ly = T + 14 + 20.0 * static_cast<double>(k);
    o << "<line x1=\"" << L + pw + 14 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 38 << "\" y2=\"" << ly
      << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << L + pw + 44 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string study_svg(const StudyReport& rep) {
  std::vector<PlotSeries> series;
  if (rep.kind == StudyKind::bc_scaling) {
    for (const char* variant : {"real", "sim"}) {
      PlotSeries s;
      s.name = std::string("BC ") + variant;
      for (const auto& r : rep.bc_rows) {
        const auto& v = std::string(variant) == "real" ? r.real_success : r.sim_success;
        s.x.push_back(std::log10(static_cast<double>(r.demos)));
        s.y.push_back(mean_of(v));
        s.sd.push_back(sd_of(v));
      }
      series.push_back(std::move(s));
    }
    return render_svg("bc_scaling", "log10(demo trajectories)", "success rate", series);
  }
  for (const auto& c : rep.curves) {
    PlotSeries s;
    s.name = c.name;
    for (std::size_t i = 0; i < c.grid.size(); ++i) {
      s.x.push_back(static_cast<double>(c.grid[i]));
      s.y.push_back(c.mean[i]);
      s.sd.push_back(c.sd[i]);
    }
    series.push_back(std::move(s));
  }
  return render_svg(to_string(rep.kind), "env steps", "running success (last 20 episodes)", series);
}

/// Emits curve CSVs, per-run metrics, the plot, and returns the list of written paths (relative).
inline std::vector<std::string> write_study(const StudyReport& rep, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& rel, const std::string& text) {
    fs::create_directories((dir / rel).parent_path());
    detail::write_file((dir / rel).string(), text);
    written.push_back(rel);
  };
  const std::string name = to_string(rep.kind);
  if (rep.kind == StudyKind::bc_scaling) {
    emit(name + ".csv", bc_scaling_csv(rep));
  } else {
    for (const auto& c : rep.curves) {
      emit("curve_" + c.name + ".csv", curve_csv(c));
      for (const auto& r : c.runs) emit("runs/" + c.name + "_seed" + std::to_string(r.seed) + ".csv", metrics_csv(r.result->rows));
    }
  }
  emit(name + ".svg", study_svg(rep));
  if (!rep.scalars.empty()) {
    std::string s = "name,value\n";
    for (const auto& [k, v] : rep.scalars) s += k + "," + format_double(v) + "\n";
    emit("summary.csv", s);
  }
  return written;
}

}  // namespace simlauncher
