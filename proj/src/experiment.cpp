#include "latreg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "latreg/block_density.hpp"
#include "latreg/diagnostics.hpp"
#include "latreg/em.hpp"
#include "latreg/function_types.hpp"
#include "latreg/markov_model.hpp"
#include "latreg/metrics.hpp"
#include "latreg/rng.hpp"
#include "latreg/spline.hpp"

namespace latreg {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct TraceRow {
  int iter;
  double a_hat;
  double penalized_pll;
  double l2_err_total;
  double l2_err_f1;
  double l2_err_f2;
  double hausdorff;
};

constexpr const char* kTraceHeader =
    "iter,a_hat,penalized_pll,l2_err_total,l2_err_f1,l2_err_f2,hausdorff";

void write_trace(const fs::path& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kTraceHeader << "\n";
  for (const TraceRow& r : rows) {
    out << r.iter << ',' << fmt(r.a_hat) << ',' << fmt(r.penalized_pll) << ','
        << fmt(r.l2_err_total) << ',' << fmt(r.l2_err_f1) << ',' << fmt(r.l2_err_f2) << ','
        << fmt(r.hausdorff) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void validate(const ExperimentConfig& config) {
  if (config.experiment_case != "b1_known_nu" && config.experiment_case != "b2_full") {
    throw std::invalid_argument("experiment: unknown case " + config.experiment_case);
  }
  if (config.n_blocks < 2) throw std::invalid_argument("experiment: need at least two blocks");
  if (!(config.a_star > 0.0)) throw std::invalid_argument("experiment: bad true scale");
  if (config.n_a < 1 || config.n_f < 1) throw std::invalid_argument("experiment: bad particle counts");
  if (config.iterations < 1) throw std::invalid_argument("experiment: bad iteration count");
  if (!(config.lambda_c > 0.0)) throw std::invalid_argument("experiment: bad penalty constant");
  if (config.replicates < 1) throw std::invalid_argument("experiment: bad replicate count");
}

/// Removes files written so far if the run aborts part-way.
class OutputSet {
 public:
  void track(const fs::path& p) { paths_.push_back(p); }
  void keep() { paths_.clear(); }
  ~OutputSet() {
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

 private:
  std::vector<fs::path> paths_;
};

}  // namespace

double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: p out of range");
  std::sort(xs.begin(), xs.end());
  const double h = (xs.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= xs.size()) return xs.back();
  const double frac = h - lo;
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const int b = config.experiment_case == "b1_known_nu" ? 1 : 2;
  const TrueModel model{KernelParam{config.a_star}, circle_regression()};
  const RegressionFn f_star = model.f_star;
  const double lambda = penalty_weight(config.n_blocks, config.lambda_c);

  Eigen::VectorXd init_x(2);
  init_x << 0.0, 1.0;
  Eigen::MatrixXd init_y(2, 2);
  init_y << 0.0, 0.0, 1.0, 0.0;
  const SplineFunction f_init = SplineFunction::natural_interpolant(init_x, init_y);

  const fs::path dir(config.out_dir);
  fs::create_directories(dir);
  OutputSet outputs;

  ExperimentResult result;
  std::vector<std::vector<TraceRow>> all_rows(static_cast<std::size_t>(config.replicates));
  const Rng master(config.seed);
  for (int r = 0; r < config.replicates; ++r) {
    const std::uint64_t rep_seed =
        master.fork(stream::kReplicate).fork(static_cast<std::uint64_t>(r)).key();
    const Trajectory traj = simulate(model, b * config.n_blocks, rep_seed);
    const ObservationBlocks obs = make_blocks(traj, b);

    EMConfig em;
    em.b = b;
    em.n_a_particles = config.n_a;
    em.n_f_particles = config.n_f;
    em.lambda = lambda;
    em.iterations = config.iterations;
    em.a_init = b == 2 ? 4.0 : 1.0;
    em.estimate_a = b == 2;
    em.seed = rep_seed;
    em.f_init = f_init;

    std::vector<TraceRow>& rows = all_rows[static_cast<std::size_t>(r)];
    rows.reserve(static_cast<std::size_t>(config.iterations));
    const EMObserver observer = [&](const EMState& state) {
      const IsometryError l2 = l2_error_up_to_isometry(state.f_hat.as_fn(), f_star);
      TraceRow row;
      row.iter = state.iteration;
      row.a_hat = state.trace.back().a_hat;
      row.penalized_pll = state.trace.back().penalized_pll;
      row.l2_err_total = l2.total;
      row.l2_err_f1 = l2.per_component[0];
      row.l2_err_f2 = l2.per_component[1];
      row.hausdorff = hausdorff_image_distance(state.f_hat.as_fn(), f_star);
      rows.push_back(row);
    };
    const EMState final_state = run_em(em, obs, observer);

    char name[64];
    std::snprintf(name, sizeof name, "trace_rep%03d.csv", r);
    const fs::path trace_path = dir / name;
    std::snprintf(name, sizeof name, "spline_rep%03d.txt", r);
    const fs::path spline_path = dir / name;
    outputs.track(trace_path);
    outputs.track(spline_path);
    write_trace(trace_path, rows);
    save_spline(final_state.f_hat, spline_path);

    ReplicateResult rep;
    rep.a_hat = final_state.a_hat;
    rep.l2_err_total = rows.back().l2_err_total;
    rep.hausdorff = rows.back().hausdorff;
    rep.trace_file = trace_path;
    rep.spline_file = spline_path;
    result.replicates.push_back(rep);
  }

  const fs::path summary_path = dir / "summary.csv";
  outputs.track(summary_path);
  std::ofstream out(summary_path);
  if (!out) throw std::runtime_error("cannot write " + summary_path.string());
  const char* quantities[] = {"a_hat",     "penalized_pll", "l2_err_total",
                              "l2_err_f1", "l2_err_f2",     "hausdorff"};
  out << "iter";
  for (const char* q : quantities) {
    out << ',' << q << "_med," << q << "_q25," << q << "_q75";
  }
  out << "\n";
  for (int it = 0; it < config.iterations; ++it) {
    out << (it + 1);
    for (int q = 0; q < 6; ++q) {
      std::vector<double> sample;
      sample.reserve(static_cast<std::size_t>(config.replicates));
      for (int r = 0; r < config.replicates; ++r) {
        const TraceRow& row = all_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(it)];
        const double v[] = {row.a_hat,      row.penalized_pll, row.l2_err_total,
                            row.l2_err_f1,  row.l2_err_f2,     row.hausdorff};
        sample.push_back(v[q]);
      }
      out << ',' << fmt(quantile(sample, 0.5)) << ',' << fmt(quantile(sample, 0.25)) << ','
          << fmt(quantile(sample, 0.75));
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + summary_path.string());
  out.close();

  result.summary_file = summary_path;
  outputs.keep();
  return result;
}

void run_diagnostics(const std::string& out_dir, std::uint64_t seed) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  OutputSet outputs;

  TailCheckConfig tail;
  tail.seed = seed;
  const TailCheckResult res = concentration_tail_check(tail);

  const TrueModel model{KernelParam{tail.a_star}, circle_regression()};
  const Trajectory path = simulate(model, tail.mixing_path_length,
                                   Rng(seed).fork(stream::kTailCheck).fork(0).key());
  std::vector<int> lags(static_cast<std::size_t>(tail.mixing_lags));
  for (int i = 0; i < tail.mixing_lags; ++i) lags[static_cast<std::size_t>(i)] = i + 1;
  const MixingEstimate mix = estimate_mixing_decay(path.states, lags);

  const fs::path mixing_path = dir / "mixing_decay.csv";
  outputs.track(mixing_path);
  {
    std::ofstream out(mixing_path);
    if (!out) throw std::runtime_error("cannot write " + mixing_path.string());
    out << "lag,phi_hat\n";
    for (std::size_t i = 0; i < mix.lags.size(); ++i) {
      out << mix.lags[i] << ',' << fmt(mix.phi_hat[static_cast<Eigen::Index>(i)]) << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + mixing_path.string());
  }

  const fs::path bounds_path = dir / "h3_bounds.csv";
  outputs.track(bounds_path);
  {
    std::ofstream out(bounds_path);
    if (!out) throw std::runtime_error("cannot write " + bounds_path.string());
    out << "a,nu_min,nu_max,q_min,q_max\n";
    for (const StateBounds& row : check_h3_bounds({0.25, 1.0, 4.0})) {
      out << fmt(row.a) << ',' << fmt(row.nu_min) << ',' << fmt(row.nu_max) << ','
          << fmt(row.q_min) << ',' << fmt(row.q_max) << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + bounds_path.string());
  }

  const fs::path tail_path = dir / "concentration_tail.csv";
  outputs.track(tail_path);
  {
    std::ofstream out(tail_path);
    if (!out) throw std::runtime_error("cannot write " + tail_path.string());
    out << "x,radius,empirical,bound,tolerance,within,phi_sum,envelope,mean_sup\n";
    for (const TailCheckRow& row : res.rows) {
      out << fmt(row.x) << ',' << fmt(row.radius) << ',' << fmt(row.empirical) << ','
          << fmt(row.bound) << ',' << fmt(row.tolerance) << ',' << (row.within ? 1 : 0) << ','
          << fmt(res.phi_sum) << ',' << fmt(res.envelope) << ',' << fmt(res.mean_sup) << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + tail_path.string());
  }

  outputs.keep();
}

}  // namespace latreg
