#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace latreg {

/// One estimation study: independent replicates of simulate-then-fit at a
/// fixed size, with per-iteration error traces and a quartile summary.
/// Cases: "b1_known_nu" fits single-observation blocks with the latent draw
/// treated as uniform; "b2_full" fits paired blocks and estimates the
/// dependence scale alongside the curve.
struct ExperimentConfig {
  std::string experiment_case = "b2_full";
  int n_blocks = 50;
  double a_star = 1.0;
  int n_a = 200;
  int n_f = 200;
  int iterations = 100;
  double lambda_c = 1.0;
  std::uint64_t seed = 0;
  int replicates = 1;
  std::string out_dir = "out";
};

struct ReplicateResult {
  double a_hat;
  double l2_err_total;
  double hausdorff;
  std::filesystem::path trace_file;
  std::filesystem::path spline_file;
};

struct ExperimentResult {
  std::vector<ReplicateResult> replicates;
  std::filesystem::path summary_file;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

/// Writes mixing_decay.csv, h3_bounds.csv, and concentration_tail.csv.
void run_diagnostics(const std::string& out_dir, std::uint64_t seed = 0);

/// Linear-interpolation quantile (the common statistical convention): for
/// p in [0,1], interpolates between order statistics at rank (size-1)*p.
double quantile(std::vector<double> xs, double p);

}  // namespace latreg
