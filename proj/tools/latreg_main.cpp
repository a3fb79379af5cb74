#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "latreg/experiment.hpp"

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Flat key=value file; '#' starts a comment.  Applied before flag parsing so
// command-line flags override file settings.
void load_config_file(const std::string& path, latreg::ExperimentConfig& config,
                      bool& diagnostics) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "case") {
        config.experiment_case = value;
      } else if (key == "n_blocks") {
        config.n_blocks = std::stoi(value);
      } else if (key == "a_star") {
        config.a_star = std::stod(value);
      } else if (key == "N_a") {
        config.n_a = std::stoi(value);
      } else if (key == "N_f") {
        config.n_f = std::stoi(value);
      } else if (key == "iterations") {
        config.iterations = std::stoi(value);
      } else if (key == "lambda_constant") {
        config.lambda_c = std::stod(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "replicates") {
        config.replicates = std::stoi(value);
      } else if (key == "out_dir") {
        config.out_dir = value;
      } else if (key == "diagnostics") {
        diagnostics = value == "1" || value == "true";
      } else {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": unknown key " + key);
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad value for " + key);
    } catch (const std::out_of_range&) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": value out of range for " + key);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  latreg::ExperimentConfig config;
  bool diagnostics = false;

  try {
    // Pre-scan for --config so file values become the defaults.
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        load_config_file(argv[i + 1], config, diagnostics);
      } else if (arg.rfind("--config=", 0) == 0) {
        load_config_file(arg.substr(9), config, diagnostics);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"Hidden-state curve and dependence-scale estimation from noisy blocks"};
  std::string config_path;
  app.add_option("--config", config_path, "key=value config file (flags override it)");
  app.add_option("--case", config.experiment_case,
                 "experiment case: b1_known_nu or b2_full");
  app.add_option("--n-blocks", config.n_blocks, "number of observation blocks");
  app.add_option("--a-star", config.a_star, "true dependence scale of the simulated chain");
  app.add_option("--n-a", config.n_a, "particles for the scale update");
  app.add_option("--n-f", config.n_f, "particles for the curve update");
  app.add_option("--iterations", config.iterations, "EM iterations");
  app.add_option("--lambda-c", config.lambda_c, "penalty constant c in c*log(n)*sqrt(n)");
  app.add_option("--seed", config.seed, "master RNG seed");
  app.add_option("--replicates", config.replicates, "independent replicates");
  app.add_option("--out-dir", config.out_dir, "output directory for CSV and curve files");
  app.add_flag("--diagnostics", diagnostics,
               "run model diagnostics (mixing decay, density bounds, tail check) instead");
  CLI11_PARSE(app, argc, argv);

  try {
    if (diagnostics) {
      latreg::run_diagnostics(config.out_dir, config.seed);
      std::cout << "diagnostics written to " << config.out_dir << "\n";
    } else {
      const latreg::ExperimentResult result = latreg::run_experiment(config);
      std::cout << "case " << config.experiment_case << ": " << result.replicates.size()
                << " replicate(s), summary " << result.summary_file.string() << "\n";
      for (std::size_t r = 0; r < result.replicates.size(); ++r) {
        const auto& rep = result.replicates[r];
        std::cout << "  rep " << r << ": a_hat " << rep.a_hat << ", l2 " << rep.l2_err_total
                  << ", hausdorff " << rep.hausdorff << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
