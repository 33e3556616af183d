#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oscfield/estimators.hpp"

namespace oscfield {

inline constexpr const char* kVersion = "0.1.0";

enum class EstimatorKind { MC, MLMC, MLMC_CES };

/**
 * Flat key/value experiment configuration (documented in the README).
 * parse_config(serialize_config(c)) reproduces c exactly; every emitted CSV
 * embeds the config hash so artifacts can be traced back to their inputs.
 */
struct ExperimentConfig {
  CovFamily family = CovFamily::SeparableExponential;
  double sigma2 = 1.0;
  double lambda = 0.3;
  double nu = 1.5;
  double p_norm = 1.0;

  double h0 = 0.25;
  int l_max = 8;
  int initial_levels = 1;

  QoiSpec qoi;

  EstimatorKind estimator = EstimatorKind::MLMC;
  SmoothingRule smoothing = SmoothingRule::Off;
  double c_ratio = 1.0;
  bool use_coarse_s = false;
  bool lstar_only = false;

  std::vector<double> eps_list = {1e-1, 5e-2, 1e-2};
  std::uint64_t seed = 1;

  double solver_tol = 1e-10;
  int solver_max_iter_factor = 10;
  Preconditioner precond = Preconditioner::Multigrid;

  double gamma_model = 2.0;
  double alpha = 1.0;
  double c_alpha = 1.0;
  double c_alpha_tilde_ratio = 1.0;
  int pilot_n = 100;

  int rates_n = 2000;
  int rates_levels = 5;

  int se_n = 500;
  int se_levels = 4;
  std::vector<double> se_fractions = {2.0, 4.0, 8.0};

  int field_m = 128;
  double field_k_fraction = 0.875;

  double mc_h = 0.0;        // 0 = pick h from (eps, alpha, c_alpha)
  std::int64_t mc_n = 0;    // 0 = eps-driven sample count

  CovarianceModel model() const;
  ProblemSpec problem() const;
  EstimatorOptions options(int threads) const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

/// Each command writes one CSV under out_dir and returns its path.
std::string cmd_sample_field(const ExperimentConfig& cfg, const std::string& out_dir,
                             int threads, bool no_timing);
std::string cmd_rates(const ExperimentConfig& cfg, const std::string& out_dir, int threads,
                      bool no_timing);
std::string cmd_estimate(const ExperimentConfig& cfg, const std::string& out_dir, int threads,
                         bool no_timing);
std::string cmd_smoothing_error(const ExperimentConfig& cfg, const std::string& out_dir,
                                int threads, bool no_timing);

/// 17-significant-digit float formatting shared by every CSV writer.
std::string format_float(double v);

}  // namespace oscfield
