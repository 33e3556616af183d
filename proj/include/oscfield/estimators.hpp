#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "oscfield/covariance.hpp"
#include "oscfield/embedding.hpp"
#include "oscfield/fem.hpp"
#include "oscfield/rng.hpp"

namespace oscfield {

struct QoiSpec {
  enum class Kind { Point, L2Norm };
  Kind kind = Kind::Point;
  double x = 7.0 / 15.0;
  double y = 7.0 / 15.0;
};

double evaluate_qoi(const FeSolution& sol, const QoiSpec& qoi);

struct ProblemSpec {
  CovarianceModel model;
  QoiSpec qoi;
  Forcing forcing = Forcing::Constant;
  double forcing_value = 1.0;
};

/// One MLMC level: grid of width h = 2^-ell * h0, its embedding operator,
/// and the per-level truncation count (0 = no smoothing).
struct LevelPlan {
  int ell = 0;
  double h = 1.0;
  GridSpec grid{2, {1, 1}};
  std::shared_ptr<const EmbeddingOperator> op;           // complete spectrum
  std::shared_ptr<const EmbeddingOperator> op_smoothed;  // truncated copy, null when k_trunc = 0
  std::int64_t k_trunc = 0;
};

struct LevelStats {
  std::int64_t n = 0;
  double mean_y = 0.0, var_y = 0.0;
  double mean_q = 0.0, var_q = 0.0;
  double cost_wall_per_sample = 0.0;   // seconds, measured around per-sample work
  double cost_model_per_sample = 0.0;  // h^{-gamma_model}
  double n_real = 0.0;                 // pre-rounding optimal allocation
};

struct MlmcReport {
  double estimate = 0.0;
  std::vector<LevelStats> levels;
  std::vector<double> level_h;
  double bias_estimate = 0.0;
  double sampling_error = 0.0;
  double total_cost_model = 0.0;
  double total_cost_wall = 0.0;
  bool converged = true;
  std::string message;
};

enum class SmoothingRule { Off, HalfSpectrum, Adaptive };

struct EstimatorOptions {
  std::uint64_t seed = 1;
  int pilot_n = 100;
  int threads = 0;  // 0 = hardware parallelism
  double gamma_model = 2.0;
  double alpha = 1.0;                // weak rate for Richardson and k_ell selection
  double c_alpha = 1.0;              // weak-error constant (MC h selection, model bias)
  double c_ratio = 1.0;              // C_s/(2 C_alpha) (exp) or C_alpha/(2 C_s) (Matern)
  double c_alpha_tilde_ratio = 1.0;  // C~_alpha / C_alpha in the smoothed Richardson form
  SmoothingRule smoothing = SmoothingRule::Off;
  bool smoothing_use_coarse_s = false;  // s_ell of the coarse grid in choose_k_ell
  bool smoothing_lstar_only = false;    // smooth only levels with h >= coarsest_level_bound
  int l_max = 10;
  SolverOptions solver{1e-10, 10, Preconditioner::Multigrid};
};

/// Builds the plan for level ell above mesh width h0, including the embedding
/// operator and the smoothing truncation dictated by `opt`.
LevelPlan make_level_plan(int ell, double h0, const ProblemSpec& problem,
                          const EstimatorOptions& opt);

struct CoupledResult {
  double q_fine = 0.0;
  double q_coarse = 0.0;
  bool has_coarse = false;
  double wall_seconds = 0.0;
};

/**
 * One coupled draw on a level: a single xi from NormalStream(seed, ell, index)
 * underlies the fine and coarse solves. With truncate_fine/truncate_coarse the
 * respective field extraction uses the level's truncated spectrum (the finest
 * MLMC-CES level pairs an untruncated fine sample with a truncated coarse one,
 * which costs a second transform of the same xi).
 */
CoupledResult coupled_sample(const LevelPlan& plan, const GridSpec* coarse_grid,
                             bool truncate_fine, bool truncate_coarse,
                             const ProblemSpec& problem, const EstimatorOptions& opt,
                             std::uint64_t sample_index, SampleWorkspace& ws);

struct LevelDraw {
  double q_fine = 0.0;
  double q_coarse = 0.0;
  double wall = 0.0;
};

/// Draws samples [from, to) on a level in parallel, extending `draws` in
/// place; results are identical for any worker count because sample i always
/// uses NormalStream(seed, ell, i) and lands in slot i.
void run_level_draws(const LevelPlan& plan, const GridSpec* coarse_grid, bool truncate_fine,
                     bool truncate_coarse, const ProblemSpec& problem,
                     const EstimatorOptions& opt, std::int64_t from, std::int64_t to,
                     std::vector<LevelDraw>& draws);

struct DrawStats {
  std::int64_t n = 0;
  double mean_y = 0.0, var_y = 0.0;
  double mean_q = 0.0, var_q = 0.0;
  double mean_wall = 0.0;
};

/// One-pass (Welford) moments of Y = q_fine - q_coarse (or q_fine alone).
DrawStats summarize_draws(const std::vector<LevelDraw>& draws, bool has_coarse);

/**
 * Truncation index for a level: closed form for the separable exponential,
 * bisection (tolerance 0.5) of the implicit Matern rule. Returns 0 with a
 * warning on stderr when the Matern equation has no root in (0, s-1).
 */
std::int64_t choose_k_ell(const CovarianceModel& model, double h, int padding, std::int64_t s,
                          double alpha, double c_ratio, bool use_coarse_s = false);

/// Richardson bias |mean_diff| / |1 - 2^alpha|, or with the extrapolant
/// replaced by a smoothed sample, |mean_diff| / |1 - (C~_a/C_a) 2^alpha|.
double richardson_bias(double mean_diff, double alpha, double c_tilde_over_c = 1.0,
                       bool smoothed_extrapolant = false);

/// Single-level MC with a fixed sample count on the given grid.
MlmcReport mc_estimate_fixed_n(const ProblemSpec& problem, const EstimatorOptions& opt,
                               const GridSpec& grid, std::int64_t n);

/// Single-level MC meeting RMSE eps: h = largest power of two below
/// (eps/(sqrt(2) c_alpha))^{1/alpha}, then N = ceil(2 V^ eps^-2) from a pilot.
MlmcReport mc_estimate(const ProblemSpec& problem, const EstimatorOptions& opt, double eps,
                       std::optional<double> fixed_h = std::nullopt);

/**
 * Adaptive MLMC (or MLMC-CES when opt.smoothing is active): pilots every
 * level, allocates N_ell optimally, extends levels until both the sampling
 * error and the Richardson bias fit in eps^2/2, up to opt.l_max.
 */
MlmcReport mlmc_estimate(const ProblemSpec& problem, const EstimatorOptions& opt, double h0,
                         double eps, int initial_levels = 1);

struct RatePoint {
  double h = 0.0;
  double mean_abs_y = 0.0;
  double var_y = 0.0;
  double cost = 0.0;
};

struct RateFit {
  double alpha = 0.0, c_alpha = 0.0;
  double beta = 0.0, c_beta = 0.0;
  double gamma = 0.0, c_gamma = 0.0;
};

/// Least-squares log-log fits of |E Y|, V[Y] and cost against h. Non-positive
/// points are excluded per series (with a note in *warnings); fewer than
/// three surviving points in a series is an error.
RateFit fit_rates(const std::vector<RatePoint>& data, std::string* warnings = nullptr);

/// Largest mesh width 2^-j resolving the field: h0 <= lambda (exponential)
/// or h0 <= sqrt(8 nu) lambda (Matern).
double coarsest_level_bound(const CovarianceModel& model);

}  // namespace oscfield
