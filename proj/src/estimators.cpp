#include "oscfield/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace oscfield {

double evaluate_qoi(const FeSolution& sol, const QoiSpec& qoi) {
  return qoi.kind == QoiSpec::Kind::Point ? qoi_point(sol, qoi.x, qoi.y) : qoi_l2norm(sol);
}

namespace {

bool is_power_of_two_inverse(double h, int& m_out) {
  if (!(h > 0.0) || h > 1.0) return false;
  const double inv = 1.0 / h;
  const auto m = static_cast<std::int64_t>(std::llround(inv));
  if (std::abs(inv - static_cast<double>(m)) > 1e-9 || m < 1) return false;
  if ((m & (m - 1)) != 0) return false;
  m_out = static_cast<int>(m);
  return true;
}

/// Deterministic parallel map over sample indices [from, to): per-sample
/// results land in a buffer indexed by sample id, so the reduction order is
/// independent of the worker count.
template <typename Fn>
void parallel_samples(std::int64_t from, std::int64_t to, int threads, Fn&& fn) {
  const std::int64_t count = to - from;
  if (count <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min<std::int64_t>(workers, count));
  if (workers == 1) {
    SampleWorkspace ws;
    for (std::int64_t i = from; i < to; ++i) fn(i, ws);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  const std::int64_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = from + w * chunk;
    const std::int64_t hi = std::min(to, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        SampleWorkspace ws;
        for (std::int64_t i = lo; i < hi; ++i) fn(i, ws);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void run_level_samples(const LevelPlan& plan, const GridSpec* coarse_grid, bool truncate_fine,
                       bool truncate_coarse, const ProblemSpec& problem,
                       const EstimatorOptions& opt, std::int64_t from, std::int64_t to,
                       std::vector<Draw>& draws) {
  draws.resize(static_cast<std::size_t>(to));
  parallel_samples(from, to, opt.threads, [&](std::int64_t i, SampleWorkspace& ws) {
    const CoupledResult r = coupled_sample(plan, coarse_grid, truncate_fine, truncate_coarse,
                                           problem, opt, static_cast<std::uint64_t>(i), ws);
    draws[i] = {r.q_fine, r.has_coarse ? r.q_coarse : 0.0, r.wall_seconds};
  });
}

struct Moments {
  std::int64_t n = 0;
  double mean_y = 0.0, var_y = 0.0, mean_q = 0.0, var_q = 0.0, mean_wall = 0.0;
};

Moments moments_of(const std::vector<Draw>& draws, bool has_coarse) {
  Moments m;
  double m2y = 0.0, m2q = 0.0;
  for (const Draw& d : draws) {
    const double y = has_coarse ? d.q_fine - d.q_coarse : d.q_fine;
    ++m.n;
    double delta = y - m.mean_y;
    m.mean_y += delta / m.n;
    m2y += delta * (y - m.mean_y);
    delta = d.q_fine - m.mean_q;
    m.mean_q += delta / m.n;
    m2q += delta * (d.q_fine - m.mean_q);
    m.mean_wall += (d.wall - m.mean_wall) / m.n;
  }
  if (m.n >= 2) {
    m.var_y = m2y / (m.n - 1);
    m.var_q = m2q / (m.n - 1);
  }
  return m;
}

struct LevelState {
  LevelPlan plan;
  GridSpec coarse{2, {1, 1}};
  bool has_coarse = false;
  bool truncate_fine = false;
  bool truncate_coarse = false;
  std::vector<Draw> draws;
  Moments moments;
  double n_real = 0.0;
};

void set_mode(LevelState& st, const EstimatorOptions& opt, bool is_finest) {
  const bool ces = opt.smoothing != SmoothingRule::Off && st.plan.k_trunc > 0;
  const bool new_fine = ces && !is_finest;
  const bool new_coarse = ces;
  if ((new_fine != st.truncate_fine || new_coarse != st.truncate_coarse) && !st.draws.empty())
    st.draws.clear();  // the sampling law on this level changed; redraw
  st.truncate_fine = new_fine;
  st.truncate_coarse = new_coarse;
}

LevelState make_level_state(int ell, double h0, const ProblemSpec& problem,
                            const EstimatorOptions& opt, bool is_finest) {
  LevelState st;
  st.plan = make_level_plan(ell, h0, problem, opt);
  st.has_coarse = ell > 0;
  if (st.has_coarse) st.coarse = GridSpec::square(st.plan.grid.m(0) / 2);
  set_mode(st, opt, is_finest);
  return st;
}

LevelStats stats_of(const LevelState& st, double gamma_model) {
  LevelStats out;
  out.n = st.moments.n;
  out.mean_y = st.moments.mean_y;
  out.var_y = st.moments.var_y;
  out.mean_q = st.moments.mean_q;
  out.var_q = st.moments.var_q;
  out.cost_wall_per_sample = st.moments.mean_wall;
  out.cost_model_per_sample = std::pow(st.plan.h, -gamma_model);
  out.n_real = st.n_real;
  return out;
}

MlmcReport finalize_report(std::vector<LevelState>& states, const EstimatorOptions& opt,
                           double bias, bool converged, std::string message) {
  MlmcReport rep;
  rep.bias_estimate = bias;
  rep.converged = converged;
  rep.message = std::move(message);
  double var_sum = 0.0;
  for (LevelState& st : states) {
    const LevelStats stats = stats_of(st, opt.gamma_model);
    rep.levels.push_back(stats);
    rep.level_h.push_back(st.plan.h);
    rep.estimate += stats.mean_y;
    var_sum += stats.n > 0 ? stats.var_y / stats.n : 0.0;
    rep.total_cost_model += stats.cost_model_per_sample * stats.n;
    rep.total_cost_wall += stats.cost_wall_per_sample * stats.n;
  }
  rep.sampling_error = std::sqrt(var_sum);
  return rep;
}

}  // namespace

LevelPlan make_level_plan(int ell, double h0, const ProblemSpec& problem,
                          const EstimatorOptions& opt) {
  int m0 = 0;
  if (!is_power_of_two_inverse(h0, m0))
    throw ConfigError("make_level_plan: h0 must be a negative power of two");
  if (ell < 0 || ell > 24) throw ConfigError("make_level_plan: level out of range");
  LevelPlan plan;
  plan.ell = ell;
  plan.h = h0 / static_cast<double>(std::int64_t{1} << ell);
  const std::int64_t m = static_cast<std::int64_t>(m0) << ell;
  if (m > (1 << 16)) throw ConfigError("make_level_plan: grid too fine");
  plan.grid = GridSpec::square(static_cast<int>(m));
  plan.op = std::make_shared<EmbeddingOperator>(build_operator(plan.grid, problem.model));

  std::int64_t k = 0;
  if (opt.smoothing != SmoothingRule::Off) {
    const bool resolved = plan.h <= coarsest_level_bound(problem.model) * (1.0 + 1e-12);
    if (!(opt.smoothing_lstar_only && resolved)) {
      if (opt.smoothing == SmoothingRule::HalfSpectrum)
        k = plan.op->s() / 2;
      else
        k = choose_k_ell(problem.model, plan.h, plan.op->padding()[0], plan.op->s(), opt.alpha,
                         opt.c_ratio, opt.smoothing_use_coarse_s);
    }
  }
  k = std::clamp<std::int64_t>(k, 0, plan.op->s() - 1);
  plan.k_trunc = k;
  if (k > 0) plan.op_smoothed = std::make_shared<EmbeddingOperator>(plan.op->truncated(k));
  return plan;
}

CoupledResult coupled_sample(const LevelPlan& plan, const GridSpec* coarse_grid,
                             bool truncate_fine, bool truncate_coarse,
                             const ProblemSpec& problem, const EstimatorOptions& opt,
                             std::uint64_t sample_index, SampleWorkspace& ws) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::int64_t s = plan.op->s();
  ws.xi.resize(s);
  ws.u.resize(s);
  NormalStream stream(opt.seed, static_cast<std::uint32_t>(plan.ell), sample_index);
  stream.fill(ws.xi);

  const EmbeddingOperator* fine_op =
      truncate_fine && plan.op_smoothed ? plan.op_smoothed.get() : plan.op.get();
  fine_op->sample_into(ws.xi, ws, ws.u);

  CoupledResult out;
  {
    DarcyProblem darcy{plan.grid, fine_op->restrict_to(ws.u, plan.grid), problem.forcing,
                       problem.forcing_value};
    out.q_fine = evaluate_qoi(assemble_and_solve(darcy, opt.solver), problem.qoi);
  }
  if (coarse_grid != nullptr) {
    const EmbeddingOperator* coarse_op =
        truncate_coarse && plan.op_smoothed ? plan.op_smoothed.get() : plan.op.get();
    const std::vector<double>* u = &ws.u;
    if (coarse_op != fine_op) {
      ws.u2.resize(s);
      coarse_op->sample_into(ws.xi, ws, ws.u2);  // same xi, truncated spectrum
      u = &ws.u2;
    }
    DarcyProblem darcy{*coarse_grid, coarse_op->restrict_to(*u, *coarse_grid), problem.forcing,
                       problem.forcing_value};
    out.q_coarse = evaluate_qoi(assemble_and_solve(darcy, opt.solver), problem.qoi);
    out.has_coarse = true;
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::int64_t choose_k_ell(const CovarianceModel& model, double h, int padding, std::int64_t s,
                          double alpha, double c_ratio, bool use_coarse_s) {
  if (!(alpha > 0.0)) throw ConfigError("choose_k_ell: alpha must be positive");
  if (!(c_ratio > 0.0)) throw ConfigError("choose_k_ell: c_ratio must be positive");

  if (model.family() == CovFamily::SeparableExponential) {
    const double h_eff = use_coarse_s ? 2.0 * h : h;
    const double s_formula = 4.0 / (h_eff * h_eff);
    const double k_real = std::pow(s_formula, (3.0 - alpha) / 2.0) /
                          (c_ratio + std::pow(s_formula, -(alpha - 1.0) / 2.0));
    return std::clamp<std::int64_t>(std::llround(k_real), 0, s - 1);
  }

  const double h_eff = use_coarse_s ? 2.0 * h : h;
  const double j_eff = use_coarse_s ? 0.5 * padding : padding;
  const double half_width = 1.0 / h_eff + j_eff;
  const double s_m = 4.0 * half_width * half_width;
  const double nu = model.nu();
  const double rhs = c_ratio * std::pow(h_eff, alpha) * half_width;
  auto residual = [&](double k) {
    return std::pow(s_m - k, -(1.0 + nu) / 2.0) * k - rhs;
  };
  double lo = 0.0, hi = s_m - 1.0;
  if (hi <= lo || residual(hi) < 0.0) {
    std::cerr << "choose_k_ell: no root in (0, s-1) for " << model.describe()
              << " at h = " << h << "; smoothing disabled on this level\n";
    return 0;
  }
  while (hi - lo > 0.5) {
    const double mid = 0.5 * (lo + hi);
    (residual(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::clamp<std::int64_t>(std::llround(0.5 * (lo + hi)), 0, s - 1);
}

double richardson_bias(double mean_diff, double alpha, double c_tilde_over_c,
                       bool smoothed_extrapolant) {
  if (!(alpha > 0.0)) throw ConfigError("richardson_bias: alpha must be positive");
  const double denom =
      smoothed_extrapolant ? 1.0 - c_tilde_over_c * std::pow(2.0, alpha)
                           : 1.0 - std::pow(2.0, alpha);
  if (std::abs(denom) < 0.1)
    throw NumericalError("richardson_bias: extrapolation denominator below 0.1");
  return std::abs(mean_diff) / std::abs(denom);
}

namespace {

/// Shared adaptive loop. `allow_extension` distinguishes MLMC from the
/// single-level MC path (which checks only the sampling error).
MlmcReport estimate_adaptive(const ProblemSpec& problem, const EstimatorOptions& opt, double h0,
                             double eps, int initial_levels, bool allow_extension) {
  if (!(eps > 0.0)) throw ConfigError("estimate: eps must be positive");
  const double eps2_half = 0.5 * eps * eps;
  const int pilot = std::max(2, opt.pilot_n);

  std::vector<LevelState> states;
  const int l_start = std::max(0, std::min(initial_levels - 1, opt.l_max));
  for (int ell = 0; ell <= l_start; ++ell)
    states.push_back(make_level_state(ell, h0, problem, opt,
                                      /*is_finest=*/ell == l_start));

  std::string message;
  bool converged = true;
  double bias = 0.0;
  for (int outer = 0;; ++outer) {
    if (outer > 64) {
      converged = false;
      message = "sample allocation did not stabilise";
      break;
    }

    bool drew = false;
    for (LevelState& st : states) {
      const auto have = static_cast<std::int64_t>(st.draws.size());
      if (have < pilot) {
        run_level_samples(st.plan, st.has_coarse ? &st.coarse : nullptr, st.truncate_fine,
                          st.truncate_coarse, problem, opt, have, pilot, st.draws);
        drew = true;
      }
    }
    for (LevelState& st : states) st.moments = moments_of(st.draws, st.has_coarse);

    double sum_cv = 0.0;
    for (const LevelState& st : states) {
      const double c_model = std::pow(st.plan.h, -opt.gamma_model);
      sum_cv += std::sqrt(c_model * std::max(st.moments.var_y, 0.0));
    }
    for (LevelState& st : states) {
      const double c_model = std::pow(st.plan.h, -opt.gamma_model);
      st.n_real = 2.0 / (eps * eps) * sum_cv * std::sqrt(std::max(st.moments.var_y, 0.0) / c_model);
      const auto target = std::max<std::int64_t>(static_cast<std::int64_t>(std::ceil(st.n_real)), 2);
      const auto have = static_cast<std::int64_t>(st.draws.size());
      if (target > have) {
        run_level_samples(st.plan, st.has_coarse ? &st.coarse : nullptr, st.truncate_fine,
                          st.truncate_coarse, problem, opt, have, target, st.draws);
        st.moments = moments_of(st.draws, st.has_coarse);
        drew = true;
      }
    }
    if (drew) continue;

    const LevelState& finest = states.back();
    if (states.size() == 1) {
      // No pair to extrapolate from: report the model bias.
      bias = opt.c_alpha * std::pow(finest.plan.h, opt.alpha);
      if (!allow_extension || opt.l_max == 0) {
        message = "single level: bias taken from the weak-error model";
        break;
      }
    } else {
      bias = richardson_bias(finest.moments.mean_y, opt.alpha, opt.c_alpha_tilde_ratio,
                             finest.truncate_coarse && finest.plan.k_trunc > 0);
    }
    if (allow_extension && bias * bias > eps2_half) {
      if (static_cast<int>(states.size()) - 1 >= opt.l_max) {
        converged = false;
        std::ostringstream os;
        os << "bias " << bias << " still above target " << std::sqrt(eps2_half)
           << " at L_max = " << opt.l_max;
        message = os.str();
        break;
      }
      const int new_l = static_cast<int>(states.size());
      states.push_back(make_level_state(new_l, h0, problem, opt, /*is_finest=*/true));
      for (std::size_t i = 0; i + 1 < states.size(); ++i)
        set_mode(states[i], opt, /*is_finest=*/false);
      continue;
    }
    break;
  }

  MlmcReport rep = finalize_report(states, opt, bias, converged, message);
  if (rep.sampling_error * rep.sampling_error > eps2_half * (1.0 + 1e-9)) {
    rep.converged = false;
    if (!rep.message.empty()) rep.message += "; ";
    rep.message += "sampling error above target";
  }
  return rep;
}

}  // namespace

MlmcReport mc_estimate_fixed_n(const ProblemSpec& problem, const EstimatorOptions& opt,
                               const GridSpec& grid, std::int64_t n) {
  if (n < 2) throw ConfigError("mc_estimate_fixed_n: need at least 2 samples");
  EstimatorOptions mc_opt = opt;
  mc_opt.smoothing = SmoothingRule::Off;
  LevelState st = make_level_state(0, 1.0 / grid.m(0), problem, mc_opt, true);
  run_level_samples(st.plan, nullptr, false, false, problem, mc_opt, 0, n, st.draws);
  st.moments = moments_of(st.draws, false);
  if (st.moments.var_y == 0.0)
    throw NumericalError("mc_estimate: sample variance is zero; degenerate input");
  std::vector<LevelState> states;
  states.push_back(std::move(st));
  return finalize_report(states, mc_opt, opt.c_alpha * std::pow(1.0 / grid.m(0), opt.alpha),
                         true, "fixed sample count");
}

MlmcReport mc_estimate(const ProblemSpec& problem, const EstimatorOptions& opt, double eps,
                       std::optional<double> fixed_h) {
  double h;
  if (fixed_h) {
    h = *fixed_h;
  } else {
    const double target = std::pow(eps / (std::sqrt(2.0) * opt.c_alpha), 1.0 / opt.alpha);
    h = 1.0;
    while (h >= target) h *= 0.5;
  }
  EstimatorOptions mc_opt = opt;
  mc_opt.smoothing = SmoothingRule::Off;
  mc_opt.l_max = 0;
  return estimate_adaptive(problem, mc_opt, h, eps, 1, /*allow_extension=*/false);
}

MlmcReport mlmc_estimate(const ProblemSpec& problem, const EstimatorOptions& opt, double h0,
                         double eps, int initial_levels) {
  if (initial_levels < 1) throw ConfigError("mlmc_estimate: need at least one level");
  return estimate_adaptive(problem, opt, h0, eps, initial_levels, /*allow_extension=*/true);
}

namespace {

struct LogFit {
  double slope = 0.0;
  double intercept_exp = 0.0;
  int used = 0;
};

LogFit fit_loglog(const std::vector<double>& h, const std::vector<double>& v, const char* name,
                  std::string* warnings) {
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
      if (warnings != nullptr) {
        std::ostringstream os;
        os << "fit_rates: dropped non-positive " << name << " point at h = " << h[i] << "; ";
        *warnings += os.str();
      }
      continue;
    }
    xs.push_back(std::log(h[i]));
    ys.push_back(std::log(v[i]));
  }
  if (xs.size() < 3) throw ConfigError("fit_rates: fewer than 3 positive points for a series");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  LogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept_exp = std::exp(my - fit.slope * mx);
  fit.used = static_cast<int>(xs.size());
  return fit;
}

}  // namespace

RateFit fit_rates(const std::vector<RatePoint>& data, std::string* warnings) {
  if (data.size() < 3) throw ConfigError("fit_rates: need at least 3 levels");
  std::vector<double> h, mean_abs, var, cost;
  for (const RatePoint& p : data) {
    h.push_back(p.h);
    mean_abs.push_back(p.mean_abs_y);
    var.push_back(p.var_y);
    cost.push_back(p.cost);
  }
  const LogFit fa = fit_loglog(h, mean_abs, "|mean Y|", warnings);
  const LogFit fb = fit_loglog(h, var, "var Y", warnings);
  const LogFit fc = fit_loglog(h, cost, "cost", warnings);
  RateFit out;
  out.alpha = fa.slope;
  out.c_alpha = fa.intercept_exp;
  out.beta = fb.slope;
  out.c_beta = fb.intercept_exp;
  out.gamma = -fc.slope;
  out.c_gamma = fc.intercept_exp;
  return out;
}

double coarsest_level_bound(const CovarianceModel& model) {
  const double limit = model.family() == CovFamily::SeparableExponential
                           ? model.lambda()
                           : std::sqrt(8.0 * model.nu()) * model.lambda();
  double h = 1.0;
  while (h > limit * (1.0 + 1e-12)) h *= 0.5;
  return h;
}

}  // namespace oscfield
