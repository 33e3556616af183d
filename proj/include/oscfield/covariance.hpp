#pragma once

#include <span>
#include <string>

#include "oscfield/errors.hpp"

namespace oscfield {

enum class CovFamily { Matern, SeparableExponential };

/**
 * Stationary covariance kernel C(t) with marginal variance sigma2 and
 * correlation length lambda.
 *
 * Matern uses the 2-norm of the displacement and the modified Bessel
 * function K_nu; SeparableExponential uses the p-norm (p = 1 in all the
 * shipped experiments). Parameters are validated at construction;
 * evaluation is total for finite displacements.
 */
class CovarianceModel {
 public:
  static CovarianceModel matern(double sigma2, double lambda, double nu);
  static CovarianceModel separable_exponential(double sigma2, double lambda, double p = 1.0);

  CovFamily family() const { return family_; }
  double sigma2() const { return sigma2_; }
  double lambda() const { return lambda_; }
  double nu() const { return nu_; }
  double p_norm() const { return p_; }

  /// C(t) for a displacement t in R^d, d = t.size(). C(0) = sigma2 exactly.
  double operator()(std::span<const double> t) const;
  double eval1(double t) const {
    return (*this)(std::span<const double>(&t, 1));
  }

  std::string describe() const;

 private:
  CovarianceModel(CovFamily f, double s2, double l, double nu, double p);
  CovFamily family_;
  double sigma2_, lambda_, nu_, p_;
};

/**
 * Parameters of the smooth 2*ell-periodic extension of a covariance kernel:
 * half-period ell = 1 + J/m > 1 and cutoff support radius kappa = 2*ell - 1.
 */
struct PeriodisationParams {
  PeriodisationParams(double ell_, double kappa_);
  static PeriodisationParams from_padding(int padding, int cells);

  double ell;
  double kappa;
};

/**
 * Smooth cutoff: phi = 1 on [-1,1], phi = 0 outside [-kappa,kappa],
 * smooth and non-increasing in |t| in between, built from eta(x) = exp(-1/x).
 * The limits eta(0) = 0 make phi(1) = 1 and phi(kappa) = 0 exact.
 */
double cutoff_phi(double t, double kappa);

/**
 * Periodic extension C^ext(x) = sum_n (C * phi_kappa)(x + 2*ell*n), where
 * phi_kappa(x) = phi(max_i |x_i|). Since supp(C * phi_kappa) is contained in
 * [-kappa,kappa]^d and kappa < 2*ell, only shifts n in {-1,0,1}^d contribute
 * for evaluation points with max_i |x_i| <= ell.
 */
double periodic_eval(const CovarianceModel& model, const PeriodisationParams& params,
                     std::span<const double> x);

}  // namespace oscfield
