#include "oscfield/covariance.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <sstream>

namespace oscfield {

namespace {

double norm_l2(std::span<const double> t) {
  double s = 0.0;
  for (double v : t) s += v * v;
  return std::sqrt(s);
}

double norm_lp(std::span<const double> t, double p) {
  double s = 0.0;
  for (double v : t) s += std::pow(std::abs(v), p);
  return std::pow(s, 1.0 / p);
}

double eta(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }

}  // namespace

CovarianceModel::CovarianceModel(CovFamily f, double s2, double l, double nu, double p)
    : family_(f), sigma2_(s2), lambda_(l), nu_(nu), p_(p) {
  if (!(sigma2_ > 0.0) || !std::isfinite(sigma2_))
    throw ConfigError("CovarianceModel: sigma2 must be positive");
  if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
    throw ConfigError("CovarianceModel: lambda must be positive");
  if (family_ == CovFamily::Matern && (!(nu_ > 0.0) || !std::isfinite(nu_)))
    throw ConfigError("CovarianceModel: nu must be positive");
  if (family_ == CovFamily::SeparableExponential && (!(p_ > 0.0) || !std::isfinite(p_)))
    throw ConfigError("CovarianceModel: p must be positive");
}

CovarianceModel CovarianceModel::matern(double sigma2, double lambda, double nu) {
  return CovarianceModel(CovFamily::Matern, sigma2, lambda, nu, 2.0);
}

CovarianceModel CovarianceModel::separable_exponential(double sigma2, double lambda, double p) {
  return CovarianceModel(CovFamily::SeparableExponential, sigma2, lambda, 1.0, p);
}

double CovarianceModel::operator()(std::span<const double> t) const {
  for (double v : t)
    if (!std::isfinite(v)) throw ConfigError("CovarianceModel: non-finite displacement");

  if (family_ == CovFamily::SeparableExponential)
    return sigma2_ * std::exp(-norm_lp(t, p_) / lambda_);

  const double r = norm_l2(t);
  if (r == 0.0) return sigma2_;
  const double x = std::sqrt(2.0 * nu_) * r / lambda_;
  // x^nu K_nu(x) -> 2^{nu-1} Gamma(nu) as x -> 0; below this threshold the
  // correction is under 1e-13 relative and K_nu would overflow first.
  if (x < 1e-13) return sigma2_;
  const double k = boost::math::cyl_bessel_k(nu_, x);
  return sigma2_ * std::pow(2.0, 1.0 - nu_) / std::tgamma(nu_) * std::pow(x, nu_) * k;
}

std::string CovarianceModel::describe() const {
  std::ostringstream os;
  if (family_ == CovFamily::Matern)
    os << "matern(sigma2=" << sigma2_ << ", lambda=" << lambda_ << ", nu=" << nu_ << ")";
  else
    os << "exponential(sigma2=" << sigma2_ << ", lambda=" << lambda_ << ", p=" << p_ << ")";
  return os.str();
}

PeriodisationParams::PeriodisationParams(double ell_, double kappa_) : ell(ell_), kappa(kappa_) {
  if (!(ell > 1.0)) throw ConfigError("PeriodisationParams: ell must exceed 1");
  if (std::abs(kappa - (2.0 * ell - 1.0)) > 1e-12 * ell)
    throw ConfigError("PeriodisationParams: kappa must equal 2*ell - 1");
  // supp(C * phi_kappa) in [-kappa,kappa]^d with kappa < 2*ell keeps the
  // lattice sum inside n in {-1,0,1}^d for |x|_inf <= ell.
  if (!(kappa < 2.0 * ell)) throw ConfigError("PeriodisationParams: kappa must be below 2*ell");
}

PeriodisationParams PeriodisationParams::from_padding(int padding, int cells) {
  const double ell = 1.0 + static_cast<double>(padding) / cells;
  return PeriodisationParams(ell, 2.0 * ell - 1.0);
}

double cutoff_phi(double t, double kappa) {
  if (!(kappa > 1.0)) throw ConfigError("cutoff_phi: kappa must exceed 1");
  const double a = std::abs(t);
  if (a <= 1.0) return 1.0;
  if (a >= kappa) return 0.0;
  const double up = eta((kappa - a) / (kappa - 1.0));
  const double dn = eta((a - 1.0) / (kappa - 1.0));
  return up / (up + dn);
}

double periodic_eval(const CovarianceModel& model, const PeriodisationParams& params,
                     std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  const double period = 2.0 * params.ell;
  double shifted[2];
  double sum = 0.0;
  const int n_lo = -1, n_hi = 1;
  for (int n0 = n_lo; n0 <= n_hi; ++n0) {
    shifted[0] = x[0] + period * n0;
    for (int n1 = (d == 2 ? n_lo : 0); n1 <= (d == 2 ? n_hi : 0); ++n1) {
      if (d == 2) shifted[1] = x[1] + period * n1;
      double sup = 0.0;
      for (int i = 0; i < d; ++i) sup = std::max(sup, std::abs(shifted[i]));
      const double w = cutoff_phi(sup, params.kappa);
      if (w > 0.0) sum += w * model(std::span<const double>(shifted, d));
    }
  }
  return sum;
}

}  // namespace oscfield
