#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oscfield/covariance.hpp"
#include "oscfield/fft.hpp"
#include "oscfield/grid.hpp"

namespace oscfield {

/// Real values of a (possibly smoothed) Gaussian field at grid nodes,
/// flattened with dimension 0 fastest.
struct FieldSample {
  GridSpec grid;
  std::vector<double> values;
};

/// Per-worker scratch for sampling: cached DFT plans plus reusable buffers.
class SampleWorkspace {
 public:
  UnitaryDft& dft_for(const std::vector<int>& dims);

  std::vector<double> w;
  std::vector<std::complex<double>> v;
  std::vector<double> xi, u, u2;

 private:
  std::map<std::vector<int>, std::unique_ptr<UnitaryDft>> cache_;
};

/**
 * Factorised circulant embedding S = G Lambda G^T of the covariance matrix
 * of a stationary Gaussian field on a uniform grid, with G = Re(F) + Im(F)
 * the Hartley matrix of the unitary DFT F.
 *
 * The embedding has per-dimension size n_i = 2 (m_i + J_i), total size
 * s = prod n_i, and stores the full eigenvalue vector together with the
 * permutation sorting it non-increasingly. A truncated copy zeroes the k
 * smallest eigenvalues in place; the original operator is immutable and
 * safe to share across workers.
 */
class EmbeddingOperator {
 public:
  const GridSpec& grid() const { return grid_; }
  const std::array<int, 2>& padding() const { return padding_; }
  const std::vector<int>& dims() const { return dims_; }
  std::int64_t s() const { return s_; }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  const std::vector<std::int64_t>& perm() const { return perm_; }
  std::int64_t truncation_k() const { return truncation_k_; }
  double sigma2() const { return sigma2_; }

  /// Copy with the k smallest eigenvalues (per perm) zeroed; 0 <= k < s.
  EmbeddingOperator truncated(std::int64_t k) const;

  /// u = Re(F w) + Im(F w) with w = sqrt(lambda) .* xi; length s.
  void sample_into(std::span<const double> xi, SampleWorkspace& ws,
                   std::span<double> u) const;
  std::vector<double> sample(std::span<const double> xi) const;

  /// Select the R-block (first m_i + 1 indices per dimension), subsampled
  /// onto `target` when it is a nested coarsening of the operator grid.
  FieldSample restrict_to(std::span<const double> u, const GridSpec& target) const;

  static EmbeddingOperator from_parts(GridSpec grid, std::array<int, 2> padding,
                                      std::vector<double> eigenvalues, double sigma2);

 private:
  EmbeddingOperator(GridSpec grid, std::array<int, 2> padding)
      : grid_(grid), padding_(padding) {}

  GridSpec grid_{1, {1, 1}};
  std::array<int, 2> padding_{0, 0};
  std::vector<int> dims_;
  std::int64_t s_ = 0;
  std::vector<double> eigenvalues_;
  std::vector<double> sqrt_eigenvalues_;
  std::vector<std::int64_t> perm_;
  std::int64_t truncation_k_ = 0;
  double sigma2_ = 1.0;
};

/**
 * First row of the (extended) embedding matrix S. Entry at multi-index
 * (q_0, ..., q_{d-1}), q_i in [0, 2(m_i+J_i)), is the periodic covariance at
 * the wrapped displacement (delta_0/m_0, ...), delta_i = min(q_i, n_i - q_i).
 * With all J_i = 0 the extension degenerates to C itself and the classical
 * mirrored-Toeplitz row is recovered.
 */
std::vector<double> build_first_row(const GridSpec& grid, const CovarianceModel& model,
                                    std::array<int, 2> padding);

/**
 * Eigenvalues lambda = sqrt(s) * F row of the circulant matrix with the given
 * symmetric first row. The imaginary parts must vanish; max |imag| above
 * 1e-8 * row[0] signals a misbuilt row and raises NumericalError.
 */
std::vector<double> spectrum(std::span<const double> first_row, const std::vector<int>& dims);

struct BuildOptions {
  double tol_spd_factor = 1e-12;           // tol_spd = factor * s * sigma2
  std::vector<double> padding_fractions =  // J = ceil(f * m), first SPD wins
      {0.5, 1.0, 2.0, 4.0, 8.0};
};

/**
 * Builds the embedding operator for a grid/covariance pair: tries the plain
 * embedding (J = 0) first and falls back to smooth periodisation with the
 * doubling padding schedule until the spectrum is positive semi-definite
 * up to tol_spd; eigenvalues in [-tol_spd, 0) are clamped to zero.
 */
EmbeddingOperator build_operator(const GridSpec& grid, const CovarianceModel& model,
                                 const BuildOptions& options = {});

struct SmoothingErrorStats {
  double mean;
  double variance;
};

/// Monte Carlo estimate of E||Z - Z~||_inf over n_samples draws, where Z and
/// Z~ share the same xi and Z~ drops the k smallest eigenvalues.
SmoothingErrorStats smoothing_error_estimate(const EmbeddingOperator& op, std::int64_t k,
                                             int n_samples, std::uint64_t seed);

/// Binary spectrum dump: magic "OSC1", u32 d, u32 m[d], u32 J[d], u64 s,
/// then s little-endian float64 eigenvalues in array order.
void save_spectrum(const EmbeddingOperator& op, const std::string& path);
EmbeddingOperator load_spectrum(const std::string& path, double sigma2);

}  // namespace oscfield
