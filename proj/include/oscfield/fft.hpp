#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace oscfield {

/**
 * Unitary d-dimensional DFT of a fixed size, F_{p,q} = s^{-1/2} exp(+2*pi*i*p.q),
 * backed by FFTW. One instance per worker: execution through distinct
 * instances is thread-safe, plan creation is serialised internally.
 *
 * Arrays are flattened with dimension 0 fastest: index = q0 + n0*q1.
 */
class UnitaryDft {
 public:
  explicit UnitaryDft(std::vector<int> dims);
  ~UnitaryDft();
  UnitaryDft(const UnitaryDft&) = delete;
  UnitaryDft& operator=(const UnitaryDft&) = delete;

  const std::vector<int>& dims() const { return dims_; }
  std::int64_t size() const { return size_; }

  /// v = F x for real input x; result written to `out` (length size()).
  void forward_real(std::span<const double> x, std::span<std::complex<double>> out);

 private:
  std::vector<int> dims_;
  std::int64_t size_;
  void* plan_;  // fftw_plan
  std::complex<double>* buf_;
};

}  // namespace oscfield
