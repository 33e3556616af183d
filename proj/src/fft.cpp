#include "oscfield/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

#include "oscfield/errors.hpp"

namespace oscfield {

namespace {
// The FFTW planner is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

UnitaryDft::UnitaryDft(std::vector<int> dims) : dims_(std::move(dims)) {
  size_ = 1;
  for (int n : dims_) {
    if (n < 1) throw ConfigError("UnitaryDft: dimensions must be positive");
    size_ *= n;
  }
  if (size_ > (std::int64_t{1} << 28))
    throw ConfigError("UnitaryDft: transform size exceeds the addressable limit");

  buf_ = reinterpret_cast<std::complex<double>*>(fftw_alloc_complex(size_));
  if (buf_ == nullptr) throw std::bad_alloc();

  // FFTW is row-major (last dim fastest); our layout has dim 0 fastest, so
  // the dims are passed reversed. FFTW_BACKWARD carries the + sign of F.
  std::vector<int> rev(dims_.rbegin(), dims_.rend());
  std::lock_guard<std::mutex> lock(planner_mutex());
  plan_ = fftw_plan_dft(static_cast<int>(rev.size()), rev.data(),
                        reinterpret_cast<fftw_complex*>(buf_),
                        reinterpret_cast<fftw_complex*>(buf_), FFTW_BACKWARD, FFTW_ESTIMATE);
  if (plan_ == nullptr) throw NumericalError("UnitaryDft: FFTW plan creation failed");
}

UnitaryDft::~UnitaryDft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_));
  fftw_free(buf_);
}

void UnitaryDft::forward_real(std::span<const double> x, std::span<std::complex<double>> out) {
  if (static_cast<std::int64_t>(x.size()) != size_ ||
      static_cast<std::int64_t>(out.size()) != size_)
    throw ConfigError("UnitaryDft: length mismatch");
  for (std::int64_t i = 0; i < size_; ++i) buf_[i] = x[i];
  fftw_execute(static_cast<fftw_plan>(plan_));
  const double scale = 1.0 / std::sqrt(static_cast<double>(size_));
  for (std::int64_t i = 0; i < size_; ++i) out[i] = buf_[i] * scale;
}

}  // namespace oscfield
