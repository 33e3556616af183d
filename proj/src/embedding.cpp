#include "oscfield/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "oscfield/rng.hpp"

namespace oscfield {

UnitaryDft& SampleWorkspace::dft_for(const std::vector<int>& dims) {
  auto it = cache_.find(dims);
  if (it == cache_.end())
    it = cache_.emplace(dims, std::make_unique<UnitaryDft>(dims)).first;
  return *it->second;
}

std::vector<double> build_first_row(const GridSpec& grid, const CovarianceModel& model,
                                    std::array<int, 2> padding) {
  const int d = grid.dim();
  std::vector<int> dims(d);
  std::int64_t s = 1;
  for (int i = 0; i < d; ++i) {
    if (padding[i] < 0) throw ConfigError("build_first_row: padding must be non-negative");
    dims[i] = 2 * (grid.m(i) + padding[i]);
    s *= dims[i];
  }
  if (s > (std::int64_t{1} << 28))
    throw ConfigError("build_first_row: embedding size exceeds the addressable limit");

  const bool padded = padding[0] > 0 || (d == 2 && padding[1] > 0);
  std::unique_ptr<PeriodisationParams> params;
  if (padded) {
    // A single half-period ell = 1 + J_i/m_i must be shared by all dimensions.
    for (int i = 1; i < d; ++i)
      if (static_cast<std::int64_t>(padding[i]) * grid.m(0) !=
          static_cast<std::int64_t>(padding[0]) * grid.m(i))
        throw ConfigError("build_first_row: padding ratios must match across dimensions");
    params = std::make_unique<PeriodisationParams>(
        PeriodisationParams::from_padding(padding[0], grid.m(0)));
  }

  std::vector<double> row(s);
  double x[2] = {0.0, 0.0};
  const int n0 = dims[0];
  const int n1 = d == 2 ? dims[1] : 1;
  for (int q1 = 0; q1 < n1; ++q1) {
    if (d == 2) {
      const int delta1 = std::min(q1, dims[1] - q1);
      x[1] = static_cast<double>(delta1) / grid.m(1);
    }
    for (int q0 = 0; q0 < n0; ++q0) {
      const int delta0 = std::min(q0, dims[0] - q0);
      x[0] = static_cast<double>(delta0) / grid.m(0);
      const std::span<const double> xs(x, static_cast<std::size_t>(d));
      row[static_cast<std::int64_t>(q1) * n0 + q0] =
          padded ? periodic_eval(model, *params, xs) : model(xs);
    }
  }
  return row;
}

std::vector<double> spectrum(std::span<const double> first_row, const std::vector<int>& dims) {
  UnitaryDft dft(dims);
  if (static_cast<std::int64_t>(first_row.size()) != dft.size())
    throw ConfigError("spectrum: first_row length must equal the product of dims");
  std::vector<std::complex<double>> out(first_row.size());
  dft.forward_real(first_row, out);

  const double scale = std::sqrt(static_cast<double>(dft.size()));
  double max_imag = 0.0;
  std::vector<double> eig(first_row.size());
  for (std::size_t i = 0; i < eig.size(); ++i) {
    eig[i] = scale * out[i].real();
    max_imag = std::max(max_imag, std::abs(scale * out[i].imag()));
  }
  if (max_imag > 1e-8 * std::abs(first_row[0])) {
    std::ostringstream os;
    os << "spectrum: imaginary part " << max_imag << " exceeds tolerance; "
       << "the first row is not symmetric";
    throw NumericalError(os.str());
  }
  return eig;
}

EmbeddingOperator EmbeddingOperator::from_parts(GridSpec grid, std::array<int, 2> padding,
                                                std::vector<double> eigenvalues, double sigma2) {
  EmbeddingOperator op(grid, padding);
  op.dims_.resize(grid.dim());
  op.s_ = 1;
  for (int i = 0; i < grid.dim(); ++i) {
    op.dims_[i] = 2 * (grid.m(i) + padding[i]);
    op.s_ *= op.dims_[i];
  }
  if (static_cast<std::int64_t>(eigenvalues.size()) != op.s_)
    throw ConfigError("EmbeddingOperator: eigenvalue count must equal the embedding size");
  op.eigenvalues_ = std::move(eigenvalues);
  op.sigma2_ = sigma2;
  op.perm_.resize(op.s_);
  std::iota(op.perm_.begin(), op.perm_.end(), std::int64_t{0});
  std::stable_sort(op.perm_.begin(), op.perm_.end(), [&](std::int64_t a, std::int64_t b) {
    return op.eigenvalues_[a] > op.eigenvalues_[b];
  });
  op.sqrt_eigenvalues_.resize(op.s_);
  for (std::int64_t i = 0; i < op.s_; ++i)
    op.sqrt_eigenvalues_[i] = std::sqrt(std::max(op.eigenvalues_[i], 0.0));
  return op;
}

EmbeddingOperator build_operator(const GridSpec& grid, const CovarianceModel& model,
                                 const BuildOptions& options) {
  std::vector<std::pair<std::array<int, 2>, double>> attempts;

  auto try_padding = [&](std::array<int, 2> padding) -> std::vector<double> {
    std::vector<int> dims(grid.dim());
    for (int i = 0; i < grid.dim(); ++i) dims[i] = 2 * (grid.m(i) + padding[i]);
    auto row = build_first_row(grid, model, padding);
    auto eig = spectrum(row, dims);
    const double tol = options.tol_spd_factor * static_cast<double>(eig.size()) * model.sigma2();
    const double min_eig = *std::min_element(eig.begin(), eig.end());
    attempts.emplace_back(padding, min_eig);
    if (min_eig < -tol) return {};
    for (double& v : eig)
      if (v < 0.0) v = 0.0;
    return eig;
  };

  std::array<int, 2> padding{0, 0};
  auto eig = try_padding(padding);
  if (eig.empty()) {
    for (double frac : options.padding_fractions) {
      for (int i = 0; i < grid.dim(); ++i)
        padding[i] = static_cast<int>(std::ceil(frac * grid.m(i)));
      eig = try_padding(padding);
      if (!eig.empty()) break;
    }
  }
  if (eig.empty()) {
    std::ostringstream os;
    os << "build_operator: no SPD embedding for " << model.describe() << "; tried";
    for (const auto& [J, min_eig] : attempts)
      os << " J=" << J[0] << (grid.dim() == 2 ? "," + std::to_string(J[1]) : "")
         << " (min eig " << min_eig << ")";
    throw EmbeddingError(os.str());
  }
  return EmbeddingOperator::from_parts(grid, padding, std::move(eig), model.sigma2());
}

EmbeddingOperator EmbeddingOperator::truncated(std::int64_t k) const {
  if (k < 0 || k >= s_)
    throw ConfigError("truncated: k must lie in [0, s); at least one mode must survive");
  EmbeddingOperator op(*this);
  for (std::int64_t j = s_ - k; j < s_; ++j) {
    op.eigenvalues_[perm_[j]] = 0.0;
    op.sqrt_eigenvalues_[perm_[j]] = 0.0;
  }
  op.truncation_k_ = k;
  return op;
}

void EmbeddingOperator::sample_into(std::span<const double> xi, SampleWorkspace& ws,
                                    std::span<double> u) const {
  if (static_cast<std::int64_t>(xi.size()) != s_ || static_cast<std::int64_t>(u.size()) != s_)
    throw ConfigError("sample: xi and u must have the embedding size");
  ws.w.resize(s_);
  ws.v.resize(s_);
  for (std::int64_t i = 0; i < s_; ++i) ws.w[i] = sqrt_eigenvalues_[i] * xi[i];
  ws.dft_for(dims_).forward_real(ws.w, ws.v);
  for (std::int64_t i = 0; i < s_; ++i) u[i] = ws.v[i].real() + ws.v[i].imag();
}

std::vector<double> EmbeddingOperator::sample(std::span<const double> xi) const {
  SampleWorkspace ws;
  std::vector<double> u(s_);
  sample_into(xi, ws, u);
  return u;
}

FieldSample EmbeddingOperator::restrict_to(std::span<const double> u,
                                           const GridSpec& target) const {
  if (static_cast<std::int64_t>(u.size()) != s_)
    throw ConfigError("restrict: embedding-domain vector has wrong length");
  if (!grid_.refines(target))
    throw ConfigError("restrict: target grid is not a nested coarsening");

  FieldSample out{target, std::vector<double>(static_cast<std::size_t>(target.node_count()))};
  const int r0 = grid_.m(0) / target.m(0);
  const int n0 = dims_[0];
  if (grid_.dim() == 1) {
    for (int p0 = 0; p0 <= target.m(0); ++p0) out.values[p0] = u[p0 * r0];
    return out;
  }
  const int r1 = grid_.m(1) / target.m(1);
  for (int p1 = 0; p1 <= target.m(1); ++p1)
    for (int p0 = 0; p0 <= target.m(0); ++p0)
      out.values[target.node_index(p0, p1)] =
          u[static_cast<std::int64_t>(p1) * r1 * n0 + p0 * r0];
  return out;
}

SmoothingErrorStats smoothing_error_estimate(const EmbeddingOperator& op, std::int64_t k,
                                             int n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw ConfigError("smoothing_error_estimate: need at least 2 samples");
  const EmbeddingOperator smoothed = op.truncated(k);

  SampleWorkspace ws;
  std::vector<double> xi(op.s()), u(op.s()), u_smooth(op.s());
  double mean = 0.0, m2 = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    NormalStream stream(seed, 0, static_cast<std::uint64_t>(i));
    stream.fill(xi);
    op.sample_into(xi, ws, u);
    smoothed.sample_into(xi, ws, u_smooth);
    const FieldSample z = op.restrict_to(u, op.grid());
    const FieldSample z_smooth = smoothed.restrict_to(u_smooth, op.grid());
    double sup = 0.0;
    for (std::size_t j = 0; j < z.values.size(); ++j)
      sup = std::max(sup, std::abs(z.values[j] - z_smooth.values[j]));
    const double delta = sup - mean;
    mean += delta / (i + 1);
    m2 += delta * (sup - mean);
  }
  return {mean, m2 / (n_samples - 1)};
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_spectrum(const EmbeddingOperator& op, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("save_spectrum: cannot open " + path);
  os.write("OSC1", 4);
  put_u32(os, static_cast<std::uint32_t>(op.grid().dim()));
  for (int i = 0; i < op.grid().dim(); ++i) put_u32(os, static_cast<std::uint32_t>(op.grid().m(i)));
  for (int i = 0; i < op.grid().dim(); ++i) put_u32(os, static_cast<std::uint32_t>(op.padding()[i]));
  put_u64(os, static_cast<std::uint64_t>(op.s()));
  for (double v : op.eigenvalues()) put_u64(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw ConfigError("save_spectrum: write failed for " + path);
}

EmbeddingOperator load_spectrum(const std::string& path, double sigma2) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("load_spectrum: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "OSC1", 4) != 0)
    throw ConfigError("load_spectrum: bad magic in " + path);
  const int d = static_cast<int>(get_u32(is));
  if (d < 1 || d > 2) throw ConfigError("load_spectrum: unsupported dimension");
  std::array<int, 2> m{1, 1}, J{0, 0};
  for (int i = 0; i < d; ++i) m[i] = static_cast<int>(get_u32(is));
  for (int i = 0; i < d; ++i) J[i] = static_cast<int>(get_u32(is));
  const auto s = static_cast<std::int64_t>(get_u64(is));
  std::int64_t expect = 1;
  for (int i = 0; i < d; ++i) expect *= 2 * (m[i] + J[i]);
  if (s != expect) throw ConfigError("load_spectrum: inconsistent header in " + path);
  std::vector<double> eig(static_cast<std::size_t>(s));
  for (auto& v : eig) v = std::bit_cast<double>(get_u64(is));
  if (!is) throw ConfigError("load_spectrum: truncated file " + path);
  return EmbeddingOperator::from_parts(GridSpec(d, m), J, std::move(eig), sigma2);
}

}  // namespace oscfield
