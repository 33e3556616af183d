#include "oscfield/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <sstream>

namespace oscfield {

namespace {

struct Csr {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int64_t> col;
  std::vector<double> val;

  void spmv(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::int64_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) acc += val[k] * x[col[k]];
      y[i] = acc;
    }
  }
};

bool is_dirichlet(const GridSpec& g, int p0) { return p0 == 0 || p0 == g.m(0); }

double dirichlet_value(const GridSpec& g, int p0) { return p0 == 0 ? 1.0 : 0.0; }

/**
 * Assembles the P1 stiffness matrix and load vector on `grid` for nodal
 * conductivities `k`, with Dirichlet elimination folded in. Rows of
 * Dirichlet nodes become identity with rhs = boundary value (or 0 for the
 * homogeneous correction systems used on coarse multigrid levels).
 */
void assemble(const GridSpec& grid, const std::vector<double>& k, Forcing forcing,
              double forcing_value, bool homogeneous, Csr& A, std::vector<double>& b) {
  const int m0 = grid.m(0), m1 = grid.m(1);
  const int n0 = m0 + 1;
  const std::int64_t n = grid.node_count();
  const double hx = grid.spacing(0), hy = grid.spacing(1);
  const double area = 0.5 * hx * hy;

  // 7-point stencil of the lower-left/upper-right triangulation, ordered by
  // flattened column offset.
  const int off0[7] = {-1, 0, -1, 0, 1, 0, 1};
  const int off1[7] = {-1, -1, 0, 0, 0, 1, 1};
  auto slot_of = [&](int d0, int d1) {
    for (int s = 0; s < 7; ++s)
      if (off0[s] == d0 && off1[s] == d1) return s;
    return -1;
  };

  std::vector<double> stencil(static_cast<std::size_t>(n) * 7, 0.0);
  b.assign(n, 0.0);

  // Local stiffness for a right triangle with legs hx, hy: gradients of the
  // vertex basis functions are constant, K_ij = k_e (b_i b_j + c_i c_j)/(4A).
  auto add_triangle = [&](const int p0[3], const int p1[3]) {
    double xs[3], ys[3];
    for (int i = 0; i < 3; ++i) {
      xs[i] = p0[i] * hx;
      ys[i] = p1[i] * hy;
    }
    double ke = 0.0;
    std::int64_t idx[3];
    for (int i = 0; i < 3; ++i) {
      idx[i] = grid.node_index(p0[i], p1[i]);
      ke += k[idx[i]];
    }
    ke /= 3.0;
    double bb[3], cc[3];
    for (int i = 0; i < 3; ++i) {
      const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
      bb[i] = ys[i1] - ys[i2];
      cc[i] = xs[i2] - xs[i1];
    }
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        const int s = slot_of(p0[j] - p0[i], p1[j] - p1[i]);
        stencil[idx[i] * 7 + s] += ke * (bb[i] * bb[j] + cc[i] * cc[j]) / (4.0 * area);
      }
      if (forcing == Forcing::Constant && !homogeneous)
        b[idx[i]] += forcing_value * area / 3.0;
    }
  };

  for (int j = 0; j < m1; ++j) {
    for (int i = 0; i < m0; ++i) {
      const int lower0[3] = {i, i + 1, i + 1}, lower1[3] = {j, j, j + 1};
      const int upper0[3] = {i, i + 1, i}, upper1[3] = {j, j + 1, j + 1};
      add_triangle(lower0, lower1);
      add_triangle(upper0, upper1);
    }
  }

  // Symmetric Dirichlet elimination on the stencil.
  for (int p1 = 0; p1 <= m1; ++p1) {
    for (int p0 = 0; p0 <= m0; ++p0) {
      const std::int64_t i = grid.node_index(p0, p1);
      if (is_dirichlet(grid, p0)) {
        for (int s = 0; s < 7; ++s) stencil[i * 7 + s] = 0.0;
        stencil[i * 7 + 3] = 1.0;
        b[i] = homogeneous ? 0.0 : dirichlet_value(grid, p0);
        continue;
      }
      for (int s = 0; s < 7; ++s) {
        const int q0 = p0 + off0[s], q1 = p1 + off1[s];
        if (q0 < 0 || q0 > m0 || q1 < 0 || q1 > m1 || !is_dirichlet(grid, q0)) continue;
        if (!homogeneous) b[i] -= stencil[i * 7 + s] * dirichlet_value(grid, q0);
        stencil[i * 7 + s] = 0.0;
      }
    }
  }

  A.n = n;
  A.row_ptr.assign(n + 1, 0);
  A.col.clear();
  A.val.clear();
  A.col.reserve(n * 7);
  A.val.reserve(n * 7);
  for (int p1 = 0; p1 <= m1; ++p1) {
    for (int p0 = 0; p0 <= m0; ++p0) {
      const std::int64_t i = grid.node_index(p0, p1);
      for (int s = 0; s < 7; ++s) {
        const int q0 = p0 + off0[s], q1 = p1 + off1[s];
        if (q0 < 0 || q0 > m0 || q1 < 0 || q1 > m1) continue;
        const double v = stencil[i * 7 + s];
        if (v == 0.0 && s != 3) continue;
        A.col.push_back(i + off1[s] * n0 + off0[s]);
        A.val.push_back(v);
      }
      A.row_ptr[i + 1] = static_cast<std::int64_t>(A.col.size());
    }
  }
}

// --- geometric multigrid -----------------------------------------------

/// Prolongation of a coarse correction by P1 interpolation on nested grids;
/// odd-odd fine nodes sit on the coarse cell diagonal.
void prolong_add(const GridSpec& fine, const GridSpec& coarse, const std::vector<double>& ec,
                 std::vector<double>& zf) {
  const int mf0 = fine.m(0), mf1 = fine.m(1);
  for (int J = 0; J <= mf1; ++J) {
    for (int I = 0; I <= mf0; ++I) {
      const std::int64_t i = fine.node_index(I, J);
      const bool ex = (I % 2) == 0, ey = (J % 2) == 0;
      if (ex && ey) {
        zf[i] += ec[coarse.node_index(I / 2, J / 2)];
      } else if (!ex && ey) {
        zf[i] += 0.5 * (ec[coarse.node_index((I - 1) / 2, J / 2)] +
                        ec[coarse.node_index((I + 1) / 2, J / 2)]);
      } else if (ex && !ey) {
        zf[i] += 0.5 * (ec[coarse.node_index(I / 2, (J - 1) / 2)] +
                        ec[coarse.node_index(I / 2, (J + 1) / 2)]);
      } else {
        zf[i] += 0.5 * (ec[coarse.node_index((I - 1) / 2, (J - 1) / 2)] +
                        ec[coarse.node_index((I + 1) / 2, (J + 1) / 2)]);
      }
    }
  }
}

/// Residual restriction r_c = P^T r_f, zeroed at coarse Dirichlet nodes.
void restrict_residual(const GridSpec& fine, const GridSpec& coarse,
                       const std::vector<double>& rf, std::vector<double>& rc) {
  rc.assign(static_cast<std::size_t>(coarse.node_count()), 0.0);
  const int mf0 = fine.m(0), mf1 = fine.m(1);
  for (int J = 0; J <= mf1; ++J) {
    for (int I = 0; I <= mf0; ++I) {
      const double v = rf[fine.node_index(I, J)];
      if (v == 0.0) continue;
      const bool ex = (I % 2) == 0, ey = (J % 2) == 0;
      if (ex && ey) {
        rc[coarse.node_index(I / 2, J / 2)] += v;
      } else if (!ex && ey) {
        rc[coarse.node_index((I - 1) / 2, J / 2)] += 0.5 * v;
        rc[coarse.node_index((I + 1) / 2, J / 2)] += 0.5 * v;
      } else if (ex && !ey) {
        rc[coarse.node_index(I / 2, (J - 1) / 2)] += 0.5 * v;
        rc[coarse.node_index(I / 2, (J + 1) / 2)] += 0.5 * v;
      } else {
        rc[coarse.node_index((I - 1) / 2, (J - 1) / 2)] += 0.5 * v;
        rc[coarse.node_index((I + 1) / 2, (J + 1) / 2)] += 0.5 * v;
      }
    }
  }
  for (int J = 0; J <= coarse.m(1); ++J) {
    rc[coarse.node_index(0, J)] = 0.0;
    rc[coarse.node_index(coarse.m(0), J)] = 0.0;
  }
}

void gauss_seidel(const Csr& A, const std::vector<double>& r, std::vector<double>& z,
                  bool backward) {
  const std::int64_t n = A.n;
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const std::int64_t i = backward ? n - 1 - ii : ii;
    double acc = r[i];
    double diag = 1.0;
    for (std::int64_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) {
      if (A.col[k] == i)
        diag = A.val[k];
      else
        acc -= A.val[k] * z[A.col[k]];
    }
    z[i] = acc / diag;
  }
}

struct MgLevel {
  GridSpec grid{2, {1, 1}};
  Csr A;
  std::vector<double> scratch_r, scratch_z, scratch_t;
};

/// V(1,1)-cycle hierarchy with symmetric Gauss-Seidel smoothing, coarse
/// operators rediscretised from the injected nodal conductivity, and a dense
/// Cholesky factorisation on the coarsest grid. Symmetric by construction
/// (forward pre-smoothing, backward post-smoothing, R = P^T), so it is a
/// valid SPD preconditioner for CG.
class Multigrid {
 public:
  Multigrid(const GridSpec& grid, const std::vector<double>& k_nodal) {
    GridSpec g = grid;
    std::vector<double> k = k_nodal;
    while (true) {
      levels_.push_back(std::make_unique<MgLevel>());
      MgLevel& lvl = *levels_.back();
      lvl.grid = g;
      std::vector<double> dummy_b;
      assemble(g, k, Forcing::Zero, 0.0, true, lvl.A, dummy_b);
      lvl.scratch_r.resize(g.node_count());
      lvl.scratch_z.resize(g.node_count());
      lvl.scratch_t.resize(g.node_count());
      if (g.m(0) <= 4 || g.m(1) <= 4 || g.m(0) % 2 != 0 || g.m(1) % 2 != 0) break;
      GridSpec coarse(2, {g.m(0) / 2, g.m(1) / 2});
      std::vector<double> kc(static_cast<std::size_t>(coarse.node_count()));
      for (int J = 0; J <= coarse.m(1); ++J)
        for (int I = 0; I <= coarse.m(0); ++I)
          kc[coarse.node_index(I, J)] = k[g.node_index(2 * I, 2 * J)];
      g = coarse;
      k = std::move(kc);
    }
    factor_coarsest();
  }

  /// z = V-cycle approximation of A^{-1} r on the finest level.
  void apply(const std::vector<double>& r, std::vector<double>& z) { cycle(0, r, z); }

 private:
  void factor_coarsest() {
    const Csr& A = levels_.back()->A;
    const std::int64_t n = A.n;
    chol_.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
        chol_[i * n + A.col[k]] = A.val[k];
    for (std::int64_t j = 0; j < n; ++j) {
      double d = chol_[j * n + j];
      for (std::int64_t k = 0; k < j; ++k) d -= chol_[j * n + k] * chol_[j * n + k];
      chol_[j * n + j] = std::sqrt(d);
      for (std::int64_t i = j + 1; i < n; ++i) {
        double v = chol_[i * n + j];
        for (std::int64_t k = 0; k < j; ++k) v -= chol_[i * n + k] * chol_[j * n + k];
        chol_[i * n + j] = v / chol_[j * n + j];
      }
    }
  }

  void solve_coarsest(const std::vector<double>& r, std::vector<double>& z) const {
    const std::int64_t n = levels_.back()->A.n;
    for (std::int64_t i = 0; i < n; ++i) {
      double v = r[i];
      for (std::int64_t k = 0; k < i; ++k) v -= chol_[i * n + k] * z[k];
      z[i] = v / chol_[i * n + i];
    }
    for (std::int64_t i = n - 1; i >= 0; --i) {
      double v = z[i];
      for (std::int64_t k = i + 1; k < n; ++k) v -= chol_[k * n + i] * z[k];
      z[i] = v / chol_[i * n + i];
    }
  }

  void cycle(std::size_t depth, const std::vector<double>& r, std::vector<double>& z) {
    MgLevel& lvl = *levels_[depth];
    if (depth + 1 == levels_.size()) {
      solve_coarsest(r, z);
      return;
    }
    std::fill(z.begin(), z.end(), 0.0);
    gauss_seidel(lvl.A, r, z, false);
    lvl.A.spmv(z, lvl.scratch_t);
    for (std::int64_t i = 0; i < lvl.A.n; ++i) lvl.scratch_t[i] = r[i] - lvl.scratch_t[i];
    MgLevel& next = *levels_[depth + 1];
    restrict_residual(lvl.grid, next.grid, lvl.scratch_t, next.scratch_r);
    cycle(depth + 1, next.scratch_r, next.scratch_z);
    prolong_add(lvl.grid, next.grid, next.scratch_z, z);
    gauss_seidel(lvl.A, r, z, true);
  }

  std::vector<std::unique_ptr<MgLevel>> levels_;
  std::vector<double> chol_;
};

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

FeSolution assemble_and_solve(const DarcyProblem& problem, const SolverOptions& options) {
  const GridSpec& grid = problem.grid;
  if (grid.dim() != 2) throw ConfigError("assemble_and_solve: grid must be 2D");
  if (!(problem.log_field.grid == grid))
    throw ConfigError("assemble_and_solve: log-field grid mismatch");
  const std::int64_t n = grid.node_count();

  std::vector<double> k(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double z = problem.log_field.values[i];
    if (!std::isfinite(z)) throw NumericalError("assemble_and_solve: non-finite log-field value");
    k[i] = std::exp(z);
  }

  Csr A;
  std::vector<double> b;
  assemble(grid, k, problem.forcing, problem.forcing_value, false, A, b);

  std::vector<double> u(n, 0.0);
  for (int p1 = 0; p1 <= grid.m(1); ++p1) {
    u[grid.node_index(0, p1)] = dirichlet_value(grid, 0);
    u[grid.node_index(grid.m(0), p1)] = dirichlet_value(grid, grid.m(0));
  }

  std::unique_ptr<Multigrid> mg;
  std::vector<double> inv_diag;
  if (options.precond == Preconditioner::Multigrid) {
    mg = std::make_unique<Multigrid>(grid, k);
  } else {
    inv_diag.resize(n);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t kk = A.row_ptr[i]; kk < A.row_ptr[i + 1]; ++kk)
        if (A.col[kk] == i) inv_diag[i] = 1.0 / A.val[kk];
  }
  auto precondition = [&](const std::vector<double>& r, std::vector<double>& z) {
    if (mg) {
      mg->apply(r, z);
    } else {
      for (std::int64_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    }
  };

  std::vector<double> r(n), z(n), p(n), Ap(n);
  A.spmv(u, r);
  for (std::int64_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
  const double bnorm = norm2(b);
  const std::int64_t max_iter = static_cast<std::int64_t>(options.max_iter_factor) * n;
  std::vector<double> history;
  history.push_back(norm2(r) / bnorm);

  if (history.back() > options.tol) {
    precondition(r, z);
    p = z;
    double rz = 0.0;
    for (std::int64_t i = 0; i < n; ++i) rz += r[i] * z[i];
    std::int64_t iter = 0;
    while (true) {
      if (iter++ >= max_iter) {
        std::ostringstream os;
        os << "CG did not reach relative residual " << options.tol << " within " << max_iter
           << " iterations (current " << history.back() << ")";
        throw SolverError(os.str(), history);
      }
      A.spmv(p, Ap);
      double pAp = 0.0;
      for (std::int64_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
      const double alpha = rz / pAp;
      for (std::int64_t i = 0; i < n; ++i) {
        u[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
      }
      history.push_back(norm2(r) / bnorm);
      if (history.back() <= options.tol) break;
      precondition(r, z);
      double rz_new = 0.0;
      for (std::int64_t i = 0; i < n; ++i) rz_new += r[i] * z[i];
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::int64_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
  }

  return FeSolution{grid, std::move(u)};
}

double qoi_point(const FeSolution& sol, double x, double y) {
  const GridSpec& g = sol.grid;
  if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
    throw ConfigError("qoi_point: point outside [0,1]^2");
  const int m0 = g.m(0), m1 = g.m(1);
  const int i = std::min(static_cast<int>(x * m0), m0 - 1);
  const int j = std::min(static_cast<int>(y * m1), m1 - 1);
  const double xi = x * m0 - i, eta = y * m1 - j;

  const double u_ll = sol.u[g.node_index(i, j)];
  const double u_lr = sol.u[g.node_index(i + 1, j)];
  const double u_ur = sol.u[g.node_index(i + 1, j + 1)];
  const double u_ul = sol.u[g.node_index(i, j + 1)];
  if (eta <= xi)  // lower triangle (LL, LR, UR)
    return (1.0 - xi) * u_ll + (xi - eta) * u_lr + eta * u_ur;
  return (1.0 - eta) * u_ll + xi * u_ur + (eta - xi) * u_ul;
}

double qoi_l2norm(const FeSolution& sol) {
  const GridSpec& g = sol.grid;
  const double area = 0.5 * g.spacing(0) * g.spacing(1);
  double acc = 0.0;
  auto tri = [&](std::int64_t a, std::int64_t b, std::int64_t c) {
    const double ua = sol.u[a], ub = sol.u[b], uc = sol.u[c];
    const double sum = ua + ub + uc;
    acc += area / 12.0 * (ua * ua + ub * ub + uc * uc + sum * sum);
  };
  for (int j = 0; j < g.m(1); ++j) {
    for (int i = 0; i < g.m(0); ++i) {
      tri(g.node_index(i, j), g.node_index(i + 1, j), g.node_index(i + 1, j + 1));
      tri(g.node_index(i, j), g.node_index(i + 1, j + 1), g.node_index(i, j + 1));
    }
  }
  return std::sqrt(acc);
}

}  // namespace oscfield
