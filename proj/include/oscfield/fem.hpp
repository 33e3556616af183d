#pragma once

#include <vector>

#include "oscfield/embedding.hpp"
#include "oscfield/grid.hpp"

namespace oscfield {

enum class Forcing { Zero, Constant };

/**
 * Log-normal Darcy flow problem on [0,1]^2 with the flow-cell boundary
 * conditions: u = 1 at x = 0, u = 0 at x = 1, homogeneous Neumann at
 * y in {0,1}. The conductivity is k = exp(Z) from nodal log-field values.
 */
struct DarcyProblem {
  GridSpec grid;
  FieldSample log_field;
  Forcing forcing = Forcing::Constant;
  double forcing_value = 1.0;
};

struct FeSolution {
  GridSpec grid;
  std::vector<double> u;  // nodal values, dimension 0 fastest
};

enum class Preconditioner { Jacobi, Multigrid };

struct SolverOptions {
  double tol = 1e-10;        // relative residual target
  int max_iter_factor = 10;  // iteration cap = factor * node count
  Preconditioner precond = Preconditioner::Jacobi;
};

/**
 * P1 finite element solve: each cell splits into two triangles along the
 * lower-left to upper-right diagonal, the element conductivity is the nodal
 * average of exp(Z) over the triangle vertices (trapezoidal rule), Dirichlet
 * data is imposed by symmetric row/column elimination, and the SPD system is
 * solved by preconditioned conjugate gradients.
 *
 * Throws SolverError with the residual history if CG does not reach the
 * relative residual within the iteration cap.
 */
FeSolution assemble_and_solve(const DarcyProblem& problem, const SolverOptions& options = {});

/// P1 interpolation of the solution at an interior point; ties on the cell
/// diagonal go to the lower triangle (the interpolant is continuous there).
double qoi_point(const FeSolution& sol, double x, double y);

/// Exact L2 norm of the FE function, sqrt(u^T M u) with the consistent P1 mass matrix.
double qoi_l2norm(const FeSolution& sol);

}  // namespace oscfield
