#pragma once

#include "fgam/bspline.hpp"

#include <Eigen/Dense>

namespace fgam {

// Counts trajectory values that fell outside the x-basis domain and were
// clamped to its boundary.
struct ClampCounter {
    long clamped = 0;
    long total = 0;
};

// Quadrature-weighted tensor design row for a trajectory x on the grid:
// z[(j)*Kt + k] = sum_r L_r * Bx_j(x_r) * Bt_k(t_r)   (x outer, t inner).
Eigen::VectorXd tensor_design_row(const Eigen::VectorXd& x, const SplineBasis& bx,
                                  const SplineBasis& bt, const WorkingGrid& grid,
                                  ClampCounter* cc = nullptr);

// Unweighted tensor basis row at a single (x, t) point.
Eigen::VectorXd tensor_basis_row(double x, double t, const SplineBasis& bx, const SplineBasis& bt);

} // namespace fgam
