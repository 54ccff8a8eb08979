#pragma once

#include "fgam/bspline.hpp"

#include <Eigen/Dense>

namespace fgam {

// Penalized least-squares spline smoothers with GCV over a fixed log-spaced
// smoothing grid.  Used by the FPCA initialization only.

struct GcvFit {
    Eigen::VectorXd coefs;
    double lambda = 0.0;
    double gcv = 0.0;
};

// Univariate P-spline: y ~ sum_j B_j(x) c_j with d-th difference penalty.
GcvFit psmooth_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const SplineBasis& basis,
                   int penalty_order);

// Tensor-product P-spline on scattered (s,t) points with the same marginal
// basis/penalty in both directions and a single GCV-chosen lambda.
GcvFit psmooth_fit_tensor(const Eigen::VectorXd& s, const Eigen::VectorXd& t,
                          const Eigen::VectorXd& y, const SplineBasis& basis, int penalty_order);

// Normal-equation GCV core shared by both fits.
GcvFit gcv_solve(const Eigen::MatrixXd& XtX, const Eigen::VectorXd& Xty, double yty, long n,
                 const Eigen::MatrixXd& P);

} // namespace fgam
