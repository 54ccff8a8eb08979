#pragma once

#include <Eigen/Dense>

namespace fgam {

// Univariate B-spline basis on a boundary-replicated knot vector.
// Evaluation points outside [lo, hi] are clamped to the boundary.
class SplineBasis {
public:
    // num_basis equally spaced basis functions of the given degree on [lo, hi].
    static SplineBasis uniform(int num_basis, int degree, double lo, double hi);

    int degree() const { return degree_; }
    int num_basis() const { return num_basis_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    const Eigen::VectorXd& knots() const { return knots_; }

    // Dense evaluation: rows index points, columns index basis functions.
    Eigen::MatrixXd eval(const Eigen::VectorXd& points) const;

    // Dense derivatives of the given order (1 or 2); requires order <= degree.
    Eigen::MatrixXd deriv(const Eigen::VectorXd& points, int order) const;

    // Banded evaluation: writes the degree+1 values (or deriv-th derivatives)
    // that can be nonzero at x into out[0..degree]; `first` receives the index
    // of the first of those basis functions.
    void eval_local(double x, int deriv_order, int& first, double* out) const;

    // Greville abscissae: coefficients c with sum_j c_j B_j(x) = x.
    Eigen::VectorXd greville() const;

private:
    SplineBasis(int degree, Eigen::VectorXd knots, int num_basis, double lo, double hi);

    int degree_;
    Eigen::VectorXd knots_; // length num_basis + degree + 1
    int num_basis_;
    double lo_, hi_;
};

// d-th order forward difference operator and its Gram matrix.
struct DifferencePenalty {
    int order = 0;
    Eigen::MatrixXd D;    // (K-d) x K
    Eigen::MatrixXd gram; // D^T D, K x K, rank K-d
};

DifferencePenalty difference_matrix(int K, int d);

// Quadrature grid for the time direction.
struct WorkingGrid {
    Eigen::VectorXd t; // increasing
    Eigen::VectorXd L; // trapezoid weights, sum = t(T-1) - t(0)
};

Eigen::VectorXd quadrature_weights(const Eigen::VectorXd& t);

WorkingGrid make_working_grid(double lo, double hi, int size);

// Linear interpolation of column vectors defined on grid.t to new points
// (clamped to the grid range).
Eigen::VectorXd interp_linear(const Eigen::VectorXd& grid_t, const Eigen::VectorXd& values,
                              const Eigen::VectorXd& points);

} // namespace fgam
