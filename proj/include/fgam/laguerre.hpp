#pragma once

#include <Eigen/Dense>

namespace fgam {

// Generalized Gauss-Laguerre rule: sum_g w_g f(x_g) = ∫ f(x) x^alpha e^{-x} dx
// exactly for polynomials f up to degree 2G-1.
struct LaguerreRule {
    int G = 0;
    double alpha = 0.0;
    Eigen::VectorXd nodes;   // positive, increasing
    Eigen::VectorXd weights; // positive
};

LaguerreRule gauss_laguerre(int G, double alpha);

} // namespace fgam
