#include "fgam/laguerre.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace fgam {

// Golub-Welsch on the symmetric Jacobi matrix of the generalized Laguerre
// recurrence: diagonal 2k+alpha+1, off-diagonal sqrt(k(k+alpha)).
LaguerreRule gauss_laguerre(int G, double alpha) {
    if (G < 1) throw std::invalid_argument("gauss_laguerre: need G >= 1");
    if (!(alpha > -1.0)) throw std::invalid_argument("gauss_laguerre: need alpha > -1");
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(G, G);
    for (int k = 0; k < G; ++k) {
        J(k, k) = 2.0 * k + alpha + 1.0;
        if (k > 0) {
            const double b = std::sqrt(k * (k + alpha));
            J(k, k - 1) = b;
            J(k - 1, k) = b;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) throw NumericError("gauss_laguerre: eigensolver failed");
    LaguerreRule rule;
    rule.G = G;
    rule.alpha = alpha;
    rule.nodes = es.eigenvalues();
    rule.weights.resize(G);
    const double mu0 = std::tgamma(alpha + 1.0);
    for (int k = 0; k < G; ++k) {
        const double v0 = es.eigenvectors()(0, k);
        rule.weights[k] = mu0 * v0 * v0;
    }
    return rule;
}

} // namespace fgam
