#pragma once

#include <Eigen/Dense>

namespace fgam {

// Kronecker penalties for the tensor-product coefficients, laid out with the
// x index outer and the t index inner.
struct PenaltyPair {
    Eigen::MatrixXd Px; // gram_x ⊗ I_Kt
    Eigen::MatrixXd Pt; // I_Kx ⊗ gram_t
    int Kx = 0, Kt = 0, dx = 0, dt = 0;
};

PenaltyPair build_penalties(int Kx, int Kt, int dx, int dt);

// Simultaneous diagonalization of the two marginal difference penalties:
// theta = T0*beta + Tp*delta with the penalty on delta reduced to
// lambda_x*PsiX + lambda_t*PsiT, PsiX + PsiT = I.
struct ReparamBasis {
    Eigen::MatrixXd T;    // [T0 : Tp]
    Eigen::MatrixXd Tinv; // explicit inverse, [T0 : (V_x ⊗ V_t) U S̃^{1/2}]^T
    Eigen::MatrixXd T0;   // K x d0 nullspace block
    Eigen::MatrixXd Tp;   // K x (K - d0) penalized block
    Eigen::VectorXd psi_x, psi_t; // diagonals, entries in [0,1], psi_x + psi_t = 1
    Eigen::VectorXd stx;          // positive diagonal of S̃ (penalized eigen-sums)
    int null_dim = 0;             // dx*dt

    int total_dim() const { return static_cast<int>(T.rows()); }
    int pen_dim() const { return total_dim() - null_dim; }

    // z0 = z^T T0, zp = z^T Tp for a design row z.
    void split_design_row(const Eigen::VectorXd& z, Eigen::VectorXd& z0, Eigen::VectorXd& zp) const;

    Eigen::VectorXd reconstruct_theta(const Eigen::VectorXd& beta, const Eigen::VectorXd& delta) const;

    // (beta, delta) = Tinv * theta.
    void split_theta(const Eigen::VectorXd& theta, Eigen::VectorXd& beta, Eigen::VectorXd& delta) const;
};

ReparamBasis diagonalize(const PenaltyPair& pen, const Eigen::MatrixXd& gram_x,
                         const Eigen::MatrixXd& gram_t);

} // namespace fgam
