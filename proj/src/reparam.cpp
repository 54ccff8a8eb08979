#include "fgam/reparam.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Eigenvalues>
#include <cassert>
#include <cmath>
#include <vector>

namespace fgam {

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
    Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j) K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

// Spectral decomposition with eigenvalues sorted descending.
void eig_desc(const Eigen::MatrixXd& G, Eigen::VectorXd& vals, Eigen::MatrixXd& vecs) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success) throw NumericError("reparam: eigendecomposition failed");
    const Eigen::Index n = G.rows();
    vals.resize(n);
    vecs.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        vals[i] = es.eigenvalues()[n - 1 - i];
        vecs.col(i) = es.eigenvectors().col(n - 1 - i);
    }
}

} // namespace

PenaltyPair build_penalties(int Kx, int Kt, int dx, int dt) {
    if (dx < 1 || dx >= Kx || dt < 1 || dt >= Kt)
        throw std::invalid_argument("build_penalties: invalid difference orders");
    Eigen::MatrixXd gx(Kx, Kx), gt(Kt, Kt);
    {
        Eigen::MatrixXd Dx = Eigen::MatrixXd::Zero(Kx - dx, Kx);
        Eigen::MatrixXd Dt = Eigen::MatrixXd::Zero(Kt - dt, Kt);
        // reuse the shared builder via small local copies
        auto fill = [](Eigen::MatrixXd& D, int K, int d) {
            Eigen::VectorXd coef = Eigen::VectorXd::Zero(d + 1);
            coef[0] = 1.0;
            for (int row = 1; row <= d; ++row)
                for (int j = row; j >= 1; --j) coef[j] += coef[j - 1];
            for (int i = 0; i < K - d; ++i)
                for (int m = 0; m <= d; ++m) D(i, i + m) = coef[m] * (((d - m) % 2 == 0) ? 1.0 : -1.0);
        };
        fill(Dx, Kx, dx);
        fill(Dt, Kt, dt);
        gx = Dx.transpose() * Dx;
        gt = Dt.transpose() * Dt;
    }
    PenaltyPair pen;
    pen.Kx = Kx;
    pen.Kt = Kt;
    pen.dx = dx;
    pen.dt = dt;
    pen.Px = kron(gx, Eigen::MatrixXd::Identity(Kt, Kt));
    pen.Pt = kron(Eigen::MatrixXd::Identity(Kx, Kx), gt);
    return pen;
}

ReparamBasis diagonalize(const PenaltyPair& pen, const Eigen::MatrixXd& gram_x,
                         const Eigen::MatrixXd& gram_t) {
    const int Kx = pen.Kx, Kt = pen.Kt, dx = pen.dx, dt = pen.dt;
    if (gram_x.rows() != Kx || gram_t.rows() != Kt)
        throw std::invalid_argument("diagonalize: marginal gram dimensions do not match penalties");
    if ((gram_x - gram_x.transpose()).cwiseAbs().maxCoeff() > 1e-10 ||
        (gram_t - gram_t.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("diagonalize: marginal grams must be symmetric");

    Eigen::VectorXd Sx, St;
    Eigen::MatrixXd Vx, Vt;
    eig_desc(gram_x, Sx, Vx);
    eig_desc(gram_t, St, Vt);
    if (Sx.minCoeff() < -1e-8 * std::abs(Sx.maxCoeff()) || St.minCoeff() < -1e-8 * std::abs(St.maxCoeff()))
        throw NumericError("diagonalize: marginal gram not positive semidefinite");

    // zero detection relative to the largest eigenvalue
    const double tol_x = 1e-10 * Sx.maxCoeff();
    const double tol_t = 1e-10 * St.maxCoeff();
    auto zero_count = [](const Eigen::VectorXd& s, double tol) {
        int c = 0;
        for (Eigen::Index i = 0; i < s.size(); ++i)
            if (s[i] < tol) ++c;
        return c;
    };
    if (zero_count(Sx, tol_x) != dx || zero_count(St, tol_t) != dt)
        throw NumericError("diagonalize: marginal nullspace dimension differs from difference order");

    const int K = Kx * Kt;
    const int d0 = dx * dt;

    // Descending order puts the zero eigenvalues (and their eigenvectors) last.
    Eigen::MatrixXd Vx0 = Vx.rightCols(dx);
    Eigen::MatrixXd Vt0 = Vt.rightCols(dt);

    ReparamBasis rb;
    rb.null_dim = d0;
    rb.T0 = kron(Vx0, Vt0);

    // Penalized block: columns of V_x ⊗ V_t with a nonzero eigenvalue sum,
    // scaled by the inverse square root of that sum.
    Eigen::MatrixXd V = kron(Vx, Vt);
    std::vector<int> keep;
    keep.reserve(K - d0);
    // eigenvalues below tolerance are treated as exact zeros so the psi
    // diagonals stay inside [0,1]
    Eigen::VectorXd sx_clean = Sx, st_clean = St;
    for (int j = 0; j < Kx; ++j)
        if (Sx[j] < tol_x) sx_clean[j] = 0.0;
    for (int k = 0; k < Kt; ++k)
        if (St[k] < tol_t) st_clean[k] = 0.0;
    Eigen::VectorXd sums(K);
    for (int j = 0; j < Kx; ++j)
        for (int k = 0; k < Kt; ++k) {
            const int c = j * Kt + k;
            sums[c] = sx_clean[j] + st_clean[k];
            if (sums[c] > 0.0) keep.push_back(c);
        }
    if (static_cast<int>(keep.size()) != K - d0) throw NumericError("diagonalize: penalized column count mismatch");

    rb.Tp.resize(K, K - d0);
    rb.psi_x.resize(K - d0);
    rb.psi_t.resize(K - d0);
    rb.stx.resize(K - d0);
    Eigen::MatrixXd Tp_unscaled(K, K - d0);
    for (int c = 0; c < K - d0; ++c) {
        const int col = keep[c];
        const int j = col / Kt, k = col % Kt;
        const double s = sums[col];
        rb.stx[c] = s;
        Tp_unscaled.col(c) = V.col(col);
        rb.Tp.col(c) = V.col(col) / std::sqrt(s);
        rb.psi_x[c] = sx_clean[j] / s;
        rb.psi_t[c] = 1.0 - rb.psi_x[c];
    }

    rb.T.resize(K, K);
    rb.T << rb.T0, rb.Tp;
    // explicit inverse: [T0 : Tp_unscaled * S̃^{1/2}]^T
    Eigen::MatrixXd right = Tp_unscaled * rb.stx.cwiseSqrt().asDiagonal();
    rb.Tinv.resize(K, K);
    rb.Tinv << rb.T0, right;
    rb.Tinv.transposeInPlace();

#ifndef NDEBUG
    {
        // congruence identity guard against ordering bugs
        const double lx = 0.7, lt = 2.3;
        Eigen::MatrixXd P = lx * pen.Px + lt * pen.Pt;
        Eigen::MatrixXd W = rb.T.transpose() * P * rb.T;
        Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(K, K);
        expect.bottomRightCorner(K - d0, K - d0) =
            (lx * rb.psi_x + lt * rb.psi_t).asDiagonal();
        assert((W - expect).cwiseAbs().maxCoeff() < 1e-8);
        assert((rb.Tinv * rb.T - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff() < 1e-8);
    }
#endif
    return rb;
}

void ReparamBasis::split_design_row(const Eigen::VectorXd& z, Eigen::VectorXd& z0,
                                    Eigen::VectorXd& zp) const {
    if (z.size() != T.rows()) throw std::invalid_argument("split_design_row: dimension mismatch");
    z0 = T0.transpose() * z;
    zp = Tp.transpose() * z;
}

Eigen::VectorXd ReparamBasis::reconstruct_theta(const Eigen::VectorXd& beta,
                                                const Eigen::VectorXd& delta) const {
    if (beta.size() != null_dim || delta.size() != Tp.cols())
        throw std::invalid_argument("reconstruct_theta: dimension mismatch");
    return T0 * beta + Tp * delta;
}

void ReparamBasis::split_theta(const Eigen::VectorXd& theta, Eigen::VectorXd& beta,
                               Eigen::VectorXd& delta) const {
    if (theta.size() != T.rows()) throw std::invalid_argument("split_theta: dimension mismatch");
    Eigen::VectorXd bd = Tinv * theta;
    beta = bd.head(null_dim);
    delta = bd.tail(bd.size() - null_dim);
}

} // namespace fgam
