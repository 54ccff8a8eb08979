#include "fgam/psmooth.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

namespace fgam {

GcvFit gcv_solve(const Eigen::MatrixXd& XtX, const Eigen::VectorXd& Xty, double yty, long n,
                 const Eigen::MatrixXd& P) {
    const Eigen::Index p = XtX.rows();
    // tiny ridge keeps sparse designs solvable; the nullspace of P is
    // otherwise unregularized
    const double ridge = 1e-12 * (XtX.trace() / static_cast<double>(p) + 1.0);
    Eigen::MatrixXd base = XtX + ridge * Eigen::MatrixXd::Identity(p, p);

    GcvFit best;
    best.gcv = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 21; ++k) {
        const double lambda = std::pow(10.0, -4.0 + 8.0 * k / 20.0);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(base + lambda * P);
        if (ldlt.info() != Eigen::Success) continue;
        Eigen::VectorXd c = ldlt.solve(Xty);
        const double rss = yty - 2.0 * c.dot(Xty) + c.dot(XtX * c);
        const double edf = (ldlt.solve(XtX)).trace();
        const double denom = static_cast<double>(n) - edf;
        if (denom <= 1.0) continue;
        const double gcv = static_cast<double>(n) * std::max(rss, 0.0) / (denom * denom);
        if (gcv < best.gcv) {
            best.gcv = gcv;
            best.lambda = lambda;
            best.coefs = c;
        }
    }
    if (!best.coefs.size()) throw NumericError("psmooth: GCV search failed on every lambda");
    return best;
}

GcvFit psmooth_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const SplineBasis& basis,
                   int penalty_order) {
    if (x.size() != y.size() || x.size() == 0) throw std::invalid_argument("psmooth_fit: bad input sizes");
    const int K = basis.num_basis();
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(K, K);
    Eigen::VectorXd Xty = Eigen::VectorXd::Zero(K);
    double yty = 0.0;
    std::vector<double> buf(basis.degree() + 1);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        int first;
        basis.eval_local(x[i], 0, first, buf.data());
        for (int a = 0; a <= basis.degree(); ++a) {
            Xty[first + a] += buf[a] * y[i];
            for (int b = 0; b <= a; ++b) XtX(first + a, first + b) += buf[a] * buf[b];
        }
        yty += y[i] * y[i];
    }
    XtX = XtX.selfadjointView<Eigen::Lower>();
    const Eigen::MatrixXd P = difference_matrix(K, penalty_order).gram;
    return gcv_solve(XtX, Xty, yty, x.size(), P);
}

GcvFit psmooth_fit_tensor(const Eigen::VectorXd& s, const Eigen::VectorXd& t,
                          const Eigen::VectorXd& y, const SplineBasis& basis, int penalty_order) {
    if (s.size() != t.size() || s.size() != y.size() || s.size() == 0)
        throw std::invalid_argument("psmooth_fit_tensor: bad input sizes");
    const int K = basis.num_basis();
    const int KK = K * K;
    const int deg = basis.degree();
    const int band = deg + 1;
    Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(KK, KK);
    Eigen::VectorXd Xty = Eigen::VectorXd::Zero(KK);
    double yty = 0.0;
    std::vector<double> bs(band), bt(band);
    std::vector<double> row(band * band);
    std::vector<int> idx(band * band);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        int fs, ft;
        basis.eval_local(s[i], 0, fs, bs.data());
        basis.eval_local(t[i], 0, ft, bt.data());
        int m = 0;
        for (int a = 0; a < band; ++a)
            for (int b = 0; b < band; ++b) {
                row[m] = bs[a] * bt[b];
                idx[m] = (fs + a) * K + (ft + b);
                ++m;
            }
        for (int a = 0; a < m; ++a) {
            Xty[idx[a]] += row[a] * y[i];
            for (int b = 0; b < m; ++b) XtX(idx[a], idx[b]) += row[a] * row[b];
        }
        yty += y[i] * y[i];
    }
    const Eigen::MatrixXd g = difference_matrix(K, penalty_order).gram;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(KK, KK);
    // isotropic sum of marginal penalties: g ⊗ I + I ⊗ g
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) {
            P.block(a * K, b * K, K, K).diagonal().array() += g(a, b);
            if (a == b) P.block(a * K, b * K, K, K) += g;
        }
    return gcv_solve(XtX, Xty, yty, s.size(), P);
}

} // namespace fgam
