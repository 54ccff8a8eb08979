#include "fgam/design.hpp"

#include "fgam/errors.hpp"

#include <cmath>
#include <vector>

namespace fgam {

Eigen::VectorXd tensor_design_row(const Eigen::VectorXd& x, const SplineBasis& bx,
                                  const SplineBasis& bt, const WorkingGrid& grid, ClampCounter* cc) {
    const Eigen::Index T = grid.t.size();
    if (x.size() != T) throw std::invalid_argument("tensor_design_row: trajectory length mismatch");
    const int Kt = bt.num_basis();
    Eigen::VectorXd z = Eigen::VectorXd::Zero(bx.num_basis() * Kt);
    std::vector<double> bxv(bx.degree() + 1), btv(bt.degree() + 1);
    for (Eigen::Index r = 0; r < T; ++r) {
        if (!std::isfinite(x[r])) throw NumericError("tensor_design_row: non-finite trajectory value");
        if (cc) {
            ++cc->total;
            if (x[r] < bx.lo() || x[r] > bx.hi()) ++cc->clamped;
        }
        int fx, ft;
        bx.eval_local(x[r], 0, fx, bxv.data());
        bt.eval_local(grid.t[r], 0, ft, btv.data());
        for (int a = 0; a <= bx.degree(); ++a) {
            const double va = grid.L[r] * bxv[a];
            for (int b = 0; b <= bt.degree(); ++b) z[(fx + a) * Kt + ft + b] += va * btv[b];
        }
    }
    return z;
}

Eigen::VectorXd tensor_basis_row(double x, double t, const SplineBasis& bx, const SplineBasis& bt) {
    const int Kt = bt.num_basis();
    Eigen::VectorXd row = Eigen::VectorXd::Zero(bx.num_basis() * Kt);
    std::vector<double> bxv(bx.degree() + 1), btv(bt.degree() + 1);
    int fx, ft;
    bx.eval_local(x, 0, fx, bxv.data());
    bt.eval_local(t, 0, ft, btv.data());
    for (int a = 0; a <= bx.degree(); ++a)
        for (int b = 0; b <= bt.degree(); ++b) row[(fx + a) * Kt + ft + b] = bxv[a] * btv[b];
    return row;
}

} // namespace fgam
