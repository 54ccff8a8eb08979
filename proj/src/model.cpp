#include "fgam/model.hpp"

#include "fgam/errors.hpp"

#include <cmath>
#include <vector>

namespace fgam {

SurfaceModel::SurfaceModel(const SparseFunctionalDataset& data, const FpcaResult& fpca,
                           const BasisConfig& cfg)
    : cfg_(cfg),
      grid_(fpca.grid),
      bx_(SplineBasis::uniform(cfg.kx, cfg.degree, 0.0, 1.0)), // replaced below
      bt_(SplineBasis::uniform(cfg.kt, cfg.degree, grid_.t[0], grid_.t[grid_.t.size() - 1])),
      Phi_(fpca.Phi),
      mu_(fpca.mu),
      nu_(fpca.nu) {
    // x-basis range: span of the initial trajectories, widened on both sides
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
    for (int i = 0; i < data.size(); ++i) {
        Eigen::VectorXd traj = mu_ + Phi_ * fpca.scores.row(i).transpose();
        xlo = std::min(xlo, traj.minCoeff());
        xhi = std::max(xhi, traj.maxCoeff());
    }
    if (!(xhi > xlo)) { // constant trajectories still need a nonempty domain
        xlo -= 0.5;
        xhi += 0.5;
    }
    const double pad = cfg.domain_expand * (xhi - xlo);
    bx_ = SplineBasis::uniform(cfg.kx, cfg.degree, xlo - pad, xhi + pad);

    PenaltyPair pen = build_penalties(cfg.kx, cfg.kt, cfg.dx, cfg.dt);
    rb_ = diagonalize(pen, difference_matrix(cfg.kx, cfg.dx).gram, difference_matrix(cfg.kt, cfg.dt).gram);

    // cache the t-basis band on the grid
    const int T = static_cast<int>(grid_.t.size());
    bt_first_.resize(T, 1);
    bt_vals_.resize(T, cfg.degree + 1);
    std::vector<double> buf(cfg.degree + 1);
    for (int r = 0; r < T; ++r) {
        int first;
        bt_.eval_local(grid_.t[r], 0, first, buf.data());
        bt_first_(r, 0) = first;
        for (int a = 0; a <= cfg.degree; ++a) bt_vals_(r, a) = buf[a];
    }

    PhiL_ = Phi_.transpose() * grid_.L.asDiagonal();

    // per-subject caches
    subjects_.reserve(data.size());
    U_.resize(data.size(), data.p0);
    y_.resize(data.size());
    for (int i = 0; i < data.size(); ++i) {
        subjects_.push_back(make_subject_work(data.subjects[i]));
        U_.row(i) = data.subjects[i].u.transpose();
        y_[i] = data.subjects[i].y;
    }
}

SubjectWork SurfaceModel::make_subject_work(const Subject& s) const {
    SubjectWork w;
    w.t = s.t;
    const int M = this->M();
    w.Phi_t.resize(s.t.size(), M);
    for (int m = 0; m < M; ++m) w.Phi_t.col(m) = interp_linear(grid_.t, Phi_.col(m), s.t);
    Eigen::VectorXd mu_t = interp_linear(grid_.t, mu_, s.t);
    w.xc = s.x - mu_t;
    w.PtP = w.Phi_t.transpose() * w.Phi_t;
    w.Phix = w.Phi_t.transpose() * w.xc;
    w.y = s.y;
    w.u = s.u;
    return w;
}

Eigen::VectorXd SurfaceModel::design_row(const Eigen::VectorXd& x, ClampCounter* cc) const {
    const int T = static_cast<int>(grid_.t.size());
    if (static_cast<int>(x.size()) != T) throw std::invalid_argument("design_row: trajectory length mismatch");
    const int Kt = cfg_.kt;
    const int deg = cfg_.degree;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(K());
    std::vector<double> bxv(deg + 1);
    for (int r = 0; r < T; ++r) {
        double xv = x[r];
        if (!std::isfinite(xv)) throw NumericError("design_row: non-finite trajectory value");
        if (cc) {
            ++cc->total;
            if (xv < bx_.lo() || xv > bx_.hi()) ++cc->clamped;
        }
        int fx;
        bx_.eval_local(xv, 0, fx, bxv.data());
        const int ft = bt_first_(r, 0);
        const double L = grid_.L[r];
        for (int a = 0; a <= deg; ++a) {
            const double va = L * bxv[a];
            double* zrow = z.data() + (fx + a) * Kt + ft;
            for (int b = 0; b <= deg; ++b) zrow[b] += va * bt_vals_(r, b);
        }
    }
    return z;
}

void SurfaceModel::design_row_derivs(const Eigen::VectorXd& x, Eigen::VectorXd& z, Eigen::MatrixXd& B1,
                                     Eigen::MatrixXd& B2, ClampCounter* cc) const {
    const int T = static_cast<int>(grid_.t.size());
    if (static_cast<int>(x.size()) != T) throw std::invalid_argument("design_row_derivs: trajectory length mismatch");
    const int Kt = cfg_.kt;
    const int deg = cfg_.degree;
    z = Eigen::VectorXd::Zero(K());
    B1 = Eigen::MatrixXd::Zero(T, K());
    B2 = Eigen::MatrixXd::Zero(T, K());
    std::vector<double> b0(deg + 1), b1(deg + 1), b2(deg + 1);
    for (int r = 0; r < T; ++r) {
        double xv = x[r];
        if (!std::isfinite(xv)) throw NumericError("design_row_derivs: non-finite trajectory value");
        const bool outside = xv < bx_.lo() || xv > bx_.hi();
        if (cc) {
            ++cc->total;
            if (outside) ++cc->clamped;
        }
        int fx;
        bx_.eval_local(xv, 0, fx, b0.data());
        int fx1, fx2;
        bx_.eval_local(xv, 1, fx1, b1.data());
        bx_.eval_local(xv, 2, fx2, b2.data());
        const int ft = bt_first_(r, 0);
        const double L = grid_.L[r];
        for (int a = 0; a <= deg; ++a) {
            const int col0 = (fx + a) * Kt + ft;
            for (int b = 0; b <= deg; ++b) {
                const double btv = bt_vals_(r, b);
                z[col0 + b] += L * b0[a] * btv;
                // the clamped row is constant in the trajectory value, so its
                // derivatives vanish outside the domain
                if (!outside) {
                    B1(r, col0 + b) = b1[a] * btv;
                    B2(r, col0 + b) = b2[a] * btv;
                }
            }
        }
    }
}

void SurfaceModel::design_row_derivs_banded(const Eigen::VectorXd& x, Eigen::VectorXd& z,
                                            DesignDerivs& dd, ClampCounter* cc) const {
    const int T = static_cast<int>(grid_.t.size());
    if (static_cast<int>(x.size()) != T) throw std::invalid_argument("design_row_derivs: trajectory length mismatch");
    const int Kt = cfg_.kt;
    const int deg = cfg_.degree;
    const int band = (deg + 1) * (deg + 1);
    z = Eigen::VectorXd::Zero(K());
    dd.band = band;
    dd.col.assign(static_cast<std::size_t>(T) * band, 0);
    dd.d1.assign(static_cast<std::size_t>(T) * band, 0.0);
    dd.d2.assign(static_cast<std::size_t>(T) * band, 0.0);
    std::vector<double> b0(deg + 1), b1(deg + 1), b2(deg + 1);
    for (int r = 0; r < T; ++r) {
        const double xv = x[r];
        if (!std::isfinite(xv)) throw NumericError("design_row_derivs: non-finite trajectory value");
        const bool outside = xv < bx_.lo() || xv > bx_.hi();
        if (cc) {
            ++cc->total;
            if (outside) ++cc->clamped;
        }
        int fx;
        bx_.eval_local(xv, 0, fx, b0.data());
        int fdum;
        bx_.eval_local(xv, 1, fdum, b1.data());
        bx_.eval_local(xv, 2, fdum, b2.data());
        const int ft = bt_first_(r, 0);
        const double L = grid_.L[r];
        std::size_t e = static_cast<std::size_t>(r) * band;
        for (int a = 0; a <= deg; ++a) {
            const int col0 = (fx + a) * Kt + ft;
            for (int b = 0; b <= deg; ++b, ++e) {
                const double btv = bt_vals_(r, b);
                z[col0 + b] += L * b0[a] * btv;
                dd.col[e] = col0 + b;
                if (!outside) {
                    dd.d1[e] = b1[a] * btv;
                    dd.d2[e] = b2[a] * btv;
                }
            }
        }
    }
}

Eigen::VectorXd SurfaceModel::surface_basis_row(double x, double t) const {
    const int Kt = cfg_.kt;
    const int deg = cfg_.degree;
    Eigen::VectorXd row = Eigen::VectorXd::Zero(K());
    std::vector<double> bxv(deg + 1), btv(deg + 1);
    int fx, ft;
    bx_.eval_local(x, 0, fx, bxv.data());
    bt_.eval_local(t, 0, ft, btv.data());
    for (int a = 0; a <= deg; ++a)
        for (int b = 0; b <= deg; ++b) row[(fx + a) * Kt + ft + b] = bxv[a] * btv[b];
    return row;
}

double SurfaceModel::surface_at(double x, double t, const Eigen::VectorXd& theta) const {
    return surface_basis_row(x, t).dot(theta);
}

} // namespace fgam
