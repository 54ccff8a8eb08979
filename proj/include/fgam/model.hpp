#pragma once

#include "fgam/bspline.hpp"
#include "fgam/dataset.hpp"
#include "fgam/design.hpp"
#include "fgam/fpca.hpp"
#include "fgam/reparam.hpp"

#include <Eigen/Dense>
#include <vector>

namespace fgam {

struct BasisConfig {
    int kx = 10, kt = 10;
    int degree = 3;
    int dx = 2, dt = 2;
    double domain_expand = 0.1; // widen the x-basis range by this fraction per side
};

// Per-subject quantities precomputed for the fitters.
struct SubjectWork {
    Eigen::VectorXd t;      // observation times
    Eigen::VectorXd xc;     // observed values minus interpolated mean
    Eigen::MatrixXd Phi_t;  // n_i x M eigenfunctions at t
    Eigen::MatrixXd PtP;    // Phi_t^T Phi_t
    double y = 0.0;
    Eigen::VectorXd u;      // offsets (leading intercept)
    Eigen::VectorXd Phix;   // Phi_t^T xc
};

// Everything the samplers share: working grid, marginal bases, diagonalized
// penalty, frozen FPCA pieces, and per-subject caches.
class SurfaceModel {
public:
    SurfaceModel(const SparseFunctionalDataset& data, const FpcaResult& fpca, const BasisConfig& cfg);

    const WorkingGrid& grid() const { return grid_; }
    const SplineBasis& basis_x() const { return bx_; }
    const SplineBasis& basis_t() const { return bt_; }
    const ReparamBasis& reparam() const { return rb_; }
    const Eigen::MatrixXd& Phi() const { return Phi_; }
    const Eigen::VectorXd& mu() const { return mu_; }
    const Eigen::VectorXd& nu() const { return nu_; }
    int M() const { return static_cast<int>(nu_.size()); }
    int n_subjects() const { return static_cast<int>(subjects_.size()); }
    const std::vector<SubjectWork>& subjects() const { return subjects_; }
    const Eigen::MatrixXd& U() const { return U_; }
    const Eigen::VectorXd& y() const { return y_; }
    int p0() const { return static_cast<int>(U_.cols()); }
    int K() const { return cfg_.kx * cfg_.kt; }
    const BasisConfig& config() const { return cfg_; }

    Eigen::VectorXd trajectory(const Eigen::VectorXd& xi) const { return mu_ + Phi_ * xi; }

    // Quadrature-weighted tensor design row z for a trajectory on the grid.
    Eigen::VectorXd design_row(const Eigen::VectorXd& x, ClampCounter* cc = nullptr) const;

    // Design row plus the grid-wise first/second x-derivative rows of the
    // tensor basis (unweighted): B1(r,c) = d/dx [B_c](x_r), likewise B2.
    void design_row_derivs(const Eigen::VectorXd& x, Eigen::VectorXd& z, Eigen::MatrixXd& B1,
                           Eigen::MatrixXd& B2, ClampCounter* cc = nullptr) const;

    // Banded form of the same derivatives: per grid row, `band` (column,
    // value) entries.  Derivative values are zero where x was clamped.
    struct DesignDerivs {
        int band = 0;
        std::vector<int> col;        // T * band
        std::vector<double> d1, d2;  // T * band
    };
    void design_row_derivs_banded(const Eigen::VectorXd& x, Eigen::VectorXd& z, DesignDerivs& dd,
                                  ClampCounter* cc = nullptr) const;

    // Phi^T diag(L), cached for the score-derivative chain rule.
    const Eigen::MatrixXd& PhiL() const { return PhiL_; }

    // Evaluate the fitted surface at scattered (x,t) points given theta.
    double surface_at(double x, double t, const Eigen::VectorXd& theta) const;
    Eigen::VectorXd surface_basis_row(double x, double t) const;

    // Prepares SubjectWork for out-of-sample subjects.
    SubjectWork make_subject_work(const Subject& s) const;

private:
    BasisConfig cfg_;
    WorkingGrid grid_;
    SplineBasis bx_, bt_;
    ReparamBasis rb_;
    Eigen::MatrixXd Phi_;
    Eigen::VectorXd mu_, nu_;
    std::vector<SubjectWork> subjects_;
    Eigen::MatrixXd U_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd PhiL_;
    // cached t-basis band per grid point
    Eigen::MatrixXi bt_first_;
    Eigen::MatrixXd bt_vals_;
};

} // namespace fgam
