#pragma once

#include "fgam/bspline.hpp"
#include "fgam/dataset.hpp"

#include <Eigen/Dense>
#include <optional>

namespace fgam {

struct FpcaOptions {
    int grid_size = 50;
    double pve = 0.99;
    int max_pcs = -1;          // -1: no cap
    int mean_bases = 15;       // cubic P-spline for the pooled mean
    int cov_bases = 10;        // per margin, cubic tensor smoother
    int cov_penalty_order = 3; // shrinks toward quadratic surfaces
    std::optional<double> grid_lo, grid_hi; // default: pooled observation range
};

struct FpcaResult {
    WorkingGrid grid;
    Eigen::VectorXd mu;     // mean on the grid
    Eigen::MatrixXd Phi;    // T x M, quadrature-orthonormal columns
    Eigen::VectorXd nu;     // positive, decreasing
    double sigma_x2 = 0.0;
    Eigen::MatrixXd scores; // N x M BLUPs
    double pve = 0.0;       // fraction of positive spectrum retained
    bool noise_floored = false;
    bool ill_conditioned = false;
};

struct NoiseEstimate {
    double value = 0.0;
    bool floored = false;
};

Eigen::VectorXd estimate_mean(const SparseFunctionalDataset& data, const WorkingGrid& grid,
                              int mean_bases = 15);

Eigen::MatrixXd estimate_covariance(const SparseFunctionalDataset& data, const WorkingGrid& grid,
                                    const Eigen::VectorXd& mean, int cov_bases = 10,
                                    int penalty_order = 3);

// Surface fit from raw product triples (s_i, t_i, v_i); rows with s_i == t_i
// are ignored.
Eigen::MatrixXd estimate_covariance_from_products(const Eigen::VectorXd& s, const Eigen::VectorXd& t,
                                                  const Eigen::VectorXd& v, const WorkingGrid& grid,
                                                  int cov_bases = 10, int penalty_order = 3);

// Mean of raw-minus-smooth variance over the middle two thirds of the grid,
// floored at `floor_value`.
NoiseEstimate estimate_noise_variance(const Eigen::VectorXd& raw_diag,
                                      const Eigen::VectorXd& smooth_diag, double floor_value);

// 1-based index window [first, last] covering the middle two thirds of a
// length-T grid.
void middle_two_thirds(int T, int& first, int& last);

// Eigenpairs of the covariance operator: quadrature-weighted symmetric
// eigenproblem, negatives dropped, columns normalized to unit quadrature norm.
void eigendecompose(const Eigen::MatrixXd& G, const WorkingGrid& grid, double pve_target,
                    int max_M, Eigen::VectorXd& nu, Eigen::MatrixXd& Phi, double* pve_out = nullptr);

// BLUP scores for one subject given eigenfunction/mean values at its times.
Eigen::VectorXd blup_scores(const Eigen::VectorXd& centered_x, const Eigen::MatrixXd& Phi_t,
                            const Eigen::VectorXd& nu, double sigma_x2);

FpcaResult pace_init(const SparseFunctionalDataset& data, const FpcaOptions& opts = {});

} // namespace fgam
