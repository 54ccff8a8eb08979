#pragma once

#include "fgam/dataset.hpp"
#include "fgam/fpca.hpp"
#include "fgam/mcmc.hpp"
#include "fgam/vb.hpp"

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace fgam {

enum class SurfaceKind { F1, F2 }; // F1: 2x sin(pi t) on [0,1]; F2: 20 cos(-x/8 + t/4 - 5) on [0,10]

struct Scenario {
    SurfaceKind surface = SurfaceKind::F1;
    int J = 10;             // observed points per subject, sampled from the 50-grid
    double sigma_x = 1.0;   // measurement error SD
    int N = 100;
    double train_fraction = 2.0 / 3.0;
    std::uint64_t seed = 1;
    int grid_size = 50;
};

struct GroundTruth {
    WorkingGrid grid;        // generation grid
    Eigen::MatrixXd scores;  // N x 4
    Eigen::MatrixXd X;       // N x T dense true trajectories
    Eigen::VectorXd y_clean; // responses before noise
    SurfaceKind surface = SurfaceKind::F1;
    double domain = 1.0;     // |T|

    double surface_value(double x, double t) const;
};

double surface_value(SurfaceKind kind, double x, double t);
double surface_domain(SurfaceKind kind);

std::pair<SparseFunctionalDataset, GroundTruth> generate_dataset(const Scenario& sc);

// In-sample trajectory error: sqrt of mean over subjects of the quadrature
// integral of (X - Xhat)^2.  Rows of estimates align with `index`.
double rmise_x(const GroundTruth& truth, const Eigen::MatrixXd& estimates,
               const std::vector<int>& index);

// Surface error integrated over the part of the evaluation grid inside the
// convex hull of the observed (x,t) trajectory points.
double rise_f(const std::function<double(double, double)>& truth,
              const std::function<double(double, double)>& estimate,
              const std::vector<std::pair<double, double>>& hull_points,
              const Eigen::VectorXd& x_axis, const Eigen::VectorXd& t_axis);

double rmse_y(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

// 2-D convex hull utilities (Andrew monotone chain + inclusion test).
std::vector<std::pair<double, double>> convex_hull(std::vector<std::pair<double, double>> pts);
bool point_in_hull(const std::vector<std::pair<double, double>>& hull, double x, double y);

// Functional linear model fit by Bayesian ridge on dense trajectories with a
// marginal-likelihood smoothing parameter.
struct FlmFit {
    SplineBasis bt;
    Eigen::VectorXd coef_b; // spline coefficients of beta(t)
    Eigen::VectorXd eta0;   // offset coefficients (leading intercept)
    double lambda = 0.0;
    double sigma2 = 0.0;

    FlmFit() : bt(SplineBasis::uniform(4, 3, 0.0, 1.0)) {}
    double beta_at(double t) const;
    double predict(const Eigen::VectorXd& x_dense, const WorkingGrid& grid,
                   const Eigen::VectorXd& u) const;
};

FlmFit flm_baseline(const std::vector<Eigen::VectorXd>& X_dense, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& U, const WorkingGrid& grid, int Kt = 10, int dt = 2);

// Simulation harness.
enum class Method { Mcmc, Vb, VbMcmc, TrueX, Flm, PaceTwoStep };
std::string method_name(Method m);

struct HarnessOptions {
    McmcConfig mcmc;       // iters/burnin/thin for the plain sampler
    McmcConfig mcmc_warm;  // for the VB-warm-started chain (1000/500 default)
    VbConfig vb;
    FpcaOptions fpca;
    HarnessOptions() {
        mcmc_warm.iters = 1000;
        mcmc_warm.burnin = 500;
        fpca.max_pcs = 4;
    }
};

struct MetricRow {
    int replication = 0;
    std::string method;
    std::string metric; // rmise_x | rise_f | rmse_y | seconds
    double value = 0.0;
};

struct ScenarioReport {
    Scenario scenario;
    std::vector<MetricRow> rows;

    std::vector<double> values(const std::string& method, const std::string& metric) const;
    double median(const std::string& method, const std::string& metric) const;
    double mean(const std::string& method, const std::string& metric) const;
};

ScenarioReport run_scenario(const Scenario& sc, const std::vector<Method>& methods,
                            int replications, const HarnessOptions& opts = {});

double median_of(std::vector<double> v);

} // namespace fgam
