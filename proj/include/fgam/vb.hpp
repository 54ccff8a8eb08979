#pragma once

#include "fgam/laguerre.hpp"
#include "fgam/mcmc.hpp"
#include "fgam/model.hpp"

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fgam {

struct VbConfig {
    double tol = 1e-6;
    int max_iters = 200;
    int laguerre_points = 25;
    double a_s = 0.01, b_s = 0.01;
    double a_x = 0.01, b_x = 0.01;
    double a_l = 0.01, b_l = 0.01;
    double sigma_beta2 = 1e6, sigma_eta2 = 1e6;
    BasisConfig basis;
    // Newton mode finder
    int newton_max = 50;
    double newton_tol = 1e-8;
    int backtrack_max = 30;

    void validate() const;
};

// Laplace site for one subject: mode, precision, and the Taylor moments of
// the design row used by all downstream updates.
struct ScoreSite {
    Eigen::VectorXd xi0;    // mode of log q(xi)
    Eigen::MatrixXd Lambda; // precision (negative Hessian at the mode)
    Eigen::MatrixXd Cov;    // Lambda^{-1}
    Eigen::VectorXd Eb;     // E[z_xi], length K
    Eigen::MatrixXd Ebb;    // E[z_xi z_xi^T], K x K
    bool regularized = false;
};

struct VbState {
    Eigen::VectorXd mu_eta0;
    Eigen::MatrixXd Sigma_eta0;
    Eigen::VectorXd mu_beta;
    Eigen::MatrixXd Sigma_beta;
    Eigen::VectorXd mu_delta;
    Eigen::MatrixXd Sigma_delta;
    double mu_lambda_x = 1.0, mu_lambda_t = 1.0;
    double B_sigma2 = 1.0, B_sigma_x2 = 1.0;
    // cached quadrature byproducts for the bound
    double E_log_lambda_x = 0.0, E_log_lambda_t = 0.0;
    double log_c_lambda_x = 0.0, log_c_lambda_t = 0.0;
    // Gamma rates frozen into the current q(lambda) factors; the bound needs
    // them whenever q(delta) has moved since the last lambda update
    double rate_lambda_x = 0.0, rate_lambda_t = 0.0;
    std::vector<ScoreSite> sites;
    std::vector<double> bound_trace;
    bool converged = false;
    int iterations = 0;
    int bound_decreases = 0;
    double worst_decrease = 0.0; // most negative relative step
    long clamped = 0, clamp_total = 0;
    double seconds = 0.0;

    // fixed shapes
    double shape_sigma2 = 0.0, shape_sigma_x2 = 0.0;
    double mu_inv_sigma2() const { return shape_sigma2 / B_sigma2; }
    double mu_inv_sigma_x2() const { return shape_sigma_x2 / B_sigma_x2; }
};

// Moment update for one smoothing parameter from its optimal density
// (determinant factor times a Gamma kernel), integrated by generalized
// Gauss-Laguerre after rescaling the Gamma rate into the weight function.
struct LambdaMoments {
    double mean = 0.0;
    double e_log = 0.0; // E[log lambda]
    double log_c = 0.0; // log normalizer of the unnormalized density
};
LambdaMoments lambda_moments(const Eigen::VectorXd& psi_axis, const Eigen::VectorXd& psi_other,
                             double mu_lambda_other, double rate, double a_l,
                             const LaguerreRule& rule);

class VbSolver {
public:
    VbSolver(const SurfaceModel& model, const VbConfig& cfg);

    VbState& state() { return state_; }
    const SurfaceModel& model() const { return model_; }
    const LaguerreRule& rule() const { return rule_; }

    // Algorithm blocks.  refresh_theta() must run before a score sweep.
    void refresh_theta();
    void laplace_update_scores(int subject);
    void update_q_eta0();
    void update_q_beta();
    void update_q_delta();
    void update_q_lambda(bool x_axis);
    void update_q_variances();
    double lower_bound(std::string* failed_component = nullptr) const;

    void iterate(); // one full sweep in the Algorithm order
    void run();

    // Laplace machinery shared with prediction: response precision weight can
    // be zeroed to drop the likelihood term.
    ScoreSite laplace_site(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                           const Eigen::VectorXd& xi_start) const;

    // Replace one subject's site (keeps the accumulated moments consistent).
    void set_site(int subject, const ScoreSite& site);

    // Install an externally stored state and rebuild the moment caches.
    void load_state(const VbState& state);

    // log q(xi) and derivatives at xi (exposed for the derivative oracle)
    void score_objective(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                         const Eigen::VectorXd& xi, double* value, Eigen::VectorXd* grad,
                         Eigen::MatrixXd* hess) const;

private:
    // one full evaluation at xi; design-row pieces are kept for reuse
    struct ScoreEval {
        double value = 0.0;
        Eigen::VectorXd grad;
        Eigen::MatrixXd hess;
        Eigen::VectorXd z;
        Eigen::MatrixXd Dz;
        SurfaceModel::DesignDerivs dd;
    };
    void eval_score(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                    const Eigen::VectorXd& xi, ScoreEval& ev) const;

public:

private:
    const SurfaceModel& model_;
    VbConfig cfg_;
    VbState state_;
    LaguerreRule rule_;
    // current theta summaries
    Eigen::VectorXd mu_theta_;
    Eigen::MatrixXd Sigma_theta_;
    // accumulated score moments
    Eigen::MatrixXd sum_Ebb_;   // K x K
    Eigen::MatrixXd EZ_;        // N x K rows Eb_i
    mutable ClampCounter clamps_;
};

VbState run_vb(const SparseFunctionalDataset& data, const FpcaResult& fpca, const VbConfig& cfg);

// Plug-in predictions; the score update runs with the response term disabled.
Eigen::VectorXd predict_vb(const VbState& state, const SurfaceModel& model,
                           const std::vector<Subject>& subjects, const VbConfig& cfg);

// Warm start for the sampler from a converged variational fit.
McmcState vb_to_mcmc_state(const VbState& state);

} // namespace fgam
