#pragma once

#include "fgam/model.hpp"
#include "fgam/rng.hpp"

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

namespace fgam {

struct McmcConfig {
    int iters = 10000;
    int burnin = 1000;
    int thin = 1;
    std::uint64_t seed = 1;
    // inverse-gamma / gamma hyperparameters and flat-normal prior variances
    double a_s = 0.01, b_s = 0.01;
    double a_x = 0.01, b_x = 0.01;
    double a_l = 0.01, b_l = 0.01;
    double sigma_beta2 = 1e6, sigma_eta2 = 1e6;
    double slice_r0 = 2.0; // initial stepping-out interval [0, r0]
    int slice_max_doublings = 60;
    BasisConfig basis;
    bool update_scores = true;  // false: ridge fit with the trajectories frozen
    bool update_sigma_x = true; // frozen together with the scores for oracle fits

    void validate() const;
};

struct McmcState {
    Eigen::VectorXd eta0;
    Eigen::VectorXd beta;
    Eigen::VectorXd delta;
    double lambda_x = 1.0, lambda_t = 1.0;
    double sigma2 = 1.0, sigma_x2 = 1.0;
    Eigen::MatrixXd Xi; // N x M scores
    Eigen::MatrixXd Z0; // N x d0 cached split design rows
    Eigen::MatrixXd Zp; // N x (K-d0)
    long mh_accept = 0, mh_attempt = 0;
    ClampCounter clamps;
};

struct PosteriorSamples {
    Eigen::MatrixXd eta0;              // D x p0
    Eigen::MatrixXd beta;              // D x d0
    Eigen::MatrixXd delta;             // D x (K-d0)
    Eigen::VectorXd lambda_x, lambda_t, sigma2, sigma_x2; // D
    std::vector<Eigen::MatrixXd> Xi;   // D matrices, N x M
    Eigen::MatrixXd eta1;              // D x N linear predictor
    double accept_rate = 0.0;
    long clamped = 0, clamp_total = 0;
    double seconds = 0.0;
    int iters = 0, burnin = 0, thin = 0;
    std::uint64_t seed = 0;
    McmcState final_state;

    int draws() const { return static_cast<int>(sigma2.size()); }
    Eigen::VectorXd theta_mean(const ReparamBasis& rb) const;
};

// One Metropolis-within-Gibbs chain over the model posterior.  The per-block
// update methods are public so each transition kernel can be checked against
// its oracle in isolation.
class McmcSampler {
public:
    McmcSampler(const SurfaceModel& model, const McmcConfig& cfg);

    McmcState& state() { return state_; }
    const SurfaceModel& model() const { return model_; }

    void init_default(const FpcaResult& fpca);

    void mh_update_scores(int subject, Rng& rng);
    void update_eta0(Rng& rng);
    void update_beta(Rng& rng);
    void update_delta(Rng& rng);
    void slice_sample_lambda(bool x_axis, Rng& rng);
    void update_variances(Rng& rng); // sigma_x2 then sigma2

    void refresh_design_rows(); // recompute Z0/Zp from Xi

    // full sweep in the Algorithm order; iter indexes the RNG substreams
    void sweep(int iter);

    Eigen::VectorXd linear_predictor() const;

private:
    const SurfaceModel& model_;
    McmcConfig cfg_;
    McmcState state_;
};

// Slice-sampler target for one smoothing parameter given the other.
double lambda_log_density(double lam, const Eigen::VectorXd& psi_axis,
                          const Eigen::VectorXd& psi_other, double lambda_other,
                          double quad_form, double a_l, double b_l);

// One stepping-out/shrinkage transition on (0, inf) starting from [0, r0].
double slice_transition(double current, const std::function<double(double)>& logf, Rng& rng,
                        int max_doublings = 60, double r0 = 2.0);

PosteriorSamples run_mcmc(const SparseFunctionalDataset& data, const FpcaResult& fpca,
                          const McmcConfig& cfg, const McmcState* warm_start = nullptr);

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd lo, hi; // central 95% of draw-level means
};

Prediction predict_mcmc(const PosteriorSamples& samples, const SurfaceModel& model,
                        const std::vector<Subject>& subjects, bool include_noise = false);

} // namespace fgam
