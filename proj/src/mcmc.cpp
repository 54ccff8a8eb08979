#include "fgam/mcmc.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

namespace fgam {

namespace {

constexpr std::uint64_t kBlockEta0 = 1ull << 40;
constexpr std::uint64_t kBlockBeta = 2ull << 40;
constexpr std::uint64_t kBlockDelta = 3ull << 40;
constexpr std::uint64_t kBlockLambdaX = 4ull << 40;
constexpr std::uint64_t kBlockLambdaT = 5ull << 40;
constexpr std::uint64_t kBlockVar = 6ull << 40;

Eigen::VectorXd draw_gaussian(const Eigen::MatrixXd& precision, const Eigen::VectorXd& rhs, Rng& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericError("mcmc: precision matrix not positive definite");
    Eigen::VectorXd mean = llt.solve(rhs);
    // solve L^T w = z gives covariance precision^{-1}
    Eigen::VectorXd z = rng.normal_vec(rhs.size());
    Eigen::VectorXd w = llt.matrixU().solve(z);
    return mean + w;
}

} // namespace

void McmcConfig::validate() const {
    if (iters <= burnin || burnin < 0) throw std::invalid_argument("mcmc config: need iters > burnin >= 0");
    if (thin < 1) throw std::invalid_argument("mcmc config: thin must be >= 1");
    for (double h : {a_s, b_s, a_x, b_x, a_l, b_l, sigma_beta2, sigma_eta2})
        if (!(h > 0)) throw std::invalid_argument("mcmc config: hyperparameters must be positive");
}

Eigen::VectorXd PosteriorSamples::theta_mean(const ReparamBasis& rb) const {
    Eigen::VectorXd bmean = beta.colwise().mean().transpose();
    Eigen::VectorXd dmean = delta.colwise().mean().transpose();
    return rb.reconstruct_theta(bmean, dmean);
}

McmcSampler::McmcSampler(const SurfaceModel& model, const McmcConfig& cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    const int N = model_.n_subjects();
    state_.eta0 = Eigen::VectorXd::Zero(model_.p0());
    state_.beta = Eigen::VectorXd::Zero(model_.reparam().null_dim);
    state_.delta = Eigen::VectorXd::Zero(model_.reparam().pen_dim());
    state_.Xi = Eigen::MatrixXd::Zero(N, model_.M());
    state_.Z0.resize(N, model_.reparam().null_dim);
    state_.Zp.resize(N, model_.reparam().pen_dim());
}

void McmcSampler::init_default(const FpcaResult& fpca) {
    state_.Xi = fpca.scores;
    state_.sigma_x2 = std::max(fpca.sigma_x2, 1e-10);
    const Eigen::VectorXd& y = model_.y();
    const double vy = (y.array() - y.mean()).square().sum() / std::max(1, static_cast<int>(y.size()) - 1);
    state_.sigma2 = std::max(vy, 1e-8);
    state_.lambda_x = 1.0;
    state_.lambda_t = 1.0;
    refresh_design_rows();
}

void McmcSampler::refresh_design_rows() {
    for (int i = 0; i < model_.n_subjects(); ++i) {
        Eigen::VectorXd z = model_.design_row(model_.trajectory(state_.Xi.row(i).transpose()), &state_.clamps);
        Eigen::VectorXd z0, zp;
        model_.reparam().split_design_row(z, z0, zp);
        state_.Z0.row(i) = z0.transpose();
        state_.Zp.row(i) = zp.transpose();
    }
}

Eigen::VectorXd McmcSampler::linear_predictor() const {
    return state_.Z0 * state_.beta + state_.Zp * state_.delta;
}

void McmcSampler::mh_update_scores(int i, Rng& rng) {
    const SubjectWork& w = model_.subjects()[i];
    const int M = model_.M();

    // independence proposal from the trajectory-only posterior
    Eigen::MatrixXd prec = w.PtP / state_.sigma_x2;
    prec.diagonal() += model_.nu().cwiseInverse();
    Eigen::LLT<Eigen::MatrixXd> llt(prec);
    if (llt.info() != Eigen::Success) throw NumericError("mh_update_scores: proposal precision not PD");
    Eigen::VectorXd mean = llt.solve(w.Phix / state_.sigma_x2);
    Eigen::VectorXd prop = mean + llt.matrixU().solve(rng.normal_vec(M));

    Eigen::VectorXd z = model_.design_row(model_.trajectory(prop), &state_.clamps);
    Eigen::VectorXd z0, zp;
    model_.reparam().split_design_row(z, z0, zp);

    const double yoff = w.y - w.u.dot(state_.eta0);
    const double r_cur = yoff - state_.Z0.row(i).dot(state_.beta) - state_.Zp.row(i).dot(state_.delta);
    const double r_new = yoff - z0.dot(state_.beta) - zp.dot(state_.delta);
    const double log_alpha = (r_cur * r_cur - r_new * r_new) / (2.0 * state_.sigma2);
    if (!std::isfinite(log_alpha)) throw NumericError("mh_update_scores: non-finite acceptance ratio");

    ++state_.mh_attempt;
    if (std::log(rng.uniform()) < log_alpha) {
        ++state_.mh_accept;
        state_.Xi.row(i) = prop.transpose();
        state_.Z0.row(i) = z0.transpose();
        state_.Zp.row(i) = zp.transpose();
    }
}

void McmcSampler::update_eta0(Rng& rng) {
    const Eigen::MatrixXd& U = model_.U();
    Eigen::MatrixXd prec = U.transpose() * U / state_.sigma2;
    prec.diagonal().array() += 1.0 / cfg_.sigma_eta2;
    Eigen::VectorXd rhs = U.transpose() * (model_.y() - linear_predictor()) / state_.sigma2;
    state_.eta0 = draw_gaussian(prec, rhs, rng);
}

void McmcSampler::update_beta(Rng& rng) {
    Eigen::MatrixXd prec = state_.Z0.transpose() * state_.Z0 / state_.sigma2;
    prec.diagonal().array() += 1.0 / cfg_.sigma_beta2;
    Eigen::VectorXd resid = model_.y() - model_.U() * state_.eta0 - state_.Zp * state_.delta;
    Eigen::VectorXd rhs = state_.Z0.transpose() * resid / state_.sigma2;
    state_.beta = draw_gaussian(prec, rhs, rng);
}

void McmcSampler::update_delta(Rng& rng) {
    Eigen::MatrixXd prec = state_.Zp.transpose() * state_.Zp / state_.sigma2;
    prec.diagonal() += state_.lambda_x * model_.reparam().psi_x + state_.lambda_t * model_.reparam().psi_t;
    Eigen::VectorXd resid = model_.y() - model_.U() * state_.eta0 - state_.Z0 * state_.beta;
    Eigen::VectorXd rhs = state_.Zp.transpose() * resid / state_.sigma2;
    state_.delta = draw_gaussian(prec, rhs, rng);
}

double lambda_log_density(double lam, const Eigen::VectorXd& psi_axis,
                          const Eigen::VectorXd& psi_other, double lambda_other,
                          double quad_form, double a_l, double b_l) {
    if (!(lam > 0.0)) return -std::numeric_limits<double>::infinity();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < psi_axis.size(); ++i)
        logdet += std::log(lam * psi_axis[i] + lambda_other * psi_other[i]);
    return 0.5 * logdet + (a_l + 1.0) * std::log(lam) - (b_l + 0.5 * quad_form) * lam;
}

double slice_transition(double current, const std::function<double(double)>& logf, Rng& rng,
                        int max_doublings, double r0) {
    const double g0 = logf(current);
    if (!std::isfinite(g0)) throw NumericError("slice_transition: non-finite log-density at current point");
    const double level = g0 + std::log(rng.uniform());

    // stepping out by doubling; the target is log-concave so the slice is an
    // interval and expansion can stop once the edge passes both the current
    // point and the slice boundary
    double L = 0.0, R = r0;
    int doublings = 0;
    while ((R < current || logf(R) > level) && doublings < max_doublings) {
        R *= 2.0;
        ++doublings;
    }

    // shrinkage toward the current point
    for (;;) {
        const double prop = rng.uniform(L, R);
        if (logf(prop) > level) return prop;
        if (prop > current)
            R = prop;
        else
            L = prop;
    }
}

void McmcSampler::slice_sample_lambda(bool x_axis, Rng& rng) {
    const ReparamBasis& rb = model_.reparam();
    const Eigen::VectorXd& psi_a = x_axis ? rb.psi_x : rb.psi_t;
    const Eigen::VectorXd& psi_o = x_axis ? rb.psi_t : rb.psi_x;
    const double lam_o = x_axis ? state_.lambda_t : state_.lambda_x;
    const double quad = state_.delta.dot(psi_a.cwiseProduct(state_.delta));
    auto logf = [&](double lam) {
        return lambda_log_density(lam, psi_a, psi_o, lam_o, quad, cfg_.a_l, cfg_.b_l);
    };
    double& lam = x_axis ? state_.lambda_x : state_.lambda_t;
    lam = slice_transition(lam, logf, rng, cfg_.slice_max_doublings, cfg_.slice_r0);
}

void McmcSampler::update_variances(Rng& rng) {
    if (cfg_.update_sigma_x) {
        double rss = 0.0;
        long ntot = 0;
        for (int i = 0; i < model_.n_subjects(); ++i) {
            const SubjectWork& w = model_.subjects()[i];
            rss += (w.xc - w.Phi_t * state_.Xi.row(i).transpose()).squaredNorm();
            ntot += w.t.size();
        }
        if (!std::isfinite(rss)) throw NumericError("update_variances: non-finite trajectory residuals");
        state_.sigma_x2 = rng.inv_gamma(0.5 * ntot + cfg_.a_x, cfg_.b_x + 0.5 * rss);
    }
    Eigen::VectorXd resid = model_.y() - model_.U() * state_.eta0 - linear_predictor();
    const double rss_y = resid.squaredNorm();
    if (!std::isfinite(rss_y)) throw NumericError("update_variances: non-finite response residuals");
    state_.sigma2 = rng.inv_gamma(0.5 * model_.n_subjects() + cfg_.a_s, cfg_.b_s + 0.5 * rss_y);
}

void McmcSampler::sweep(int iter) {
    const std::uint64_t it = static_cast<std::uint64_t>(iter);
    if (cfg_.update_scores) {
        for (int i = 0; i < model_.n_subjects(); ++i) {
            Rng rng = Rng::substream(cfg_.seed, it, static_cast<std::uint64_t>(i));
            mh_update_scores(i, rng);
        }
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockEta0);
        update_eta0(rng);
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockBeta);
        update_beta(rng);
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockDelta);
        update_delta(rng);
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockLambdaX);
        slice_sample_lambda(true, rng);
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockLambdaT);
        slice_sample_lambda(false, rng);
    }
    {
        Rng rng = Rng::substream(cfg_.seed, it, kBlockVar);
        update_variances(rng);
    }
}

PosteriorSamples run_mcmc(const SparseFunctionalDataset& data, const FpcaResult& fpca,
                          const McmcConfig& cfg, const McmcState* warm_start) {
    const auto t0 = std::chrono::steady_clock::now();
    SurfaceModel model(data, fpca, cfg.basis);
    McmcSampler sampler(model, cfg);
    sampler.init_default(fpca);
    if (warm_start) {
        McmcState& st = sampler.state();
        st.eta0 = warm_start->eta0;
        st.beta = warm_start->beta;
        st.delta = warm_start->delta;
        st.lambda_x = warm_start->lambda_x;
        st.lambda_t = warm_start->lambda_t;
        st.sigma2 = warm_start->sigma2;
        st.sigma_x2 = warm_start->sigma_x2;
        if (warm_start->Xi.size()) st.Xi = warm_start->Xi;
        sampler.refresh_design_rows();
    }

    const int D = (cfg.iters - cfg.burnin) / cfg.thin;
    PosteriorSamples out;
    out.iters = cfg.iters;
    out.burnin = cfg.burnin;
    out.thin = cfg.thin;
    out.seed = cfg.seed;
    out.eta0.resize(D, model.p0());
    out.beta.resize(D, model.reparam().null_dim);
    out.delta.resize(D, model.reparam().pen_dim());
    out.lambda_x.resize(D);
    out.lambda_t.resize(D);
    out.sigma2.resize(D);
    out.sigma_x2.resize(D);
    out.Xi.reserve(D);
    out.eta1.resize(D, model.n_subjects());

    int d = 0;
    for (int iter = 0; iter < cfg.iters; ++iter) {
        try {
            sampler.sweep(iter);
        } catch (const std::exception& e) {
            throw NumericError("mcmc aborted at iteration " + std::to_string(iter) + ": " + e.what());
        }
        if (iter >= cfg.burnin && (iter - cfg.burnin) % cfg.thin == 0 && d < D) {
            const McmcState& st = sampler.state();
            out.eta0.row(d) = st.eta0.transpose();
            out.beta.row(d) = st.beta.transpose();
            out.delta.row(d) = st.delta.transpose();
            out.lambda_x[d] = st.lambda_x;
            out.lambda_t[d] = st.lambda_t;
            out.sigma2[d] = st.sigma2;
            out.sigma_x2[d] = st.sigma_x2;
            out.Xi.push_back(st.Xi);
            out.eta1.row(d) = sampler.linear_predictor().transpose();
            ++d;
        }
    }
    const McmcState& st = sampler.state();
    out.final_state = st;
    out.accept_rate = st.mh_attempt > 0 ? static_cast<double>(st.mh_accept) / st.mh_attempt : 0.0;
    out.clamped = st.clamps.clamped;
    out.clamp_total = st.clamps.total;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

Prediction predict_mcmc(const PosteriorSamples& samples, const SurfaceModel& model,
                        const std::vector<Subject>& subjects, bool include_noise) {
    const int D = samples.draws();
    const int n = static_cast<int>(subjects.size());
    Prediction pred;
    pred.mean.resize(n);
    pred.lo.resize(n);
    pred.hi.resize(n);
    for (int s = 0; s < n; ++s) {
        if (subjects[s].t.size() == 0) throw DataError("predict: subject '" + subjects[s].id + "' has no observations");
        SubjectWork w = model.make_subject_work(subjects[s]);
        Eigen::VectorXd draws(D);
        for (int d = 0; d < D; ++d) {
            Eigen::MatrixXd prec = w.PtP / samples.sigma_x2[d];
            prec.diagonal() += model.nu().cwiseInverse();
            Eigen::LLT<Eigen::MatrixXd> llt(prec);
            if (llt.info() != Eigen::Success) throw NumericError("predict: BLUP precision not PD");
            Eigen::VectorXd xi = llt.solve(w.Phix / samples.sigma_x2[d]);
            Eigen::VectorXd z = model.design_row(model.trajectory(xi));
            Eigen::VectorXd z0, zp;
            model.reparam().split_design_row(z, z0, zp);
            double v = w.u.dot(samples.eta0.row(d)) + z0.dot(samples.beta.row(d)) + zp.dot(samples.delta.row(d));
            if (include_noise) {
                Rng rng = Rng::substream(samples.seed ^ 0x9d5f3c1aULL, static_cast<std::uint64_t>(d),
                                         static_cast<std::uint64_t>(s));
                v += std::sqrt(samples.sigma2[d]) * rng.normal();
            }
            draws[d] = v;
        }
        pred.mean[s] = draws.mean();
        std::vector<double> sorted(draws.data(), draws.data() + D);
        std::sort(sorted.begin(), sorted.end());
        auto quant = [&](double q) {
            const double pos = q * (D - 1);
            const int lo = static_cast<int>(pos);
            const int hi = std::min(lo + 1, D - 1);
            return sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
        };
        pred.lo[s] = quant(0.025);
        pred.hi[s] = quant(0.975);
    }
    return pred;
}

} // namespace fgam
