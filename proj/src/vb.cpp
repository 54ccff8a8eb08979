#include "fgam/vb.hpp"

#include "fgam/errors.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>

namespace fgam {

namespace {

double logdet_spd(const Eigen::MatrixXd& A, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix not positive definite");
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& A, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": matrix not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
}

} // namespace

void VbConfig::validate() const {
    if (max_iters < 1 || tol <= 0) throw std::invalid_argument("vb config: bad convergence settings");
    if (laguerre_points < 1) throw std::invalid_argument("vb config: need at least one quadrature node");
    for (double h : {a_s, b_s, a_x, b_x, a_l, b_l, sigma_beta2, sigma_eta2})
        if (!(h > 0)) throw std::invalid_argument("vb config: hyperparameters must be positive");
}

LambdaMoments lambda_moments(const Eigen::VectorXd& psi_axis, const Eigen::VectorXd& psi_other,
                             double mu_lambda_other, double rate, double a_l,
                             const LaguerreRule& rule) {
    if (!(rate > 0)) throw NumericError("lambda update: nonpositive Gamma rate");
    const int G = rule.G;
    Eigen::VectorXd ell(G);
    for (int j = 0; j < G; ++j) {
        const double lam = rule.nodes[j] / rate;
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < psi_axis.size(); ++i)
            logdet += std::log(lam * psi_axis[i] + mu_lambda_other * psi_other[i]);
        ell[j] = 0.5 * logdet;
    }
    const double m = ell.maxCoeff();
    if (!std::isfinite(m)) throw NumericError("lambda update: quadrature evaluations underflowed");
    double s0 = 0.0, s1 = 0.0, slog = 0.0;
    for (int j = 0; j < G; ++j) {
        const double w = rule.weights[j] * std::exp(ell[j] - m);
        s0 += w;
        s1 += w * rule.nodes[j];
        slog += w * std::log(rule.nodes[j] / rate);
    }
    if (!(s0 > 0)) throw NumericError("lambda update: all quadrature evaluations underflowed");
    LambdaMoments out;
    out.mean = s1 / s0 / rate;
    out.e_log = slog / s0;
    out.log_c = -(a_l + 2.0) * std::log(rate) + m + std::log(s0);
    return out;
}

VbSolver::VbSolver(const SurfaceModel& model, const VbConfig& cfg)
    : model_(model), cfg_(cfg), rule_(gauss_laguerre(cfg.laguerre_points, cfg.a_l + 1.0)) {
    cfg_.validate();
    const int N = model_.n_subjects();
    const int d0 = model_.reparam().null_dim;
    const int dp = model_.reparam().pen_dim();
    state_.mu_eta0 = Eigen::VectorXd::Zero(model_.p0());
    state_.Sigma_eta0 = Eigen::MatrixXd::Identity(model_.p0(), model_.p0());
    state_.mu_beta = Eigen::VectorXd::Zero(d0);
    state_.Sigma_beta = Eigen::MatrixXd::Identity(d0, d0);
    state_.mu_delta = Eigen::VectorXd::Zero(dp);
    state_.Sigma_delta = Eigen::MatrixXd::Identity(dp, dp);
    state_.shape_sigma2 = cfg_.a_s + 0.5 * N;
    state_.rate_lambda_x = cfg_.b_l;
    state_.rate_lambda_t = cfg_.b_l;
    long ntot = 0;
    for (const auto& w : model_.subjects()) ntot += w.t.size();
    state_.shape_sigma_x2 = cfg_.a_x + 0.5 * ntot;
    state_.sites.resize(N);
    for (auto& site : state_.sites) {
        site.xi0 = Eigen::VectorXd::Zero(model_.M());
        site.Lambda = Eigen::MatrixXd::Identity(model_.M(), model_.M());
        site.Cov = site.Lambda;
        site.Eb = Eigen::VectorXd::Zero(model_.K());
        site.Ebb = Eigen::MatrixXd::Zero(model_.K(), model_.K());
    }
    sum_Ebb_ = Eigen::MatrixXd::Zero(model_.K(), model_.K());
    EZ_ = Eigen::MatrixXd::Zero(N, model_.K());
}

void VbSolver::refresh_theta() {
    const ReparamBasis& rb = model_.reparam();
    mu_theta_ = rb.reconstruct_theta(state_.mu_beta, state_.mu_delta);
    Sigma_theta_ = rb.T0 * state_.Sigma_beta * rb.T0.transpose() + rb.Tp * state_.Sigma_delta * rb.Tp.transpose();
}

void VbSolver::eval_score(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                          const Eigen::VectorXd& xi, ScoreEval& ev) const {
    const Eigen::VectorXd x = model_.mu() + model_.Phi() * xi;
    const Eigen::VectorXd xr = w.xc - w.Phi_t * xi;
    const Eigen::VectorXd nu_inv = model_.nu().cwiseInverse();

    model_.design_row_derivs_banded(x, ev.z, ev.dd, &clamps_);
    const double r = w.y - w.u.dot(state_.mu_eta0) - ev.z.dot(mu_theta_);
    Eigen::VectorXd Sz = Sigma_theta_ * ev.z;
    ev.value = -0.5 * mu_inv_s2 * (r * r + ev.z.dot(Sz)) - 0.5 * mu_inv_sx2 * xr.squaredNorm() -
               0.5 * xi.dot(nu_inv.cwiseProduct(xi));

    // Dz = Phi^T diag(L) B1 accumulated over the band
    const int M = model_.M();
    const int T = static_cast<int>(model_.grid().t.size());
    const Eigen::MatrixXd& PhiL = model_.PhiL();
    ev.Dz = Eigen::MatrixXd::Zero(M, model_.K());
    for (int t = 0, e = 0; t < T; ++t)
        for (int b = 0; b < ev.dd.band; ++b, ++e)
            if (ev.dd.d1[e] != 0.0) ev.Dz.col(ev.dd.col[e]) += ev.dd.d1[e] * PhiL.col(t);
    Eigen::VectorXd Dzmu = ev.Dz * mu_theta_;

    ev.grad = mu_inv_s2 * (Dzmu * r - ev.Dz * Sz) + mu_inv_sx2 * w.Phi_t.transpose() * xr -
              nu_inv.cwiseProduct(xi);

    // sum_c wvec_c H_c with H_c = sum_t L_t B2(t,c) phi_t phi_t^T
    auto hsum = [&](const Eigen::VectorXd& wvec) {
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, M);
        for (int t = 0, e = 0; t < T; ++t) {
            double s = 0.0;
            for (int b = 0; b < ev.dd.band; ++b, ++e) s += ev.dd.d2[e] * wvec[ev.dd.col[e]];
            if (s != 0.0)
                H.noalias() += (model_.grid().L[t] * s) * model_.Phi().row(t).transpose() *
                               model_.Phi().row(t);
        }
        return H;
    };
    ev.hess = mu_inv_s2 * (r * hsum(mu_theta_) - Dzmu * Dzmu.transpose() - hsum(Sz) -
                           ev.Dz * Sigma_theta_ * ev.Dz.transpose());
    ev.hess -= mu_inv_sx2 * w.PtP;
    ev.hess -= Eigen::MatrixXd(nu_inv.asDiagonal());
}

void VbSolver::score_objective(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                               const Eigen::VectorXd& xi, double* value, Eigen::VectorXd* grad,
                               Eigen::MatrixXd* hess) const {
    if (value && !grad && !hess) {
        // value-only path for line searches
        const Eigen::VectorXd x = model_.mu() + model_.Phi() * xi;
        Eigen::VectorXd z = model_.design_row(x, &clamps_);
        const double r = w.y - w.u.dot(state_.mu_eta0) - z.dot(mu_theta_);
        const Eigen::VectorXd xr = w.xc - w.Phi_t * xi;
        *value = -0.5 * mu_inv_s2 * (r * r + z.dot(Sigma_theta_ * z)) -
                 0.5 * mu_inv_sx2 * xr.squaredNorm() -
                 0.5 * xi.dot(model_.nu().cwiseInverse().cwiseProduct(xi));
        return;
    }
    ScoreEval ev;
    eval_score(w, mu_inv_s2, mu_inv_sx2, xi, ev);
    if (value) *value = ev.value;
    if (grad) *grad = ev.grad;
    if (hess) *hess = ev.hess;
}

ScoreSite VbSolver::laplace_site(const SubjectWork& w, double mu_inv_s2, double mu_inv_sx2,
                                 const Eigen::VectorXd& xi_start) const {
    const int M = model_.M();
    Eigen::VectorXd xi = xi_start;
    ScoreEval ev;
    eval_score(w, mu_inv_s2, mu_inv_sx2, xi, ev);

    for (int it = 0; it < cfg_.newton_max; ++it) {
        if (ev.grad.cwiseAbs().maxCoeff() < cfg_.newton_tol) break;
        Eigen::VectorXd dir;
        Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(-ev.hess));
        if (llt.info() == Eigen::Success) {
            dir = llt.solve(ev.grad);
        } else {
            dir = ev.grad; // indefinite curvature away from the mode
        }
        double step = 1.0;
        double cand_value = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd cand;
        bool moved = false;
        for (int bt = 0; bt < cfg_.backtrack_max; ++bt) {
            cand = xi + step * dir;
            score_objective(w, mu_inv_s2, mu_inv_sx2, cand, &cand_value, nullptr, nullptr);
            if (std::isfinite(cand_value) && cand_value > ev.value) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
        xi = cand;
        eval_score(w, mu_inv_s2, mu_inv_sx2, xi, ev);
    }

    ScoreSite site;
    site.xi0 = xi;
    site.Lambda = -ev.hess;
    {
        Eigen::LLT<Eigen::MatrixXd> llt(site.Lambda);
        double eps = 1e-8 * (1.0 + site.Lambda.diagonal().cwiseAbs().maxCoeff());
        while (llt.info() != Eigen::Success) {
            site.Lambda.diagonal().array() += eps;
            eps *= 10.0;
            site.regularized = true;
            llt.compute(site.Lambda);
        }
        site.Cov = llt.solve(Eigen::MatrixXd::Identity(M, M));
    }

    // Taylor moments of the design row reuse the final Newton evaluation
    const int T = static_cast<int>(model_.grid().t.size());
    Eigen::VectorXd corr = Eigen::VectorXd::Zero(model_.K());
    for (int t = 0, e = 0; t < T; ++t) {
        Eigen::VectorXd phi_t = model_.Phi().row(t).transpose();
        const double q = 0.5 * model_.grid().L[t] * phi_t.dot(site.Cov * phi_t);
        for (int b = 0; b < ev.dd.band; ++b, ++e)
            if (ev.dd.d2[e] != 0.0) corr[ev.dd.col[e]] += ev.dd.d2[e] * q;
    }
    site.Eb = ev.z + corr;
    // E[b b^T] = E[b]E[b]^T + Cov(b) with the delta-method covariance; this
    // agrees with the direct expansion z z^T + z corr^T + corr z^T + J^T C J
    // up to the O(||C||^2) term corr corr^T and keeps the moment matrix PSD,
    // which the downstream precision updates rely on.
    site.Ebb = site.Eb * site.Eb.transpose() + ev.Dz.transpose() * site.Cov * ev.Dz;
    return site;
}

void VbSolver::laplace_update_scores(int i) {
    const SubjectWork& w = model_.subjects()[i];
    ScoreSite site = laplace_site(w, state_.mu_inv_sigma2(), state_.mu_inv_sigma_x2(), state_.sites[i].xi0);
    set_site(i, site);
}

void VbSolver::set_site(int i, const ScoreSite& site) {
    sum_Ebb_ += site.Ebb - state_.sites[i].Ebb;
    EZ_.row(i) = site.Eb.transpose();
    state_.sites[i] = site;
}

void VbSolver::load_state(const VbState& state) {
    state_ = state;
    sum_Ebb_.setZero();
    for (int i = 0; i < model_.n_subjects(); ++i) {
        sum_Ebb_ += state_.sites[i].Ebb;
        EZ_.row(i) = state_.sites[i].Eb.transpose();
    }
    refresh_theta();
}

void VbSolver::update_q_eta0() {
    const Eigen::MatrixXd& U = model_.U();
    const double mu1s = state_.mu_inv_sigma2();
    Eigen::MatrixXd prec = mu1s * U.transpose() * U;
    prec.diagonal().array() += 1.0 / cfg_.sigma_eta2;
    state_.Sigma_eta0 = spd_inverse(prec, "q(eta0)");
    Eigen::VectorXd eta1 = EZ_ * mu_theta_;
    state_.mu_eta0 = state_.Sigma_eta0 * (U.transpose() * (model_.y() - eta1)) * mu1s;
}

void VbSolver::update_q_beta() {
    const ReparamBasis& rb = model_.reparam();
    const double mu1s = state_.mu_inv_sigma2();
    Eigen::MatrixXd M0 = rb.T0.transpose() * sum_Ebb_ * rb.T0;
    Eigen::MatrixXd prec = mu1s * M0;
    prec.diagonal().array() += 1.0 / cfg_.sigma_beta2;
    state_.Sigma_beta = spd_inverse(prec, "q(beta)");
    Eigen::VectorXd resid = model_.y() - model_.U() * state_.mu_eta0;
    Eigen::VectorXd rhs = rb.T0.transpose() * (EZ_.transpose() * resid) -
                          rb.T0.transpose() * (sum_Ebb_ * (rb.Tp * state_.mu_delta));
    state_.mu_beta = state_.Sigma_beta * rhs * mu1s;
}

void VbSolver::update_q_delta() {
    const ReparamBasis& rb = model_.reparam();
    const double mu1s = state_.mu_inv_sigma2();
    Eigen::MatrixXd Mp = rb.Tp.transpose() * sum_Ebb_ * rb.Tp;
    Eigen::MatrixXd prec = mu1s * Mp;
    prec.diagonal() += state_.mu_lambda_x * rb.psi_x + state_.mu_lambda_t * rb.psi_t;
    state_.Sigma_delta = spd_inverse(prec, "q(delta)");
    Eigen::VectorXd resid = model_.y() - model_.U() * state_.mu_eta0;
    Eigen::VectorXd rhs = rb.Tp.transpose() * (EZ_.transpose() * resid) -
                          rb.Tp.transpose() * (sum_Ebb_ * (rb.T0 * state_.mu_beta));
    state_.mu_delta = state_.Sigma_delta * rhs * mu1s;
}

void VbSolver::update_q_lambda(bool x_axis) {
    const ReparamBasis& rb = model_.reparam();
    const Eigen::VectorXd& psi_a = x_axis ? rb.psi_x : rb.psi_t;
    const Eigen::VectorXd& psi_o = x_axis ? rb.psi_t : rb.psi_x;
    const double lam_o = x_axis ? state_.mu_lambda_t : state_.mu_lambda_x;
    const double rate = cfg_.b_l + 0.5 * (psi_a.dot(state_.Sigma_delta.diagonal()) +
                                          state_.mu_delta.dot(psi_a.cwiseProduct(state_.mu_delta)));
    LambdaMoments mom = lambda_moments(psi_a, psi_o, lam_o, rate, cfg_.a_l, rule_);
    if (x_axis) {
        state_.mu_lambda_x = mom.mean;
        state_.E_log_lambda_x = mom.e_log;
        state_.log_c_lambda_x = mom.log_c;
        state_.rate_lambda_x = rate;
    } else {
        state_.mu_lambda_t = mom.mean;
        state_.E_log_lambda_t = mom.e_log;
        state_.log_c_lambda_t = mom.log_c;
        state_.rate_lambda_t = rate;
    }
}

void VbSolver::update_q_variances() {
    // measurement error
    double acc = 0.0;
    for (int i = 0; i < model_.n_subjects(); ++i) {
        const SubjectWork& w = model_.subjects()[i];
        const ScoreSite& s = state_.sites[i];
        acc += (w.xc - w.Phi_t * s.xi0).squaredNorm() + (w.PtP * s.Cov).trace();
    }
    state_.B_sigma_x2 = cfg_.b_x + 0.5 * acc;
    if (!(state_.B_sigma_x2 > 0)) throw NumericError("q(sigma_x2): nonpositive rate");

    // response
    const Eigen::MatrixXd& U = model_.U();
    Eigen::VectorXd eta1 = EZ_ * mu_theta_;
    Eigen::VectorXd resid = model_.y() - U * state_.mu_eta0 - eta1;
    double B = cfg_.b_s + 0.5 * resid.squaredNorm();
    B += 0.5 * (U.transpose() * U * state_.Sigma_eta0).trace();
    B += 0.5 * (sum_Ebb_ * Sigma_theta_).trace();
    B += 0.5 * mu_theta_.dot(sum_Ebb_ * mu_theta_);
    B -= 0.5 * (EZ_ * mu_theta_).squaredNorm();
    state_.B_sigma2 = B;
    if (!(state_.B_sigma2 > 0)) throw NumericError("q(sigma2): nonpositive rate (trace-term inconsistency)");
}

double VbSolver::lower_bound(std::string* failed_component) const {
    const ReparamBasis& rb = model_.reparam();
    struct Term {
        const char* name;
        double value;
    };
    const Eigen::VectorXd nu_inv = model_.nu().cwiseInverse();
    double score_prior = 0.0, score_entropy = 0.0;
    for (const auto& s : state_.sites) {
        score_prior += -0.5 * (s.xi0.dot(nu_inv.cwiseProduct(s.xi0)) + nu_inv.dot(s.Cov.diagonal()));
        score_entropy += 0.5 * logdet_spd(s.Cov, "bound: score covariance");
    }
    // The lambda prior/entropy pieces combine with the delta prior so that
    // the E[log lambda] contributions cancel and each normalizer c_q enters
    // with a positive sign; what survives of the determinant is a single
    // plug-in evaluation at the current means.  The rate frozen into each
    // q(lambda) factor refers to the q(delta) that was current at its last
    // update; the correction below restores exactness when q(delta) has
    // moved since (it is zero at the end of a full sweep).
    Eigen::VectorXd pen = state_.mu_lambda_x * rb.psi_x + state_.mu_lambda_t * rb.psi_t;
    const double quad_x = rb.psi_x.dot(state_.Sigma_delta.diagonal()) +
                          state_.mu_delta.dot(rb.psi_x.cwiseProduct(state_.mu_delta));
    const double quad_t = rb.psi_t.dot(state_.Sigma_delta.diagonal()) +
                          state_.mu_delta.dot(rb.psi_t.cwiseProduct(state_.mu_delta));
    const double stale_x = state_.mu_lambda_x * (state_.rate_lambda_x - cfg_.b_l - 0.5 * quad_x);
    const double stale_t = state_.mu_lambda_t * (state_.rate_lambda_t - cfg_.b_l - 0.5 * quad_t);
    const Term terms[] = {
        {"eta0", -0.5 / cfg_.sigma_eta2 * (state_.mu_eta0.squaredNorm() + state_.Sigma_eta0.trace()) +
                     0.5 * logdet_spd(state_.Sigma_eta0, "bound: eta0")},
        {"beta", -0.5 / cfg_.sigma_beta2 * (state_.mu_beta.squaredNorm() + state_.Sigma_beta.trace()) +
                     0.5 * logdet_spd(state_.Sigma_beta, "bound: beta")},
        {"delta_entropy", 0.5 * logdet_spd(state_.Sigma_delta, "bound: delta")},
        {"score_prior", score_prior},
        {"score_entropy", score_entropy},
        {"lambda_x", state_.log_c_lambda_x + stale_x},
        {"lambda_t", state_.log_c_lambda_t + stale_t},
        {"penalty_det", -0.5 * pen.array().log().sum()},
        {"sigma2", -state_.shape_sigma2 * std::log(state_.B_sigma2)},
        {"sigma_x2", -state_.shape_sigma_x2 * std::log(state_.B_sigma_x2)},
    };
    double total = 0.0;
    for (const auto& t : terms) {
        if (!std::isfinite(t.value)) {
            if (failed_component) *failed_component = t.name;
            throw NumericError(std::string("lower_bound: non-finite component '") + t.name + "'");
        }
        total += t.value;
    }
    return total;
}

void VbSolver::iterate() {
    refresh_theta();
    for (int i = 0; i < model_.n_subjects(); ++i) laplace_update_scores(i);
    update_q_eta0();
    update_q_beta();
    update_q_delta();
    refresh_theta();
    update_q_lambda(true);
    update_q_lambda(false);
    update_q_variances();
}

void VbSolver::run() {
    const auto t0 = std::chrono::steady_clock::now();
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg_.max_iters; ++it) {
        iterate();
        const double bound = lower_bound();
        state_.bound_trace.push_back(bound);
        state_.iterations = it + 1;
        if (std::isfinite(prev)) {
            const double rel = (bound - prev) / (1.0 + std::abs(bound));
            if (rel < 0) {
                ++state_.bound_decreases;
                state_.worst_decrease = std::min(state_.worst_decrease, rel);
            }
            if (std::abs(rel) < cfg_.tol) {
                state_.converged = true;
                break;
            }
        }
        prev = bound;
    }
    state_.clamped = clamps_.clamped;
    state_.clamp_total = clamps_.total;
    state_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

VbState run_vb(const SparseFunctionalDataset& data, const FpcaResult& fpca, const VbConfig& cfg) {
    SurfaceModel model(data, fpca, cfg.basis);
    VbSolver solver(model, cfg);
    // mode search warm start at the FPCA scores
    for (int i = 0; i < model.n_subjects(); ++i) solver.state().sites[i].xi0 = fpca.scores.row(i).transpose();
    solver.run();
    return solver.state();
}

Eigen::VectorXd predict_vb(const VbState& state, const SurfaceModel& model,
                           const std::vector<Subject>& subjects, const VbConfig& cfg) {
    VbSolver solver(model, cfg);
    solver.load_state(state);
    const ReparamBasis& rb = model.reparam();
    Eigen::VectorXd mu_theta = rb.reconstruct_theta(state.mu_beta, state.mu_delta);
    Eigen::VectorXd out(subjects.size());
    for (std::size_t s = 0; s < subjects.size(); ++s) {
        if (subjects[s].t.size() == 0)
            throw DataError("predict: subject '" + subjects[s].id + "' has no observations");
        SubjectWork w = model.make_subject_work(subjects[s]);
        // response term disabled: the optimal density is the exact BLUP normal
        ScoreSite site = solver.laplace_site(w, 0.0, state.mu_inv_sigma_x2(),
                                             Eigen::VectorXd::Zero(model.M()));
        out[s] = w.u.dot(state.mu_eta0) + site.Eb.dot(mu_theta);
    }
    return out;
}

McmcState vb_to_mcmc_state(const VbState& state) {
    McmcState st;
    st.eta0 = state.mu_eta0;
    st.beta = state.mu_beta;
    st.delta = state.mu_delta;
    st.lambda_x = state.mu_lambda_x;
    st.lambda_t = state.mu_lambda_t;
    st.sigma2 = state.B_sigma2 / std::max(1.0, state.shape_sigma2 - 1.0);
    st.sigma_x2 = state.B_sigma_x2 / std::max(1.0, state.shape_sigma_x2 - 1.0);
    const int N = static_cast<int>(state.sites.size());
    if (N > 0) {
        const int M = static_cast<int>(state.sites[0].xi0.size());
        st.Xi.resize(N, M);
        for (int i = 0; i < N; ++i) st.Xi.row(i) = state.sites[i].xi0.transpose();
    }
    return st;
}

} // namespace fgam
