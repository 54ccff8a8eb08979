#include "fgam/sim.hpp"

#include "fgam/errors.hpp"
#include "fgam/rng.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

namespace fgam {

double surface_value(SurfaceKind kind, double x, double t) {
    if (kind == SurfaceKind::F1) return 2.0 * x * std::sin(M_PI * t);
    return 20.0 * std::cos(-x / 8.0 + t / 4.0 - 5.0);
}

double surface_domain(SurfaceKind kind) { return kind == SurfaceKind::F1 ? 1.0 : 10.0; }

double GroundTruth::surface_value(double x, double t) const {
    if (t < grid.t[0] - 1e-12 || t > grid.t[grid.t.size() - 1] + 1e-12)
        throw std::invalid_argument("surface_value: t outside the domain");
    return fgam::surface_value(surface, x, t);
}

std::pair<SparseFunctionalDataset, GroundTruth> generate_dataset(const Scenario& sc) {
    if (sc.J > sc.grid_size) throw std::invalid_argument("generate_dataset: J exceeds the generation grid");
    if (!(sc.train_fraction > 0.0 && sc.train_fraction < 1.0))
        throw std::invalid_argument("generate_dataset: train_fraction must be in (0,1)");
    const double domain = surface_domain(sc.surface);
    const int T = sc.grid_size;

    GroundTruth truth;
    truth.surface = sc.surface;
    truth.domain = domain;
    truth.grid = make_working_grid(0.0, domain, T);

    // four sin/cos components with variances 8 j^-2
    Eigen::MatrixXd Phi(T, 4);
    for (int r = 0; r < T; ++r) {
        const double u = truth.grid.t[r] / domain;
        Phi(r, 0) = std::sin(M_PI * u);
        Phi(r, 1) = std::cos(M_PI * u);
        Phi(r, 2) = std::sin(2.0 * M_PI * u);
        Phi(r, 3) = std::cos(2.0 * M_PI * u);
    }

    truth.scores.resize(sc.N, 4);
    truth.X.resize(sc.N, T);
    truth.y_clean.resize(sc.N);

    SparseFunctionalDataset data;
    data.p0 = 1;
    data.subjects.reserve(sc.N);

    for (int i = 0; i < sc.N; ++i) {
        Rng rng = Rng::substream(sc.seed, static_cast<std::uint64_t>(i), 0x5ce0);
        for (int j = 0; j < 4; ++j) truth.scores(i, j) = std::sqrt(8.0 / ((j + 1.0) * (j + 1.0))) * rng.normal();
        Eigen::VectorXd Xi = Phi * truth.scores.row(i).transpose();
        truth.X.row(i) = Xi.transpose();

        Eigen::VectorXd F(T);
        for (int r = 0; r < T; ++r) F[r] = surface_value(sc.surface, Xi[r], truth.grid.t[r]);
        truth.y_clean[i] = truth.grid.L.dot(F);

        // J distinct grid indices, uniform without replacement
        std::vector<int> idx(T);
        std::iota(idx.begin(), idx.end(), 0);
        for (int j = 0; j < sc.J; ++j) {
            const int pick = j + static_cast<int>(rng.uniform() * (T - j));
            std::swap(idx[j], idx[std::min(pick, T - 1)]);
        }
        idx.resize(sc.J);
        std::sort(idx.begin(), idx.end());

        Subject s;
        s.id = "s" + std::to_string(i + 1);
        s.t.resize(sc.J);
        s.x.resize(sc.J);
        for (int j = 0; j < sc.J; ++j) {
            s.t[j] = truth.grid.t[idx[j]];
            s.x[j] = Xi[idx[j]] + sc.sigma_x * rng.normal();
        }
        s.y = truth.y_clean[i] + rng.normal();
        s.u = Eigen::VectorXd::Ones(1);
        data.subjects.push_back(std::move(s));
    }
    return {std::move(data), std::move(truth)};
}

double rmise_x(const GroundTruth& truth, const Eigen::MatrixXd& estimates,
               const std::vector<int>& index) {
    if (estimates.cols() != truth.grid.t.size()) throw std::invalid_argument("rmise_x: grid mismatch");
    if (estimates.rows() != static_cast<Eigen::Index>(index.size()))
        throw std::invalid_argument("rmise_x: row/index mismatch");
    double acc = 0.0;
    for (Eigen::Index r = 0; r < estimates.rows(); ++r) {
        Eigen::VectorXd diff = estimates.row(r) - truth.X.row(index[r]);
        acc += truth.grid.L.dot(diff.cwiseAbs2());
    }
    return std::sqrt(acc / static_cast<double>(index.size()));
}

std::vector<std::pair<double, double>> convex_hull(std::vector<std::pair<double, double>> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const int n = static_cast<int>(pts.size());
    if (n < 3) return pts;
    auto cross = [](const auto& o, const auto& a, const auto& b) {
        return (a.first - o.first) * (b.second - o.second) - (a.second - o.second) * (b.first - o.first);
    };
    std::vector<std::pair<double, double>> h(2 * n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (int i = n - 2, lower = k + 1; i >= 0; --i) {
        while (k >= lower && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

bool point_in_hull(const std::vector<std::pair<double, double>>& hull, double x, double y) {
    const int n = static_cast<int>(hull.size());
    if (n < 3) return false;
    for (int i = 0; i < n; ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % n];
        const double cr = (b.first - a.first) * (y - a.second) - (b.second - a.second) * (x - a.first);
        if (cr < -1e-12) return false;
    }
    return true;
}

double rise_f(const std::function<double(double, double)>& truth,
              const std::function<double(double, double)>& estimate,
              const std::vector<std::pair<double, double>>& hull_points,
              const Eigen::VectorXd& x_axis, const Eigen::VectorXd& t_axis) {
    auto hull = convex_hull(hull_points);
    if (hull.size() < 3) throw std::invalid_argument("rise_f: degenerate convex hull");
    const double dx = x_axis.size() > 1 ? (x_axis[x_axis.size() - 1] - x_axis[0]) / (x_axis.size() - 1) : 1.0;
    const double dt = t_axis.size() > 1 ? (t_axis[t_axis.size() - 1] - t_axis[0]) / (t_axis.size() - 1) : 1.0;
    double acc = 0.0;
    long cells = 0;
    for (Eigen::Index i = 0; i < x_axis.size(); ++i)
        for (Eigen::Index j = 0; j < t_axis.size(); ++j) {
            if (!point_in_hull(hull, x_axis[i], t_axis[j])) continue;
            const double d = truth(x_axis[i], t_axis[j]) - estimate(x_axis[i], t_axis[j]);
            acc += d * d * dx * dt;
            ++cells;
        }
    if (cells == 0) throw std::invalid_argument("rise_f: no evaluation point inside the hull");
    return std::sqrt(acc);
}

double rmse_y(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
    if (y.size() != yhat.size() || y.size() == 0) throw std::invalid_argument("rmse_y: bad input lengths");
    return std::sqrt((y - yhat).squaredNorm() / static_cast<double>(y.size()));
}

double FlmFit::beta_at(double t) const {
    Eigen::VectorXd p(1);
    p << t;
    return bt.eval(p).row(0).dot(coef_b);
}

double FlmFit::predict(const Eigen::VectorXd& x_dense, const WorkingGrid& grid,
                       const Eigen::VectorXd& u) const {
    Eigen::MatrixXd B = bt.eval(grid.t);
    Eigen::VectorXd z = B.transpose() * grid.L.cwiseProduct(x_dense);
    return u.dot(eta0) + z.dot(coef_b);
}

FlmFit flm_baseline(const std::vector<Eigen::VectorXd>& X_dense, const Eigen::VectorXd& y,
                    const Eigen::MatrixXd& U, const WorkingGrid& grid, int Kt, int dt) {
    const int N = static_cast<int>(X_dense.size());
    if (N == 0 || y.size() != N || U.rows() != N) throw std::invalid_argument("flm_baseline: bad input sizes");
    const int p0 = static_cast<int>(U.cols());

    FlmFit fit;
    fit.bt = SplineBasis::uniform(Kt, 3, grid.t[0], grid.t[grid.t.size() - 1]);
    Eigen::MatrixXd B = fit.bt.eval(grid.t); // T x Kt

    Eigen::MatrixXd C(N, p0 + Kt);
    C.leftCols(p0) = U;
    for (int i = 0; i < N; ++i) C.row(i).tail(Kt) = (B.transpose() * grid.L.cwiseProduct(X_dense[i])).transpose();

    const Eigen::MatrixXd gram = difference_matrix(Kt, dt).gram;
    Eigen::MatrixXd CtC = C.transpose() * C;
    Eigen::VectorXd Cty = C.transpose() * y;
    const double yty = y.squaredNorm();

    double best_ll = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 21; ++k) {
        const double lambda = std::pow(10.0, -4.0 + 8.0 * k / 20.0);
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p0 + Kt, p0 + Kt);
        A.topLeftCorner(p0, p0).diagonal().array() = 1e-6;
        A.bottomRightCorner(Kt, Kt) = lambda * gram;
        A.bottomRightCorner(Kt, Kt).diagonal().array() += 1e-8;

        // profile marginal likelihood with the coefficient prior scaled by sigma^2
        Eigen::LLT<Eigen::MatrixXd> llt(CtC + A);
        if (llt.info() != Eigen::Success) continue;
        Eigen::VectorXd coef = llt.solve(Cty);
        const double rss = yty - Cty.dot(coef); // y^T M^{-1} y by the Woodbury identity
        const double sigma2 = std::max(rss / N, 1e-12);
        // log|M| = log|A + C^T C| - log|A|
        const double logdet_ApC = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        Eigen::LLT<Eigen::MatrixXd> lltA(A);
        const double logdet_A = 2.0 * lltA.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double ll = -0.5 * (logdet_ApC - logdet_A) - 0.5 * N * std::log(sigma2);
        if (ll > best_ll) {
            best_ll = ll;
            fit.lambda = lambda;
            fit.sigma2 = sigma2;
            fit.eta0 = coef.head(p0);
            fit.coef_b = coef.tail(Kt);
        }
    }
    if (!fit.coef_b.size()) throw NumericError("flm_baseline: marginal likelihood failed on every lambda");
    return fit;
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Mcmc: return "mcmc";
        case Method::Vb: return "vb";
        case Method::VbMcmc: return "vb-mcmc";
        case Method::TrueX: return "truex";
        case Method::Flm: return "flm";
        case Method::PaceTwoStep: return "pace";
    }
    return "?";
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ScenarioReport::values(const std::string& method, const std::string& metric) const {
    std::vector<double> out;
    for (const auto& r : rows)
        if (r.method == method && r.metric == metric) out.push_back(r.value);
    return out;
}

double ScenarioReport::median(const std::string& method, const std::string& metric) const {
    return median_of(values(method, metric));
}

double ScenarioReport::mean(const std::string& method, const std::string& metric) const {
    auto v = values(method, metric);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

namespace {

struct RepData {
    SparseFunctionalDataset train;
    std::vector<Subject> test;
    std::vector<int> train_index, test_index;
    Eigen::VectorXd y_test;
};

RepData split_dataset(const SparseFunctionalDataset& all, const Scenario& sc) {
    RepData rd;
    const int n_train = static_cast<int>(std::lround(sc.N * sc.train_fraction));
    rd.train.p0 = all.p0;
    for (int i = 0; i < all.size(); ++i) {
        if (i < n_train) {
            rd.train.subjects.push_back(all.subjects[i]);
            rd.train_index.push_back(i);
        } else {
            rd.test.push_back(all.subjects[i]);
            rd.test_index.push_back(i);
        }
    }
    rd.y_test.resize(rd.test.size());
    for (std::size_t i = 0; i < rd.test.size(); ++i) rd.y_test[i] = rd.test[i].y;
    return rd;
}

// synthetic FPCA container that freezes externally supplied dense trajectories
FpcaResult fixed_trajectory_container(const WorkingGrid& grid, const Eigen::MatrixXd& trajs) {
    FpcaResult f;
    f.grid = grid;
    const int T = static_cast<int>(grid.t.size());
    f.mu = Eigen::VectorXd::Zero(T);
    f.Phi = Eigen::MatrixXd::Identity(T, T);
    f.nu = Eigen::VectorXd::Ones(T);
    f.sigma_x2 = 1.0;
    f.scores = trajs;
    f.pve = 1.0;
    return f;
}

std::vector<std::pair<double, double>> trajectory_hull_points(const Eigen::MatrixXd& trajs,
                                                              const WorkingGrid& grid) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(trajs.rows() * trajs.cols());
    for (Eigen::Index i = 0; i < trajs.rows(); ++i)
        for (Eigen::Index r = 0; r < trajs.cols(); ++r) pts.push_back({trajs(i, r), grid.t[r]});
    return pts;
}

} // namespace

ScenarioReport run_scenario(const Scenario& sc, const std::vector<Method>& methods,
                            int replications, const HarnessOptions& opts) {
    ScenarioReport report;
    report.scenario = sc;

    for (int rep = 0; rep < replications; ++rep) {
        Scenario rsc = sc;
        rsc.seed = Rng::substream(sc.seed, static_cast<std::uint64_t>(rep), 0xda7aULL).next();
        auto [all, truth] = generate_dataset(rsc);
        RepData rd = split_dataset(all, rsc);

        FpcaOptions fopts = opts.fpca;
        fopts.grid_size = sc.grid_size;
        fopts.grid_lo = 0.0;
        fopts.grid_hi = truth.domain;
        FpcaResult pace = pace_init(rd.train, fopts);

        const int n_train = static_cast<int>(rd.train_index.size());

        // evaluation axes over the data range
        auto eval_axes = [&](const Eigen::MatrixXd& trajs, Eigen::VectorXd& xa, Eigen::VectorXd& ta) {
            xa = Eigen::VectorXd::LinSpaced(40, trajs.minCoeff(), trajs.maxCoeff());
            ta = Eigen::VectorXd::LinSpaced(40, 0.0, truth.domain);
        };
        auto truthF = [&](double x, double t) { return surface_value(sc.surface, x, t); };

        auto push = [&](Method m, const std::string& metric, double v) {
            report.rows.push_back({rep, method_name(m), metric, v});
        };

        // dense imputation for the two-step and FLM baselines
        Eigen::MatrixXd pace_trajs(n_train, sc.grid_size);
        for (int i = 0; i < n_train; ++i)
            pace_trajs.row(i) = (pace.mu + pace.Phi * pace.scores.row(i).transpose()).transpose();
        Eigen::MatrixXd true_trajs(n_train, sc.grid_size);
        for (int i = 0; i < n_train; ++i) true_trajs.row(i) = truth.X.row(rd.train_index[i]);

        auto impute_test = [&](const Subject& s) {
            Eigen::MatrixXd Phi_t(s.t.size(), pace.nu.size());
            for (int m = 0; m < pace.nu.size(); ++m)
                Phi_t.col(m) = interp_linear(pace.grid.t, pace.Phi.col(m), s.t);
            Eigen::VectorXd mu_t = interp_linear(pace.grid.t, pace.mu, s.t);
            Eigen::VectorXd xi = blup_scores(s.x - mu_t, Phi_t, pace.nu, pace.sigma_x2);
            return (pace.mu + pace.Phi * xi).eval();
        };

        for (Method m : methods) {
            const auto t0 = std::chrono::steady_clock::now();
            Eigen::MatrixXd trajs;        // n_train x T estimates
            Eigen::VectorXd yhat;         // test predictions
            std::function<double(double, double)> estF;

            switch (m) {
                case Method::Mcmc:
                case Method::VbMcmc: {
                    McmcConfig cfg = (m == Method::Mcmc) ? opts.mcmc : opts.mcmc_warm;
                    cfg.seed = rsc.seed ^ 0x3cfULL;
                    PosteriorSamples ps;
                    if (m == Method::VbMcmc) {
                        VbConfig vcfg = opts.vb;
                        VbState vstate = run_vb(rd.train, pace, vcfg);
                        McmcState warm = vb_to_mcmc_state(vstate);
                        ps = run_mcmc(rd.train, pace, cfg, &warm);
                    } else {
                        ps = run_mcmc(rd.train, pace, cfg);
                    }
                    auto model = std::make_shared<SurfaceModel>(rd.train, pace, cfg.basis);
                    trajs.resize(n_train, sc.grid_size);
                    for (int i = 0; i < n_train; ++i) {
                        Eigen::VectorXd xi_mean = Eigen::VectorXd::Zero(model->M());
                        for (const auto& Xi : ps.Xi) xi_mean += Xi.row(i).transpose();
                        xi_mean /= static_cast<double>(ps.Xi.size());
                        trajs.row(i) = model->trajectory(xi_mean).transpose();
                    }
                    Eigen::VectorXd theta = ps.theta_mean(model->reparam());
                    estF = [model, theta](double x, double t) { return model->surface_at(x, t, theta); };
                    yhat = predict_mcmc(ps, *model, rd.test).mean;
                    break;
                }
                case Method::Vb: {
                    VbConfig cfg = opts.vb;
                    VbState vs = run_vb(rd.train, pace, cfg);
                    auto model = std::make_shared<SurfaceModel>(rd.train, pace, cfg.basis);
                    trajs.resize(n_train, sc.grid_size);
                    for (int i = 0; i < n_train; ++i)
                        trajs.row(i) = model->trajectory(vs.sites[i].xi0).transpose();
                    Eigen::VectorXd theta = model->reparam().reconstruct_theta(vs.mu_beta, vs.mu_delta);
                    estF = [model, theta](double x, double t) { return model->surface_at(x, t, theta); };
                    yhat = predict_vb(vs, *model, rd.test, cfg);
                    break;
                }
                case Method::TrueX:
                case Method::PaceTwoStep: {
                    const Eigen::MatrixXd& tr = (m == Method::TrueX) ? true_trajs : pace_trajs;
                    FpcaResult holder = fixed_trajectory_container(truth.grid, tr);
                    McmcConfig cfg = opts.mcmc;
                    cfg.seed = rsc.seed ^ 0x71eULL;
                    cfg.update_scores = false;
                    cfg.update_sigma_x = false;
                    PosteriorSamples ps = run_mcmc(rd.train, holder, cfg);
                    auto model = std::make_shared<SurfaceModel>(rd.train, holder, cfg.basis);
                    trajs = tr;
                    Eigen::VectorXd theta = ps.theta_mean(model->reparam());
                    Eigen::VectorXd eta0 = ps.eta0.colwise().mean().transpose();
                    estF = [model, theta](double x, double t) { return model->surface_at(x, t, theta); };
                    yhat.resize(rd.test.size());
                    for (std::size_t i = 0; i < rd.test.size(); ++i) {
                        Eigen::VectorXd xt = (m == Method::TrueX)
                                                 ? truth.X.row(rd.test_index[i]).transpose().eval()
                                                 : impute_test(rd.test[i]);
                        Eigen::VectorXd z = model->design_row(xt);
                        Eigen::VectorXd z0, zp;
                        model->reparam().split_design_row(z, z0, zp);
                        Eigen::VectorXd bmean = ps.beta.colwise().mean().transpose();
                        Eigen::VectorXd dmean = ps.delta.colwise().mean().transpose();
                        yhat[i] = rd.test[i].u.dot(eta0) + z0.dot(bmean) + zp.dot(dmean);
                    }
                    break;
                }
                case Method::Flm: {
                    std::vector<Eigen::VectorXd> Xs(n_train);
                    for (int i = 0; i < n_train; ++i) Xs[i] = pace_trajs.row(i).transpose();
                    Eigen::VectorXd ytr(n_train);
                    Eigen::MatrixXd Utr(n_train, rd.train.p0);
                    for (int i = 0; i < n_train; ++i) {
                        ytr[i] = rd.train.subjects[i].y;
                        Utr.row(i) = rd.train.subjects[i].u.transpose();
                    }
                    FlmFit fit = flm_baseline(Xs, ytr, Utr, truth.grid);
                    trajs = pace_trajs;
                    estF = [fit](double x, double t) { return x * fit.beta_at(t); };
                    yhat.resize(rd.test.size());
                    for (std::size_t i = 0; i < rd.test.size(); ++i)
                        yhat[i] = fit.predict(impute_test(rd.test[i]), truth.grid, rd.test[i].u);
                    break;
                }
            }

            push(m, "rmise_x", rmise_x(truth, trajs, rd.train_index));
            Eigen::VectorXd xa, ta;
            eval_axes(trajs, xa, ta);
            push(m, "rise_f", rise_f(truthF, estF, trajectory_hull_points(trajs, truth.grid), xa, ta));
            push(m, "rmse_y", rmse_y(rd.y_test, yhat));
            push(m, "seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
    }
    return report;
}

} // namespace fgam
