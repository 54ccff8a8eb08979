#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fgam/sim.hpp"

#include <cmath>
#include <set>

using namespace fgam;

TEST_CASE("generator moments and structure") {
    Scenario sc;
    sc.N = 10000;
    sc.J = 10;
    sc.sigma_x = 1.0;
    sc.seed = 2;
    auto [data, truth] = generate_dataset(sc);

    for (int j = 0; j < 4; ++j) {
        const double want = 8.0 / ((j + 1.0) * (j + 1.0));
        const double var = truth.scores.col(j).squaredNorm() / sc.N;
        CHECK(std::abs(var - want) / want < 0.05);
    }

    // observation times: J distinct grid points, increasing
    for (int i = 0; i < 50; ++i) {
        const auto& s = data.subjects[i];
        REQUIRE(s.t.size() == 10);
        std::set<double> seen;
        for (int j = 0; j < 10; ++j) {
            seen.insert(s.t[j]);
            if (j > 0) CHECK(s.t[j] > s.t[j - 1]);
        }
        CHECK(seen.size() == 10);
    }

    // trajectories equal the score expansion by construction
    Eigen::MatrixXd Phi(truth.grid.t.size(), 4);
    for (int r = 0; r < truth.grid.t.size(); ++r) {
        const double u = truth.grid.t[r];
        Phi(r, 0) = std::sin(M_PI * u);
        Phi(r, 1) = std::cos(M_PI * u);
        Phi(r, 2) = std::sin(2 * M_PI * u);
        Phi(r, 3) = std::cos(2 * M_PI * u);
    }
    Eigen::MatrixXd rec = truth.scores * Phi.transpose();
    CHECK((rec - truth.X).cwiseAbs().maxCoeff() < 1e-12);

    Scenario bad = sc;
    bad.J = 60;
    CHECK_THROWS(generate_dataset(bad));
}

TEST_CASE("surface definitions") {
    CHECK(surface_value(SurfaceKind::F1, 1.0, 0.5) == doctest::Approx(2.0));
    CHECK(surface_value(SurfaceKind::F2, 0.0, 0.0) == doctest::Approx(20.0 * std::cos(-5.0)));
    CHECK(surface_domain(SurfaceKind::F2) == 10.0);

    Scenario sc;
    sc.surface = SurfaceKind::F2;
    sc.N = 3;
    sc.J = 10;
    auto [data, truth] = generate_dataset(sc);
    CHECK(truth.surface_value(0.0, 0.0) == doctest::Approx(20.0 * std::cos(-5.0)));
    CHECK_THROWS(truth.surface_value(0.0, 20.0)); // outside [0, 10]
}

TEST_CASE("trajectory error metric") {
    Scenario sc;
    sc.N = 20;
    sc.J = 10;
    sc.seed = 5;
    auto [data, truth] = generate_dataset(sc);
    std::vector<int> idx;
    for (int i = 0; i < 20; ++i) idx.push_back(i);

    Eigen::MatrixXd est = truth.X;
    CHECK(rmise_x(truth, est, idx) == 0.0);

    est.array() += 1.0; // constant offset over |T| = 1
    CHECK(rmise_x(truth, est, idx) == doctest::Approx(1.0).epsilon(1e-12));

    // smooth random perturbation vs a 10x-resolution Riemann oracle
    Rng rng(9);
    Eigen::MatrixXd noisy = truth.X;
    for (int i = 0; i < noisy.rows(); ++i) {
        const double a = 0.3 * rng.normal(), ph = rng.uniform(0.0, 6.28);
        for (int j = 0; j < noisy.cols(); ++j) noisy(i, j) += a * std::sin(5.0 * truth.grid.t[j] + ph);
    }
    const double got = rmise_x(truth, noisy, idx);
    // fine-grid oracle: integrate the squared piecewise-linear difference
    Eigen::VectorXd fine_t = Eigen::VectorXd::LinSpaced(491, 0.0, 1.0);
    Eigen::VectorXd Lf = quadrature_weights(fine_t);
    double acc = 0.0;
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd diff = (noisy.row(i) - truth.X.row(i)).transpose();
        Eigen::VectorXd df = interp_linear(truth.grid.t, diff, fine_t);
        acc += Lf.dot(df.cwiseAbs2());
    }
    const double oracle = std::sqrt(acc / 20);
    CHECK(std::abs(got - oracle) < 1e-3);
}

TEST_CASE("convex hull and surface error metric") {
    // triangle hull
    std::vector<std::pair<double, double>> tri{{0, 0}, {1, 0}, {0, 1}, {0.2, 0.2}};
    auto hull = convex_hull(tri);
    CHECK(hull.size() == 3);
    CHECK(point_in_hull(hull, 0.25, 0.25));
    CHECK_FALSE(point_in_hull(hull, 0.9, 0.9));

    // rectangle hull with known area; constant error restores c * sqrt(area)
    std::vector<std::pair<double, double>> box{{0, 0}, {1, 0}, {0, 2}, {1, 2}};
    Eigen::VectorXd xa = Eigen::VectorXd::LinSpaced(41, -0.505, 1.505);
    Eigen::VectorXd ta = Eigen::VectorXd::LinSpaced(37, -0.505, 2.505);
    const double dx = (xa[40] - xa[0]) / 40, dt = (ta[36] - ta[0]) / 36;
    long inside = 0;
    for (int i = 0; i < 41; ++i)
        for (int j = 0; j < 37; ++j)
            if (xa[i] >= 0 && xa[i] <= 1 && ta[j] >= 0 && ta[j] <= 2) ++inside;
    auto truthF = [](double x, double t) { return std::sin(x) + t; };
    const double c = 0.7;
    auto estF = [&](double x, double t) { return truthF(x, t) + c; };
    const double got = rise_f(truthF, estF, box, xa, ta);
    CHECK(got == doctest::Approx(c * std::sqrt(inside * dx * dt)).epsilon(1e-12));

    // exact estimate gives zero
    CHECK(rise_f(truthF, truthF, box, xa, ta) == 0.0);

    // appending far-outside axis rows leaves the value unchanged
    Eigen::VectorXd xa2(45);
    xa2.head(41) = xa;
    for (int k = 0; k < 4; ++k) xa2[41 + k] = 50.0 + k * (xa[1] - xa[0]);
    // same spacing requirement: rebuild with identical spacing
    Eigen::VectorXd xa3 = Eigen::VectorXd::LinSpaced(61, -0.505, 1.505 + 20 * (xa[1] - xa[0]));
    const double got3 = rise_f(truthF, estF, box, xa3, ta);
    CHECK(got3 == doctest::Approx(got).epsilon(1e-12));

    // degenerate hull errors
    std::vector<std::pair<double, double>> line{{0, 0}, {1, 1}, {2, 2}};
    CHECK_THROWS(rise_f(truthF, estF, line, xa, ta));
}

TEST_CASE("response error metric") {
    Eigen::VectorXd a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    CHECK(rmse_y(a, a) == 0.0);
    CHECK(rmse_y(a, b) == doctest::Approx(std::sqrt(25.0 / 2.0)));
    Eigen::VectorXd c = a.array() + 1.0;
    CHECK(rmse_y(a, c) == doctest::Approx(1.0));
    CHECK_THROWS(rmse_y(Eigen::VectorXd(), Eigen::VectorXd()));
}

TEST_CASE("functional linear baseline") {
    // FLM truth beta(t) = 2 sin(pi t); trajectories rich enough to identify
    // beta across the whole spline basis
    WorkingGrid grid = make_working_grid(0.0, 1.0, 50);
    const int N = 150;
    Rng rng(21);
    std::vector<Eigen::VectorXd> X(N);
    Eigen::VectorXd y(N);
    Eigen::MatrixXd U = Eigen::MatrixXd::Ones(N, 1);
    for (int i = 0; i < N; ++i) {
        X[i].resize(50);
        X[i].setZero();
        for (int j = 1; j <= 8; ++j) {
            const double a = 3.0 * rng.normal() / j, b = 3.0 * rng.normal() / j;
            for (int r = 0; r < 50; ++r)
                X[i][r] += a * std::sin(j * M_PI * grid.t[r]) + b * std::cos(j * M_PI * grid.t[r]);
        }
        double integral = 0.0;
        for (int r = 0; r < 50; ++r) integral += grid.L[r] * 2.0 * std::sin(M_PI * grid.t[r]) * X[i][r];
        y[i] = integral + 0.1 * rng.normal();
    }
    FlmFit fit = flm_baseline(X, y, U, grid);

    double ise = 0.0;
    for (int r = 0; r < grid.t.size(); ++r) {
        const double err = fit.beta_at(grid.t[r]) - 2.0 * std::sin(M_PI * grid.t[r]);
        ise += grid.L[r] * err * err;
    }
    CHECK(std::sqrt(ise) < 0.1);

    // design columns: independently assembled quadrature plus a fine-grid
    // sanity bound (the T=50 trapezoid error itself is O(1e-3))
    Eigen::MatrixXd B = fit.bt.eval(grid.t);
    Eigen::VectorXd z_impl = B.transpose() * grid.L.cwiseProduct(X[0]);
    for (int k = 0; k < 10; ++k) {
        double acc = 0.0;
        for (int r = 0; r < grid.t.size(); ++r) acc += grid.L[r] * X[0][r] * B(r, k);
        CHECK(std::abs(z_impl[k] - acc) < 1e-12);
    }
    Eigen::VectorXd fine_t = Eigen::VectorXd::LinSpaced(4901, 0.0, 1.0);
    Eigen::VectorXd Lf = quadrature_weights(fine_t);
    Eigen::MatrixXd Bf = fit.bt.eval(fine_t);
    Eigen::VectorXd Xf = Eigen::VectorXd::Zero(4901);
    {
        Rng rx(21); // replay the trajectory coefficients of subject 0
        for (int j = 1; j <= 8; ++j) {
            const double a = 3.0 * rx.normal() / j, b = 3.0 * rx.normal() / j;
            for (int r = 0; r < 4901; ++r)
                Xf[r] += a * std::sin(j * M_PI * fine_t[r]) + b * std::cos(j * M_PI * fine_t[r]);
        }
    }
    for (int k = 0; k < 10; ++k) {
        const double exact = Lf.dot(Xf.cwiseProduct(Bf.col(k)));
        CHECK(std::abs(z_impl[k] - exact) < 5e-3);
    }

    // zero trajectories: slopes vanish, intercept is the response mean
    std::vector<Eigen::VectorXd> Z(N, Eigen::VectorXd::Zero(grid.t.size()));
    FlmFit zfit = flm_baseline(Z, y, U, grid);
    CHECK(zfit.coef_b.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(zfit.eta0[0] == doctest::Approx(y.mean()).epsilon(1e-6));
}

TEST_CASE("scenario harness structure and determinism") {
    Scenario sc;
    sc.N = 30;
    sc.J = 10;
    sc.sigma_x = 1.0;
    sc.seed = 77;
    HarnessOptions opts;
    opts.vb.max_iters = 30;
    opts.mcmc.iters = 120;
    opts.mcmc.burnin = 40;
    opts.mcmc_warm.iters = 80;
    opts.mcmc_warm.burnin = 30;

    std::vector<Method> methods{Method::Vb, Method::Flm, Method::PaceTwoStep};
    ScenarioReport a = run_scenario(sc, methods, 2, opts);
    CHECK(a.rows.size() == 2 * methods.size() * 4);
    // 30 * (2/3) = 20 train, 10 test subjects
    CHECK(a.values("vb", "rmse_y").size() == 2);
    CHECK(a.median("flm", "rmise_x") >= 0.0);

    ScenarioReport b = run_scenario(sc, methods, 2, opts);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].method == b.rows[i].method);
        if (a.rows[i].metric != "seconds") CHECK(a.rows[i].value == b.rows[i].value);
    }
}

TEST_CASE("oracle with true curves dominates sparse fits in the hardest scenario") {
    // J = 10, sigma_x = 4: statistical ordering over 20 seeded replications
    Scenario sc;
    sc.N = 60;
    sc.J = 10;
    sc.sigma_x = 4.0;
    sc.seed = 1234;
    HarnessOptions opts;
    opts.mcmc.iters = 600;
    opts.mcmc.burnin = 200;
    opts.vb.max_iters = 60;
    std::vector<Method> methods{Method::TrueX, Method::Mcmc, Method::Vb};
    ScenarioReport rep = run_scenario(sc, methods, 20, opts);
    const double oracle = rep.median("truex", "rmse_y");
    CHECK(oracle <= rep.median("mcmc", "rmse_y"));
    CHECK(oracle <= rep.median("vb", "rmse_y"));
}
