#include "fgam/fpca.hpp"

#include "fgam/errors.hpp"
#include "fgam/psmooth.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

namespace fgam {

namespace {

void pooled_observations(const SparseFunctionalDataset& data, Eigen::VectorXd& t, Eigen::VectorXd& x) {
    const long n = data.total_observations();
    t.resize(n);
    x.resize(n);
    long k = 0;
    for (const auto& s : data.subjects)
        for (Eigen::Index j = 0; j < s.t.size(); ++j) {
            t[k] = s.t[j];
            x[k] = s.x[j];
            ++k;
        }
}

Eigen::VectorXd eval_spline(const SplineBasis& basis, const Eigen::VectorXd& coefs,
                            const Eigen::VectorXd& points) {
    Eigen::VectorXd out(points.size());
    std::vector<double> buf(basis.degree() + 1);
    for (Eigen::Index i = 0; i < points.size(); ++i) {
        int first;
        basis.eval_local(points[i], 0, first, buf.data());
        double v = 0.0;
        for (int a = 0; a <= basis.degree(); ++a) v += buf[a] * coefs[first + a];
        out[i] = v;
    }
    return out;
}

} // namespace

void SparseFunctionalDataset::time_range(double& lo, double& hi) const {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (const auto& s : subjects) {
        if (s.t.size() == 0) continue;
        lo = std::min(lo, s.t.minCoeff());
        hi = std::max(hi, s.t.maxCoeff());
    }
    if (!(hi > lo)) throw DataError("dataset: degenerate pooled time range");
}

void SparseFunctionalDataset::validate() const {
    if (subjects.empty()) throw DataError("dataset: no subjects");
    for (const auto& s : subjects) {
        if (s.t.size() == 0) throw DataError("dataset: subject '" + s.id + "' has no observations");
        if (s.t.size() != s.x.size()) throw DataError("dataset: subject '" + s.id + "' time/value length mismatch");
        for (Eigen::Index j = 0; j < s.t.size(); ++j) {
            if (!std::isfinite(s.t[j]) || !std::isfinite(s.x[j]))
                throw DataError("dataset: subject '" + s.id + "' has non-finite observations");
            if (j > 0 && !(s.t[j] > s.t[j - 1]))
                throw DataError("dataset: subject '" + s.id + "' times not strictly increasing");
        }
        if (s.has_response && !std::isfinite(s.y)) throw DataError("dataset: subject '" + s.id + "' has non-finite response");
        if (s.u.size() != p0) throw DataError("dataset: subject '" + s.id + "' offset length mismatch");
    }
}

Eigen::VectorXd estimate_mean(const SparseFunctionalDataset& data, const WorkingGrid& grid,
                              int mean_bases) {
    Eigen::VectorXd t, x;
    pooled_observations(data, t, x);
    const double lo = grid.t[0], hi = grid.t[grid.t.size() - 1];
    double tmin = t.minCoeff(), tmax = t.maxCoeff();
    if (!(tmax > tmin)) throw DataError("estimate_mean: all pooled observation times identical");
    SplineBasis basis = SplineBasis::uniform(mean_bases, 3, std::min(lo, tmin), std::max(hi, tmax));
    GcvFit fit = psmooth_fit(t, x, basis, 2);
    return eval_spline(basis, fit.coefs, grid.t);
}

// Tensor smoother over raw covariance products; s==t rows are dropped so a
// diagonal measurement-error spike cannot leak into the surface.
Eigen::MatrixXd estimate_covariance_from_products(const Eigen::VectorXd& s, const Eigen::VectorXd& t,
                                                  const Eigen::VectorXd& v, const WorkingGrid& grid,
                                                  int cov_bases, int penalty_order) {
    std::vector<double> fs, ft, fv;
    fs.reserve(s.size());
    ft.reserve(s.size());
    fv.reserve(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] == t[i]) continue;
        fs.push_back(s[i]);
        ft.push_back(t[i]);
        fv.push_back(v[i]);
    }
    if (fs.empty()) throw DataError("estimate_covariance: no off-diagonal raw products available");
    Eigen::Map<Eigen::VectorXd> ms(fs.data(), fs.size()), mt(ft.data(), ft.size()), mv(fv.data(), fv.size());

    const double lo = grid.t[0], hi = grid.t[grid.t.size() - 1];
    SplineBasis basis = SplineBasis::uniform(cov_bases, 3, lo, hi);
    GcvFit fit = psmooth_fit_tensor(ms, mt, mv, basis, penalty_order);

    const int T = static_cast<int>(grid.t.size());
    const int K = basis.num_basis();
    Eigen::MatrixXd B(T, K);
    {
        std::vector<double> buf(basis.degree() + 1);
        B.setZero();
        for (int i = 0; i < T; ++i) {
            int first;
            basis.eval_local(grid.t[i], 0, first, buf.data());
            for (int a = 0; a <= basis.degree(); ++a) B(i, first + a) = buf[a];
        }
    }
    // coefficient layout is s-major: coefs[a*K+b] multiplies B_a(s)B_b(t)
    Eigen::MatrixXd Coef(K, K);
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b) Coef(a, b) = fit.coefs[a * K + b];
    Eigen::MatrixXd G = B * Coef * B.transpose();
    return 0.5 * (G + G.transpose());
}

Eigen::MatrixXd estimate_covariance(const SparseFunctionalDataset& data, const WorkingGrid& grid,
                                    const Eigen::VectorXd& mean, int cov_bases, int penalty_order) {
    bool any_pair = false;
    for (const auto& s : data.subjects)
        if (s.t.size() >= 2) any_pair = true;
    if (!any_pair) throw DataError("estimate_covariance: no subject has two or more observations");

    std::vector<double> ps, pt, pv;
    for (const auto& subj : data.subjects) {
        const Eigen::Index n = subj.t.size();
        if (n < 2) continue;
        Eigen::VectorXd mu_i = interp_linear(grid.t, mean, subj.t);
        Eigen::VectorXd r = subj.x - mu_i;
        for (Eigen::Index l = 0; l < n; ++l)
            for (Eigen::Index m = 0; m < n; ++m) {
                if (l == m) continue;
                ps.push_back(subj.t[l]);
                pt.push_back(subj.t[m]);
                pv.push_back(r[l] * r[m]);
            }
    }
    Eigen::Map<Eigen::VectorXd> ms(ps.data(), ps.size()), mt(pt.data(), pt.size()), mv(pv.data(), pv.size());
    return estimate_covariance_from_products(ms, mt, mv, grid, cov_bases, penalty_order);
}

void middle_two_thirds(int T, int& first, int& last) {
    const int trim = T / 6;
    first = trim + 1;
    last = T - trim;
}

NoiseEstimate estimate_noise_variance(const Eigen::VectorXd& raw_diag,
                                      const Eigen::VectorXd& smooth_diag, double floor_value) {
    if (raw_diag.size() != smooth_diag.size() || raw_diag.size() == 0)
        throw std::invalid_argument("estimate_noise_variance: length mismatch");
    int first, last;
    middle_two_thirds(static_cast<int>(raw_diag.size()), first, last);
    double acc = 0.0;
    for (int i = first; i <= last; ++i) acc += raw_diag[i - 1] - smooth_diag[i - 1];
    acc /= static_cast<double>(last - first + 1);
    NoiseEstimate est;
    if (acc < floor_value) {
        est.value = floor_value;
        est.floored = true;
    } else {
        est.value = acc;
    }
    return est;
}

void eigendecompose(const Eigen::MatrixXd& G, const WorkingGrid& grid, double pve_target, int max_M,
                    Eigen::VectorXd& nu, Eigen::MatrixXd& Phi, double* pve_out) {
    if ((G - G.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + G.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("eigendecompose: covariance must be symmetric");
    const Eigen::Index T = G.rows();
    Eigen::VectorXd w = grid.L.cwiseSqrt();
    Eigen::MatrixXd Gs = w.asDiagonal() * G * w.asDiagonal();
    Gs = 0.5 * (Gs + Gs.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gs);
    if (es.info() != Eigen::Success) throw NumericError("eigendecompose: solver failed");

    std::vector<std::pair<double, Eigen::Index>> pos;
    for (Eigen::Index i = 0; i < T; ++i)
        if (es.eigenvalues()[i] > 0.0) pos.push_back({es.eigenvalues()[i], i});
    if (pos.empty()) throw NumericError("eigendecompose: no positive eigenvalues");
    std::sort(pos.begin(), pos.end(), [](auto& a, auto& b) { return a.first > b.first; });

    double total = 0.0;
    for (auto& p : pos) total += p.first;
    int M = 0;
    double cum = 0.0;
    for (auto& p : pos) {
        ++M;
        cum += p.first;
        if (cum / total >= pve_target) break;
    }
    if (max_M > 0) M = std::min(M, max_M);
    M = std::min<int>(M, static_cast<int>(pos.size()));

    nu.resize(M);
    Phi.resize(T, M);
    double retained = 0.0;
    for (int m = 0; m < M; ++m) {
        nu[m] = pos[m].first;
        retained += pos[m].first;
        Eigen::VectorXd u = es.eigenvectors().col(pos[m].second);
        Eigen::VectorXd phi = u.cwiseQuotient(w);
        // unit quadrature norm, deterministic sign: largest-magnitude entry positive
        const double nrm = std::sqrt(phi.cwiseAbs2().dot(grid.L));
        phi /= nrm;
        Eigen::Index imax;
        phi.cwiseAbs().maxCoeff(&imax);
        if (phi[imax] < 0) phi = -phi;
        Phi.col(m) = phi;
    }
    if (pve_out) *pve_out = retained / total;
}

Eigen::VectorXd blup_scores(const Eigen::VectorXd& centered_x, const Eigen::MatrixXd& Phi_t,
                            const Eigen::VectorXd& nu, double sigma_x2) {
    if (sigma_x2 <= 0.0) throw std::invalid_argument("blup_scores: sigma_x2 must be positive");
    const Eigen::Index n = centered_x.size();
    Eigen::MatrixXd inner = Phi_t * nu.asDiagonal() * Phi_t.transpose();
    inner.diagonal().array() += sigma_x2;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
    if (ldlt.info() != Eigen::Success) throw NumericError("blup_scores: singular inner matrix");
    (void)n;
    return nu.asDiagonal() * Phi_t.transpose() * ldlt.solve(centered_x);
}

FpcaResult pace_init(const SparseFunctionalDataset& data, const FpcaOptions& opts) {
    data.validate();
    double lo, hi;
    data.time_range(lo, hi);
    if (opts.grid_lo) lo = *opts.grid_lo;
    if (opts.grid_hi) hi = *opts.grid_hi;

    FpcaResult res;
    res.grid = make_working_grid(lo, hi, opts.grid_size);
    res.mu = estimate_mean(data, res.grid, opts.mean_bases);

    Eigen::MatrixXd G = estimate_covariance(data, res.grid, res.mu, opts.cov_bases, opts.cov_penalty_order);

    // raw variance curve: smooth of squared residuals on the grid
    Eigen::VectorXd t, x;
    pooled_observations(data, t, x);
    Eigen::VectorXd raw_diag;
    {
        Eigen::VectorXd mu_t = interp_linear(res.grid.t, res.mu, t);
        Eigen::VectorXd sq = (x - mu_t).cwiseAbs2();
        SplineBasis basis = SplineBasis::uniform(opts.mean_bases, 3, res.grid.t[0], res.grid.t[res.grid.t.size() - 1]);
        GcvFit fit = psmooth_fit(t, sq, basis, 2);
        raw_diag = eval_spline(basis, fit.coefs, res.grid.t);
    }
    const double pooled_var = (x.array() - x.mean()).square().sum() / std::max<double>(1.0, x.size() - 1);
    const double floor_value = 1e-4 * pooled_var;
    NoiseEstimate noise = estimate_noise_variance(raw_diag, G.diagonal(), floor_value);
    res.sigma_x2 = noise.value;
    res.noise_floored = noise.floored;

    // diagnostics before repair: how much negative mass does the raw surface carry?
    {
        Eigen::VectorXd w = res.grid.L.cwiseSqrt();
        Eigen::MatrixXd Gs = w.asDiagonal() * G * w.asDiagonal();
        Gs = 0.5 * (Gs + Gs.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Gs);
        double posm = 0.0, negm = 0.0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
            const double e = es.eigenvalues()[i];
            if (e > 0)
                posm += e;
            else
                negm -= e;
        }
        if (posm <= 0.0 || negm > 0.02 * posm) res.ill_conditioned = true;
    }
    if (res.noise_floored) res.ill_conditioned = true;

    eigendecompose(G, res.grid, opts.pve, opts.max_pcs, res.nu, res.Phi, &res.pve);
    if (res.nu[res.nu.size() - 1] < 1e-10 * res.nu[0]) res.ill_conditioned = true;

    const int M = static_cast<int>(res.nu.size());
    res.scores.resize(data.size(), M);
    for (int i = 0; i < data.size(); ++i) {
        const auto& s = data.subjects[i];
        Eigen::MatrixXd Phi_t(s.t.size(), M);
        for (int m = 0; m < M; ++m) Phi_t.col(m) = interp_linear(res.grid.t, res.Phi.col(m), s.t);
        Eigen::VectorXd mu_t = interp_linear(res.grid.t, res.mu, s.t);
        res.scores.row(i) = blup_scores(s.x - mu_t, Phi_t, res.nu, res.sigma_x2).transpose();
    }
    return res;
}

} // namespace fgam
