#include "fgam/bspline.hpp"

#include "fgam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fgam {

SplineBasis::SplineBasis(int degree, Eigen::VectorXd knots, int num_basis, double lo, double hi)
    : degree_(degree), knots_(std::move(knots)), num_basis_(num_basis), lo_(lo), hi_(hi) {}

SplineBasis SplineBasis::uniform(int num_basis, int degree, double lo, double hi) {
    if (degree < 0) throw std::invalid_argument("spline degree must be >= 0");
    if (!(hi > lo)) throw std::invalid_argument("spline domain must have lo < hi");
    const int interior = num_basis - degree - 1;
    if (interior < 0) throw std::invalid_argument("num_basis must be at least degree + 1");
    Eigen::VectorXd knots(num_basis + degree + 1);
    const double h = (hi - lo) / static_cast<double>(interior + 1);
    for (int i = 0; i <= degree; ++i) knots[i] = lo;
    for (int i = 0; i < interior; ++i) knots[degree + 1 + i] = lo + h * (i + 1);
    for (int i = 0; i <= degree; ++i) knots[num_basis + i] = hi;
    return SplineBasis(degree, std::move(knots), num_basis, lo, hi);
}

// Cox-de Boor with derivatives (the band of degree+1 values at x).
void SplineBasis::eval_local(double x, int deriv_order, int& first, double* out) const {
    const int p = degree_;
    const int k = p + 1; // order
    if (x < lo_) x = lo_;
    if (x > hi_) x = hi_;

    // span: largest i with knots[i] <= x < knots[i+1], clamped so the span is
    // a nonempty interval (x == hi lands in the last interval).
    int i;
    if (x >= hi_) {
        i = num_basis_ - 1;
    } else {
        const double* lob = knots_.data() + p;
        const double* hib = knots_.data() + num_basis_ + 1;
        i = static_cast<int>(std::upper_bound(lob, hib, x) - knots_.data()) - 1;
    }
    first = i - p;

    // triangular table of basis values by order
    std::vector<double> left(k), right(k);
    std::vector<std::vector<double>> ndu(k, std::vector<double>(k));
    ndu[0][0] = 1.0;
    for (int j = 1; j < k; ++j) {
        left[j] = x - knots_[i + 1 - j];
        right[j] = knots_[i + j] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            ndu[j][r] = right[r + 1] + left[j - r];
            const double temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    if (deriv_order == 0) {
        for (int j = 0; j < k; ++j) out[j] = ndu[j][k - 1];
        return;
    }

    // derivatives via the a-coefficient recursion
    std::vector<std::vector<double>> ders(deriv_order + 1, std::vector<double>(k, 0.0));
    for (int j = 0; j < k; ++j) ders[0][j] = ndu[j][k - 1];
    std::vector<std::vector<double>> a(2, std::vector<double>(k));
    for (int r = 0; r < k; ++r) {
        int s1 = 0, s2 = 1;
        a[0][0] = 1.0;
        for (int d = 1; d <= deriv_order; ++d) {
            double dv = 0.0;
            const int rk = r - d, pk = p - d;
            if (r >= d) {
                const double den = ndu[pk + 1][rk];
                a[s2][0] = (den == 0.0) ? 0.0 : a[s1][0] / den;
                dv = a[s2][0] * ndu[rk][pk];
            }
            const int j1 = (rk >= -1) ? 1 : -rk;
            const int j2 = (r - 1 <= pk) ? d - 1 : p - r;
            for (int j = j1; j <= j2; ++j) {
                const double den = ndu[pk + 1][rk + j];
                a[s2][j] = (den == 0.0) ? 0.0 : (a[s1][j] - a[s1][j - 1]) / den;
                dv += a[s2][j] * ndu[rk + j][pk];
            }
            if (r <= pk) {
                const double den = ndu[pk + 1][r];
                a[s2][d] = (den == 0.0) ? 0.0 : -a[s1][d - 1] / den;
                dv += a[s2][d] * ndu[r][pk];
            }
            ders[d][r] = dv;
            std::swap(s1, s2);
        }
    }
    double factor = static_cast<double>(p);
    for (int d = 1; d <= deriv_order; ++d) {
        for (int j = 0; j < k; ++j) ders[d][j] *= factor;
        factor *= static_cast<double>(p - d);
    }
    for (int j = 0; j < k; ++j) out[j] = ders[deriv_order][j];
}

Eigen::MatrixXd SplineBasis::eval(const Eigen::VectorXd& points) const {
    if (points.size() == 0) throw std::invalid_argument("bspline eval: empty point vector");
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(points.size(), num_basis_);
    std::vector<double> buf(degree_ + 1);
    for (Eigen::Index r = 0; r < points.size(); ++r) {
        int first;
        eval_local(points[r], 0, first, buf.data());
        for (int j = 0; j <= degree_; ++j) B(r, first + j) = buf[j];
    }
    return B;
}

Eigen::MatrixXd SplineBasis::deriv(const Eigen::VectorXd& points, int order) const {
    if (order < 1 || order > 2) throw std::invalid_argument("bspline deriv: order must be 1 or 2");
    if (order > degree_) throw std::invalid_argument("bspline deriv: order exceeds degree");
    if (points.size() == 0) throw std::invalid_argument("bspline deriv: empty point vector");
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(points.size(), num_basis_);
    std::vector<double> buf(degree_ + 1);
    for (Eigen::Index r = 0; r < points.size(); ++r) {
        int first;
        eval_local(points[r], order, first, buf.data());
        for (int j = 0; j <= degree_; ++j) B(r, first + j) = buf[j];
    }
    return B;
}

Eigen::VectorXd SplineBasis::greville() const {
    Eigen::VectorXd g(num_basis_);
    for (int j = 0; j < num_basis_; ++j) {
        double s = 0.0;
        for (int m = 1; m <= degree_; ++m) s += knots_[j + m];
        g[j] = degree_ > 0 ? s / degree_ : 0.5 * (knots_[j] + knots_[j + 1]);
    }
    return g;
}

DifferencePenalty difference_matrix(int K, int d) {
    if (d < 1 || d >= K) throw std::invalid_argument("difference_matrix: require 1 <= d < K");
    // d-th forward difference: row i has (-1)^{d-m} C(d,m) at column i+m.
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(d + 1);
    coef[0] = 1.0;
    for (int row = 1; row <= d; ++row)
        for (int j = row; j >= 1; --j) coef[j] += coef[j - 1];
    DifferencePenalty pen;
    pen.order = d;
    pen.D = Eigen::MatrixXd::Zero(K - d, K);
    for (int i = 0; i < K - d; ++i)
        for (int m = 0; m <= d; ++m) pen.D(i, i + m) = coef[m] * (((d - m) % 2 == 0) ? 1.0 : -1.0);
    pen.gram = pen.D.transpose() * pen.D;
    return pen;
}

Eigen::VectorXd quadrature_weights(const Eigen::VectorXd& t) {
    if (t.size() < 2) throw std::invalid_argument("quadrature_weights: need at least two points");
    for (Eigen::Index i = 1; i < t.size(); ++i)
        if (!(t[i] > t[i - 1])) throw std::invalid_argument("quadrature_weights: grid must be increasing");
    Eigen::VectorXd L = Eigen::VectorXd::Zero(t.size());
    for (Eigen::Index i = 0; i + 1 < t.size(); ++i) {
        const double h = 0.5 * (t[i + 1] - t[i]);
        L[i] += h;
        L[i + 1] += h;
    }
    return L;
}

WorkingGrid make_working_grid(double lo, double hi, int size) {
    if (size < 2) throw std::invalid_argument("working grid needs at least two points");
    if (!(hi > lo)) throw std::invalid_argument("working grid needs lo < hi");
    WorkingGrid g;
    g.t = Eigen::VectorXd::LinSpaced(size, lo, hi);
    g.L = quadrature_weights(g.t);
    return g;
}

Eigen::VectorXd interp_linear(const Eigen::VectorXd& grid_t, const Eigen::VectorXd& values,
                              const Eigen::VectorXd& points) {
    Eigen::VectorXd out(points.size());
    const Eigen::Index T = grid_t.size();
    for (Eigen::Index i = 0; i < points.size(); ++i) {
        double p = std::clamp(points[i], grid_t[0], grid_t[T - 1]);
        auto it = std::upper_bound(grid_t.data(), grid_t.data() + T, p);
        Eigen::Index hi = std::clamp<Eigen::Index>(it - grid_t.data(), 1, T - 1);
        const Eigen::Index lo = hi - 1;
        const double w = (p - grid_t[lo]) / (grid_t[hi] - grid_t[lo]);
        out[i] = (1.0 - w) * values[lo] + w * values[hi];
    }
    return out;
}

} // namespace fgam
