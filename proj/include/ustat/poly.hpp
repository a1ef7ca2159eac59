#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "ustat/common.hpp"

namespace ustat {

// Univariate polynomial, coeffs[k] * x^k.
struct Poly1 {
    std::vector<double> c;

    Poly1() = default;
    explicit Poly1(std::vector<double> coeffs) : c(std::move(coeffs)) { trim(); }

    static Poly1 constant(double v) { return Poly1({v}); }

    int degree() const { return c.empty() ? -1 : static_cast<int>(c.size()) - 1; }

    double eval(double x) const {
        double acc = 0.0;
        for (std::size_t k = c.size(); k-- > 0;) acc = acc * x + c[k];
        return acc;
    }

    Poly1& operator+=(const Poly1& o) {
        if (o.c.size() > c.size()) c.resize(o.c.size(), 0.0);
        for (std::size_t k = 0; k < o.c.size(); ++k) c[k] += o.c[k];
        trim();
        return *this;
    }
    Poly1 operator+(const Poly1& o) const { Poly1 r = *this; r += o; return r; }
    Poly1 operator-() const {
        Poly1 r = *this;
        for (double& v : r.c) v = -v;
        return r;
    }
    Poly1 operator-(const Poly1& o) const { return *this + (-o); }
    Poly1 operator*(const Poly1& o) const {
        if (c.empty() || o.c.empty()) return Poly1{};
        Poly1 r;
        r.c.assign(c.size() + o.c.size() - 1, 0.0);
        for (std::size_t a = 0; a < c.size(); ++a)
            for (std::size_t b = 0; b < o.c.size(); ++b) r.c[a + b] += c[a] * o.c[b];
        r.trim();
        return r;
    }
    Poly1 operator*(double s) const {
        Poly1 r = *this;
        for (double& v : r.c) v *= s;
        return r;
    }

    // E[f(X)] for raw moments mu[k] = E[X^k].
    double moment_integral(const std::vector<double>& mu) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < c.size(); ++k) acc += c[k] * mu[k];
        return acc;
    }

    void trim() {
        while (!c.empty() && c.back() == 0.0) c.pop_back();
    }
};

// Bivariate polynomial, sum_{a,b} coef(a,b) x^a y^b. Used for exact-moment
// Hoeffding computations on scalar observations.
struct Poly2 {
    Eigen::MatrixXd m;  // (deg_x+1) x (deg_y+1)

    Poly2() : m(Eigen::MatrixXd::Zero(1, 1)) {}
    explicit Poly2(Eigen::MatrixXd coeffs) : m(std::move(coeffs)) {}

    int deg_x() const { return static_cast<int>(m.rows()) - 1; }
    int deg_y() const { return static_cast<int>(m.cols()) - 1; }

    bool symmetric(double tol = 0.0) const {
        const auto n = std::max(m.rows(), m.cols());
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b) {
                const double cab = (a < m.rows() && b < m.cols()) ? m(a, b) : 0.0;
                const double cba = (b < m.rows() && a < m.cols()) ? m(b, a) : 0.0;
                if (std::abs(cab - cba) > tol) return false;
            }
        return true;
    }

    double eval(double x, double y) const {
        double acc = 0.0;
        for (Eigen::Index a = m.rows(); a-- > 0;) {
            double row = 0.0;
            for (Eigen::Index b = m.cols(); b-- > 0;) row = row * y + m(a, b);
            acc = acc * x + row;
        }
        return acc;
    }

    // Integrate out y against raw moments mu_y: returns polynomial in x.
    Poly1 integrate_y(const std::vector<double>& mu_y) const {
        Poly1 r;
        r.c.assign(static_cast<std::size_t>(m.rows()), 0.0);
        for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b)
                r.c[static_cast<std::size_t>(a)] += m(a, b) * mu_y[static_cast<std::size_t>(b)];
        r.trim();
        return r;
    }
    Poly1 integrate_x(const std::vector<double>& mu_x) const {
        Poly1 r;
        r.c.assign(static_cast<std::size_t>(m.cols()), 0.0);
        for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b)
                r.c[static_cast<std::size_t>(b)] += m(a, b) * mu_x[static_cast<std::size_t>(a)];
        r.trim();
        return r;
    }

    // Full double integral against independent marginals.
    double integrate_xy(const std::vector<double>& mu_x, const std::vector<double>& mu_y) const {
        double acc = 0.0;
        for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b)
                acc += m(a, b) * mu_x[static_cast<std::size_t>(a)] * mu_y[static_cast<std::size_t>(b)];
        return acc;
    }

    // Diagonal restriction psi(x, x).
    Poly1 diagonal() const {
        Poly1 r;
        r.c.assign(static_cast<std::size_t>(m.rows() + m.cols() - 1), 0.0);
        for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b)
                r.c[static_cast<std::size_t>(a + b)] += m(a, b);
        r.trim();
        return r;
    }

    Poly2 operator*(const Poly2& o) const {
        Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m.rows() + o.m.rows() - 1,
                                                  m.cols() + o.m.cols() - 1);
        for (Eigen::Index a = 0; a < m.rows(); ++a)
            for (Eigen::Index b = 0; b < m.cols(); ++b) {
                if (m(a, b) == 0.0) continue;
                for (Eigen::Index c = 0; c < o.m.rows(); ++c)
                    for (Eigen::Index d = 0; d < o.m.cols(); ++d)
                        r(a + c, b + d) += m(a, b) * o.m(c, d);
            }
        return Poly2(std::move(r));
    }
    Poly2 operator*(double s) const { return Poly2(m * s); }
    Poly2 operator+(const Poly2& o) const {
        Eigen::MatrixXd r = Eigen::MatrixXd::Zero(std::max(m.rows(), o.m.rows()),
                                                  std::max(m.cols(), o.m.cols()));
        r.topLeftCorner(m.rows(), m.cols()) = m;
        r.topLeftCorner(o.m.rows(), o.m.cols()) += o.m;
        return Poly2(std::move(r));
    }
    Poly2 operator-(const Poly2& o) const { return *this + (o * -1.0); }

    // Add f(x) (as polynomial in x only) or g(y).
    static Poly2 from_x(const Poly1& f) {
        Eigen::MatrixXd r = Eigen::MatrixXd::Zero(std::max<std::size_t>(f.c.size(), 1), 1);
        for (std::size_t k = 0; k < f.c.size(); ++k) r(static_cast<Eigen::Index>(k), 0) = f.c[k];
        return Poly2(std::move(r));
    }
    static Poly2 from_y(const Poly1& f) {
        Eigen::MatrixXd r = Eigen::MatrixXd::Zero(1, std::max<std::size_t>(f.c.size(), 1));
        for (std::size_t k = 0; k < f.c.size(); ++k) r(0, static_cast<Eigen::Index>(k)) = f.c[k];
        return Poly2(std::move(r));
    }
};

}  // namespace ustat
