#pragma once

// Riemannian 3-manifolds given by a single global chart. Every supported kind
// is conformally flat, g = exp(2 phi) * I, so connection and curvature follow
// from phi and its first two derivatives.

#include "willmore/error.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

namespace willmore {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

enum class AmbientKind { Euclidean, Hyperbolic, Spherical, Conformal };

inline std::string to_string(AmbientKind kind)
{
    switch (kind) {
    case AmbientKind::Euclidean: return "euclidean";
    case AmbientKind::Hyperbolic: return "hyperbolic";
    case AmbientKind::Spherical: return "spherical";
    case AmbientKind::Conformal: return "conformal";
    }
    return "unknown";
}

/// Gamma(k, i, j) = Γ^k_ij.
struct Christoffel {
    std::array<double, 27> c{};
    double& operator()(int k, int i, int j) { return c[9 * k + 3 * i + j]; }
    double operator()(int k, int i, int j) const { return c[9 * k + 3 * i + j]; }

    /// Γ(u, v)^k = Γ^k_ij u^i v^j
    Vec3 contract(const Vec3& u, const Vec3& v) const
    {
        Vec3 out;
        for (int k = 0; k < 3; ++k) {
            double s = 0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) s += (*this)(k, i, j) * u[i] * v[j];
            out[k] = s;
        }
        return out;
    }
};

/// Generic rank-4 tensor on a 3-dimensional chart, T(a, b, c, d).
struct Tensor4 {
    std::array<double, 81> t{};
    double& operator()(int a, int b, int c, int d) { return t[27 * a + 9 * b + 3 * c + d]; }
    double operator()(int a, int b, int c, int d) const { return t[27 * a + 9 * b + 3 * c + d]; }

    /// Full contraction with four vectors.
    double apply(const Vec3& u, const Vec3& v, const Vec3& w, const Vec3& x) const
    {
        double s = 0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d)
                        s += (*this)(a, b, c, d) * u[a] * v[b] * w[c] * x[d];
        return s;
    }
};

/// Conformal factor exponent phi with analytic first and second derivatives.
struct ConformalField {
    std::function<double(const Vec3&)> phi;
    std::function<Vec3(const Vec3&)> gradient;
    std::function<Mat3(const Vec3&)> hessian;
    /// Optional chart validity predicate; all of R^3 when empty.
    std::function<bool(const Vec3&)> domain;
};

/// Global constants a conformal ambient must declare; model kinds compute them.
struct AmbientBounds {
    double inj_radius = std::numeric_limits<double>::infinity();
    double sect_sup = 0.0;  // sup of sectional curvature
    double ricci_sup = 0.0; // sup of Ric(X, X) over unit X
    std::array<double, 6> ricci_deriv{}; // bounds on |nabla^(i) Ric|, i = 0..5
    std::optional<double> covering_constant;
};

namespace detail {

/// Counts cube cells (circumradius 1) of a cubic lattice meeting the ball of
/// radius `ratio` about the origin, minimised over a few lattice offsets.
/// Balls of radius 1 about the cell centres then cover that ball.
inline int lattice_cover_count(double ratio)
{
    const double side = 2.0 / std::sqrt(3.0);
    const int n = static_cast<int>(std::ceil(ratio / side)) + 2;
    int best = std::numeric_limits<int>::max();
    for (int o = 0; o < 8; ++o) {
        const double offset = -0.125 * o;
        int count = 0;
        for (int i = -n; i <= n; ++i)
            for (int j = -n; j <= n; ++j)
                for (int k = -n; k <= n; ++k) {
                    double d2 = 0;
                    for (int idx : {i, j, k}) {
                        double lo = (idx + offset) * side;
                        double hi = lo + side;
                        if (lo > 0)
                            d2 += lo * lo;
                        else if (hi < 0)
                            d2 += hi * hi;
                    }
                    if (d2 < ratio * ratio) ++count;
                }
        best = std::min(best, count);
    }
    return best;
}

inline Vec3 mobius_add(const Vec3& a, const Vec3& b)
{
    double ab = a.dot(b);
    double a2 = a.squaredNorm();
    double b2 = b.squaredNorm();
    double den = 1.0 + 2.0 * ab + a2 * b2;
    return ((1.0 + 2.0 * ab + b2) * a + (1.0 - a2) * b) / den;
}

/// artanh(x)/x, stable near zero.
inline double artanh_over(double x)
{
    if (x < 1e-4) return 1.0 + x * x / 3.0 + x * x * x * x / 5.0;
    return std::atanh(x) / x;
}

} // namespace detail

class AmbientSpace {
public:
    static AmbientSpace euclidean()
    {
        AmbientSpace s;
        s.kind_ = AmbientKind::Euclidean;
        s.bounds_.covering_constant = detail::lattice_cover_count(2.0);
        return s;
    }

    /// Poincaré ball of constant curvature kappa < 0, chart radius 1/sqrt(-kappa).
    static AmbientSpace hyperbolic(double kappa)
    {
        if (!(kappa < 0) || !std::isfinite(kappa))
            throw Error(ErrorCode::BadParams, "hyperbolic curvature must be negative, got " + std::to_string(kappa));
        AmbientSpace s;
        s.kind_ = AmbientKind::Hyperbolic;
        s.kappa_ = kappa;
        s.k_ = std::sqrt(-kappa);
        s.bounds_.sect_sup = kappa;
        s.bounds_.ricci_sup = 2 * kappa;
        s.bounds_.ricci_deriv[0] = 2 * std::abs(kappa);
        return s;
    }

    /// Stereographic chart of the round 3-sphere of curvature kappa > 0.
    /// Points with sqrt(kappa)|x| > 0.95 * pole_bound lie in the excluded polar cap.
    static AmbientSpace spherical(double kappa, double pole_bound = 10.0)
    {
        if (!(kappa > 0) || !std::isfinite(kappa))
            throw Error(ErrorCode::BadParams, "spherical curvature must be positive, got " + std::to_string(kappa));
        if (!(pole_bound > 0)) throw Error(ErrorCode::BadParams, "pole_bound must be positive");
        AmbientSpace s;
        s.kind_ = AmbientKind::Spherical;
        s.kappa_ = kappa;
        s.k_ = std::sqrt(kappa);
        s.pole_bound_ = pole_bound;
        s.bounds_.inj_radius = M_PI / s.k_;
        s.bounds_.sect_sup = kappa;
        s.bounds_.ricci_sup = 2 * kappa;
        s.bounds_.ricci_deriv[0] = 2 * kappa;
        return s;
    }

    /// g = exp(2 phi) I. Injectivity radius, curvature suprema and the
    /// derivative bounds of Ric are user declarations; they are not estimated.
    static AmbientSpace conformal(ConformalField field, AmbientBounds bounds)
    {
        if (!field.phi || !field.gradient || !field.hessian)
            throw Error(ErrorCode::BadParams, "conformal ambient needs phi, gradient and hessian");
        if (!(bounds.inj_radius > 0)) throw Error(ErrorCode::BadParams, "inj_radius must be positive");
        for (double b : bounds.ricci_deriv)
            if (b < 0) throw Error(ErrorCode::BadParams, "ricci derivative bounds must be nonnegative");
        AmbientSpace s;
        s.kind_ = AmbientKind::Conformal;
        s.field_ = std::move(field);
        s.bounds_ = bounds;
        return s;
    }

    AmbientKind kind() const { return kind_; }
    /// Sectional curvature of the model kinds (0 for Euclidean and Conformal).
    double curvature() const { return kappa_; }
    double pole_bound() const { return pole_bound_; }
    const AmbientBounds& bounds() const { return bounds_; }
    double inj_radius() const { return bounds_.inj_radius; }
    double sect_sup() const { return bounds_.sect_sup; }
    double ricci_sup() const { return bounds_.ricci_sup; }
    double ricci_deriv_bound(int i) const { return bounds_.ricci_deriv.at(static_cast<std::size_t>(i)); }

    /// Human-readable parameters, as recorded in OBJ chart comments.
    std::string chart_descriptor() const
    {
        std::ostringstream os;
        os.precision(17);
        os << to_string(kind_);
        if (kind_ == AmbientKind::Hyperbolic || kind_ == AmbientKind::Spherical) os << ' ' << kappa_;
        return os.str();
    }

    bool contains(const Vec3& p) const
    {
        if (!p.allFinite()) return false;
        switch (kind_) {
        case AmbientKind::Euclidean: return true;
        case AmbientKind::Hyperbolic: return k_ * p.norm() < 1.0;
        case AmbientKind::Spherical: return k_ * p.norm() <= 0.95 * pole_bound_;
        case AmbientKind::Conformal: return !field_.domain || field_.domain(p);
        }
        return false;
    }

    void require_in_chart(const Vec3& p) const
    {
        if (!contains(p)) {
            std::ostringstream os;
            os.precision(17);
            os << "point (" << p.x() << ", " << p.y() << ", " << p.z() << ") outside the " << to_string(kind_)
               << " chart";
            throw Error(ErrorCode::OutOfChart, os.str());
        }
    }

    /// exp(phi(p)), the factor with g = lambda^2 I.
    double conformal_factor(const Vec3& p) const
    {
        require_in_chart(p);
        return std::exp(phi(p));
    }

    Mat3 metric_at(const Vec3& p) const
    {
        require_in_chart(p);
        return std::exp(2 * phi(p)) * Mat3::Identity();
    }

    double inner(const Vec3& p, const Vec3& u, const Vec3& v) const { return std::exp(2 * phi(p)) * u.dot(v); }

    Christoffel christoffel(const Vec3& p) const
    {
        require_in_chart(p);
        Vec3 d = grad_phi(p);
        Christoffel gamma;
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    double v = 0;
                    if (k == i) v += d[j];
                    if (k == j) v += d[i];
                    if (i == j) v -= d[k];
                    gamma(k, i, j) = v;
                }
        return gamma;
    }

    /// D(l, k, i, j) = ∂_l Γ^k_ij.
    Tensor4 christoffel_derivative(const Vec3& p) const
    {
        require_in_chart(p);
        Mat3 h = hess_phi(p);
        Tensor4 d;
        for (int l = 0; l < 3; ++l)
            for (int k = 0; k < 3; ++k)
                for (int i = 0; i < 3; ++i)
                    for (int j = 0; j < 3; ++j) {
                        double v = 0;
                        if (k == i) v += h(j, l);
                        if (k == j) v += h(i, l);
                        if (i == j) v -= h(k, l);
                        d(l, k, i, j) = v;
                    }
        return d;
    }

    /// R(i, j, k, l) = <R(∂_i, ∂_j)∂_k, ∂_l> with R(X,Y) = ∇_X∇_Y - ∇_Y∇_X - ∇_[X,Y].
    /// Constant curvature kappa gives kappa (g_il g_jk - g_ik g_jl).
    Tensor4 riemann(const Vec3& p) const
    {
        Christoffel gamma = christoffel(p);
        Tensor4 dgamma = christoffel_derivative(p);
        double g = std::exp(2 * phi(p));
        Tensor4 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k)
                    for (int m = 0; m < 3; ++m) {
                        double v = dgamma(i, m, j, k) - dgamma(j, m, i, k);
                        for (int q = 0; q < 3; ++q) v += gamma(m, i, q) * gamma(q, j, k) - gamma(m, j, q) * gamma(q, i, k);
                        r(i, j, k, m) = g * v; // lower m with g_ml = g δ_ml
                    }
        return r;
    }

    /// Ric_il = g^{jk} R_ijkl.
    Mat3 ricci(const Vec3& p) const
    {
        Tensor4 r = riemann(p);
        double ginv = std::exp(-2 * phi(p));
        Mat3 ric = Mat3::Zero();
        for (int i = 0; i < 3; ++i)
            for (int l = 0; l < 3; ++l) {
                double s = 0;
                for (int j = 0; j < 3; ++j) s += r(i, j, j, l);
                ric(i, l) = ginv * s;
            }
        return ric;
    }

    double scalar(const Vec3& p) const { return std::exp(-2 * phi(p)) * ricci(p).trace(); }

    /// Ric(v, v) for a chart vector v.
    double ricci_of(const Vec3& p, const Vec3& v) const { return v.dot(ricci(p) * v); }

    double geodesic_distance(const Vec3& p, const Vec3& q) const
    {
        require_in_chart(p);
        require_in_chart(q);
        switch (kind_) {
        case AmbientKind::Euclidean: return (p - q).norm();
        case AmbientKind::Hyperbolic: {
            Vec3 a = k_ * p;
            Vec3 b = k_ * q;
            double den = std::sqrt((1 - a.squaredNorm()) * (1 - b.squaredNorm()));
            return 2.0 / k_ * std::asinh((a - b).norm() / den);
        }
        case AmbientKind::Spherical: {
            Eigen::Vector4d a = to_sphere(p);
            Eigen::Vector4d b = to_sphere(q);
            return 2.0 * std::atan2((a - b).norm(), (a + b).norm()) / k_;
        }
        case AmbientKind::Conformal: {
            Vec3 v = shoot(p, q);
            return std::sqrt(inner(p, v, v));
        }
        }
        return 0;
    }

    /// Initial velocity (chart components at p) of the geodesic reaching q at time 1.
    /// Conformal kinds use the second-order expansion Δ + Γ(Δ,Δ)/2 unless
    /// `exact` is set, in which case the geodesic is shot numerically.
    Vec3 log_map(const Vec3& p, const Vec3& q, bool exact = false) const
    {
        require_in_chart(p);
        require_in_chart(q);
        switch (kind_) {
        case AmbientKind::Euclidean: return q - p;
        case AmbientKind::Hyperbolic: {
            Vec3 a = k_ * p;
            Vec3 z = detail::mobius_add(-a, k_ * q);
            Vec3 w0 = detail::artanh_over(z.norm()) * z;
            return (1 - a.squaredNorm()) * w0 / k_;
        }
        case AmbientKind::Spherical: {
            Eigen::Vector4d a = to_sphere(p);
            Eigen::Vector4d b = to_sphere(q);
            double theta = 2.0 * std::atan2((a - b).norm(), (a + b).norm());
            Eigen::Vector4d perp = b - std::cos(theta) * a;
            double s = std::sin(theta);
            Eigen::Vector4d v = (s < 1e-12) ? Eigen::Vector4d(b - a) : Eigen::Vector4d(theta / s * perp);
            Eigen::Matrix<double, 4, 3> jac = sphere_jacobian(p);
            Vec3 wy = jac.transpose() * v / (jac.col(0).squaredNorm());
            return wy;
        }
        case AmbientKind::Conformal: {
            if (exact) return shoot(p, q);
            Vec3 d = q - p;
            return d + 0.5 * christoffel(p).contract(d, d);
        }
        }
        return Vec3::Zero();
    }

    /// Point at geodesic distance r from `center` in the direction `dir`
    /// (any nonzero chart vector at center).
    Vec3 exp_map(const Vec3& center, const Vec3& dir, double r) const
    {
        require_in_chart(center);
        Vec3 u = dir.normalized();
        Vec3 out;
        switch (kind_) {
        case AmbientKind::Euclidean: out = center + r * u; break;
        case AmbientKind::Hyperbolic: {
            Vec3 y = std::tanh(k_ * r / 2) * u;
            out = detail::mobius_add(k_ * center, y) / k_;
            break;
        }
        case AmbientKind::Spherical: {
            if (center.norm() > 0)
                throw Error(ErrorCode::BadParams, "spherical exp_map is only provided about the chart origin");
            out = std::tan(k_ * r / 2) * u / k_;
            break;
        }
        case AmbientKind::Conformal: {
            Vec3 v = r * u / std::exp(phi(center));
            out = integrate_geodesic(center, v, 256);
            break;
        }
        }
        require_in_chart(out);
        return out;
    }

    /// Upper bound on the number of rho/2-balls needed to cover any rho-ball.
    int covering_constant(double rho) const
    {
        if (!(rho > 0)) throw Error(ErrorCode::BadParams, "covering radius must be positive");
        if (rho >= inj_radius())
            throw Error(ErrorCode::RadiusExceedsInjectivity,
                        "rho = " + std::to_string(rho) + " >= injectivity radius " + std::to_string(inj_radius()));
        switch (kind_) {
        case AmbientKind::Euclidean: return *bounds_.covering_constant;
        case AmbientKind::Hyperbolic: {
            // Chart ball of the geodesic rho-ball about the origin, covered by
            // Euclidean balls of radius s with lambda(r + s) s = rho / 2.
            double r = std::tanh(k_ * rho / 2) / k_;
            auto lambda = [&](double x) { return 2.0 / (1.0 - k_ * k_ * x * x); };
            double lo = 0, hi = 1.0 / k_ - r;
            for (int it = 0; it < 200; ++it) {
                double mid = 0.5 * (lo + hi);
                if (lambda(r + mid) * mid < rho / 2)
                    lo = mid;
                else
                    hi = mid;
            }
            return detail::lattice_cover_count(r / lo);
        }
        case AmbientKind::Spherical: {
            // lambda <= 2 on the whole chart.
            double r = std::tan(k_ * rho / 2) / k_;
            return detail::lattice_cover_count(r / (rho / 4));
        }
        case AmbientKind::Conformal:
            if (!bounds_.covering_constant)
                throw Error(ErrorCode::BadParams, "conformal ambient requires a declared covering_constant");
            return static_cast<int>(*bounds_.covering_constant);
        }
        return 0;
    }

    /// Bound on |Hess d_x| at distance d from the center (used for cutoff constants).
    double distance_hessian_bound(double d) const
    {
        switch (kind_) {
        case AmbientKind::Hyperbolic: return k_ / std::tanh(k_ * d);
        case AmbientKind::Spherical: return std::abs(k_ / std::tan(k_ * d));
        default: return 1.0 / d;
        }
    }

private:
    AmbientSpace() = default;

    double phi(const Vec3& p) const
    {
        switch (kind_) {
        case AmbientKind::Euclidean: return 0;
        case AmbientKind::Hyperbolic: return std::log(2.0 / (1.0 - k_ * k_ * p.squaredNorm()));
        case AmbientKind::Spherical: return std::log(2.0 / (1.0 + k_ * k_ * p.squaredNorm()));
        case AmbientKind::Conformal: return field_.phi(p);
        }
        return 0;
    }

    Vec3 grad_phi(const Vec3& p) const
    {
        double k2 = k_ * k_;
        switch (kind_) {
        case AmbientKind::Euclidean: return Vec3::Zero();
        case AmbientKind::Hyperbolic: return 2 * k2 * p / (1 - k2 * p.squaredNorm());
        case AmbientKind::Spherical: return -2 * k2 * p / (1 + k2 * p.squaredNorm());
        case AmbientKind::Conformal: return field_.gradient(p);
        }
        return Vec3::Zero();
    }

    Mat3 hess_phi(const Vec3& p) const
    {
        double k2 = k_ * k_;
        double r2 = p.squaredNorm();
        switch (kind_) {
        case AmbientKind::Euclidean: return Mat3::Zero();
        case AmbientKind::Hyperbolic: {
            double den = 1 - k2 * r2;
            return 2 * k2 / den * Mat3::Identity() + 4 * k2 * k2 / (den * den) * p * p.transpose();
        }
        case AmbientKind::Spherical: {
            double den = 1 + k2 * r2;
            return -2 * k2 / den * Mat3::Identity() + 4 * k2 * k2 / (den * den) * p * p.transpose();
        }
        case AmbientKind::Conformal: return field_.hessian(p);
        }
        return Mat3::Zero();
    }

    Eigen::Vector4d to_sphere(const Vec3& p) const
    {
        Vec3 y = k_ * p;
        double y2 = y.squaredNorm();
        Eigen::Vector4d out;
        out.head<3>() = 2 * y / (1 + y2);
        out[3] = (1 - y2) / (1 + y2);
        return out;
    }

    /// d(to_sphere)/dx; conformal with column norm k * lambda(p).
    Eigen::Matrix<double, 4, 3> sphere_jacobian(const Vec3& p) const
    {
        Vec3 y = k_ * p;
        double y2 = y.squaredNorm();
        double den = 1 + y2;
        Eigen::Matrix<double, 4, 3> j;
        j.topRows<3>() = (2.0 / den) * Mat3::Identity() - (4.0 / (den * den)) * y * y.transpose();
        j.row(3) = (-4.0 / (den * den)) * y.transpose();
        return k_ * j;
    }

    Vec3 geodesic_rhs_accel(const Vec3& x, const Vec3& v) const
    {
        Vec3 d = grad_phi(x);
        // Γ(v,v)^k = 2 v^k (d·v) - |v|^2 d^k
        return -(2.0 * d.dot(v) * v - v.squaredNorm() * d);
    }

    Vec3 integrate_geodesic(const Vec3& x0, const Vec3& v0, int steps) const
    {
        Vec3 x = x0, v = v0;
        const double h = 1.0 / steps;
        for (int s = 0; s < steps; ++s) {
            Vec3 k1x = v, k1v = geodesic_rhs_accel(x, v);
            Vec3 k2x = v + 0.5 * h * k1v, k2v = geodesic_rhs_accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
            Vec3 k3x = v + 0.5 * h * k2v, k3v = geodesic_rhs_accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
            Vec3 k4x = v + h * k3v, k4v = geodesic_rhs_accel(x + h * k3x, v + h * k3v);
            x += h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x);
            v += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
            if (!x.allFinite()) break;
        }
        return x;
    }

    /// Damped Newton shooting for the conformal kind. Tolerance 1e-12 relative on
    /// the endpoint with 128 RK4 steps; refuses to return an unconverged velocity.
    Vec3 shoot(const Vec3& p, const Vec3& q) const
    {
        constexpr int steps = 128;
        Vec3 d = q - p;
        if (d.norm() == 0) return Vec3::Zero();
        Vec3 v = d + 0.5 * christoffel(p).contract(d, d);
        const double tol = 1e-12 * (1.0 + q.norm());
        Vec3 res = integrate_geodesic(p, v, steps) - q;
        for (int it = 0; it < 60 && res.allFinite(); ++it) {
            if (res.norm() < tol) return v;
            Mat3 jac;
            double eps = 1e-7 * std::max(1.0, v.norm());
            for (int c = 0; c < 3; ++c) {
                Vec3 dv = Vec3::Zero();
                dv[c] = eps;
                jac.col(c) = (integrate_geodesic(p, v + dv, steps) - integrate_geodesic(p, v - dv, steps)) / (2 * eps);
            }
            Vec3 step = jac.fullPivLu().solve(res);
            if (!step.allFinite()) break;
            // Backtracking keeps long shots from overshooting the chart.
            double lambda = 1.0;
            Vec3 trial_res;
            for (int ls = 0; ls < 30; ++ls, lambda *= 0.5) {
                trial_res = integrate_geodesic(p, v - lambda * step, steps) - q;
                if (trial_res.allFinite() && trial_res.norm() < res.norm()) break;
            }
            if (!(trial_res.allFinite() && trial_res.norm() < res.norm())) break;
            v -= lambda * step;
            res = trial_res;
        }
        throw Error(ErrorCode::NoConvergence, "geodesic shooting did not converge");
    }

    AmbientKind kind_ = AmbientKind::Euclidean;
    double kappa_ = 0;
    double k_ = 1;
    double pole_bound_ = 10.0;
    AmbientBounds bounds_{};
    ConformalField field_{};
};

} // namespace willmore
