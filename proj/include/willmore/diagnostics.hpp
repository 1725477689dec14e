#pragma once

// Monitored functionals along a flow: cutoff functions on ambient balls,
// curvature and area concentration, the covering relation between ρ- and
// ρ/2-balls, the Hoffman–Spruck and multiplicative Sobolev inequalities,
// finite-difference checks of the evolution equations, and the lifespan fit.

#include "willmore/ambient.hpp"
#include "willmore/flow.hpp"
#include "willmore/mesh.hpp"
#include "willmore/parallel.hpp"
#include "willmore/shape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace willmore {

/// 9√π/2.
inline const double hoffman_spruck_constant = 4.5 * std::sqrt(M_PI);

/// γ = φ(d_N(·, x)/ρ) ∘ f with the quintic smootherstep profile:
/// φ = 1 on [0, ½], φ = 0 on [1, ∞), |φ'| ≤ 3.75, |φ''| ≤ 40/√3.
class CutoffFunction {
public:
    static constexpr double max_dphi = 3.75;
    static constexpr double max_d2phi = 23.094010767585033; // 40/√3

    CutoffFunction(const AmbientSpace& amb, Vec3 center, double rho)
        : amb_(std::make_shared<const AmbientSpace>(amb))
        , center_(std::move(center))
        , rho_(rho)
    {
        if (!(rho > 0)) throw Error(ErrorCode::BadParams, "cutoff radius must be positive");
        if (rho >= amb.inj_radius()) throw Error(ErrorCode::RadiusExceedsInjectivity, "cutoff radius exceeds injectivity radius");
        amb.require_in_chart(center_);
    }

    static double profile(double s)
    {
        if (s <= 0.5) return 1.0;
        if (s >= 1.0) return 0.0;
        double t = 2 * s - 1;
        return 1.0 - t * t * t * (10 - 15 * t + 6 * t * t);
    }

    static double dprofile(double s)
    {
        if (s <= 0.5 || s >= 1.0) return 0.0;
        double t = 2 * s - 1;
        return -2.0 * 30 * t * t * (1 - t) * (1 - t);
    }

    static double d2profile(double s)
    {
        if (s <= 0.5 || s >= 1.0) return 0.0;
        double t = 2 * s - 1;
        return -4.0 * 60 * t * (1 - t) * (1 - 2 * t);
    }

    const Vec3& center() const { return center_; }
    double radius() const { return rho_; }

    double operator()(const Vec3& p) const { return profile(amb_->geodesic_distance(center_, p) / rho_); }

    Eigen::VectorXd values(const Surface& s) const
    {
        Eigen::VectorXd g(static_cast<Eigen::Index>(s.vertex_count()));
        parallel_for(s.vertex_count(), [&](std::size_t v) { g[static_cast<Eigen::Index>(v)] = (*this)(s.vertex(static_cast<int>(v))); });
        return g;
    }

    /// c_γ with |∇γ| ≤ c_γ and |∇²γ| ≤ c_γ(c_γ + |A|): needs c_γ ≥ max|φ'|/ρ and
    /// c_γ² ≥ max|φ''|/ρ² + max|φ'|/ρ · sup|Hess d| over the annulus ρ/2 ≤ d ≤ ρ.
    double c_gamma() const
    {
        double hess = std::max(amb_->distance_hessian_bound(rho_ / 2), amb_->distance_hessian_bound(rho_));
        return std::max(max_dphi / rho_, std::sqrt(max_d2phi / (rho_ * rho_) + max_dphi / rho_ * hess));
    }

private:
    std::shared_ptr<const AmbientSpace> amb_;
    Vec3 center_;
    double rho_;
};

struct CutoffBoundsReport {
    double max_grad = 0;        // max over triangles of |∇γ|
    double grad_bound = 0;      // c_γ
    double max_hess_excess = 0; // max over vertices of |∇²γ| − c_γ(c_γ + |A|), reported as slack
    double c_gamma = 0;
};

inline CutoffBoundsReport cutoff_bounds(const Surface& s, const RingCache& rings, std::span<const VertexShape> shape,
                                        const CutoffFunction& cut)
{
    CutoffBoundsReport r;
    Eigen::VectorXd g = cut.values(s);
    for (std::size_t f = 0; f < s.face_count(); ++f) r.max_grad = std::max(r.max_grad, s.gradient_norm(static_cast<int>(f), g));
    r.c_gamma = cut.c_gamma();
    r.grad_bound = r.c_gamma;
    std::vector<Mat2> hess = scalar_hessian(s, rings, shape, g);
    r.max_hess_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < hess.size(); ++v)
        r.max_hess_excess = std::max(r.max_hess_excess, hess[v].norm() - r.c_gamma * (r.c_gamma + std::sqrt(shape[v].A_norm2)));
    return r;
}

/// Per-center, per-radius integrals over f⁻¹(B_ρ(x)).
struct BallTable {
    std::vector<Vec3> centers;
    std::vector<double> radii;
    Eigen::MatrixXd curvature; // Σ |A|² dualArea over vertices with d < ρ
    Eigen::MatrixXd area;      // Σ dualArea over the same vertices
    Eigen::MatrixXd smooth;    // Σ |A|² γ⁴ dualArea, γ the cutoff of radius ρ

    /// Largest curvature integral at radius index r and its center index.
    std::pair<double, int> sup(int r) const
    {
        Eigen::Index arg = 0;
        double m = curvature.col(r).maxCoeff(&arg);
        return {m, static_cast<int>(arg)};
    }
};

inline BallTable ball_table(const Surface& s, std::span<const VertexShape> shape, std::vector<Vec3> centers,
                            std::vector<double> radii)
{
    const AmbientSpace& amb = s.ambient();
    for (double r : radii) {
        if (!(r > 0)) throw Error(ErrorCode::BadParams, "ball radius must be positive");
        if (r >= amb.inj_radius())
            throw Error(ErrorCode::RadiusExceedsInjectivity, "radius " + std::to_string(r) + " is not below the injectivity radius");
    }
    const auto nc = static_cast<Eigen::Index>(centers.size());
    const auto nr = static_cast<Eigen::Index>(radii.size());
    BallTable t{std::move(centers), std::move(radii), Eigen::MatrixXd::Zero(nc, nr), Eigen::MatrixXd::Zero(nc, nr),
                Eigen::MatrixXd::Zero(nc, nr)};
    const Eigen::VectorXd& da = s.dual_area();
    parallel_for(t.centers.size(), [&](std::size_t c) {
        const auto ci = static_cast<Eigen::Index>(c);
        for (std::size_t v = 0; v < s.vertex_count(); ++v) {
            double d = amb.geodesic_distance(t.centers[c], s.vertex(static_cast<int>(v)));
            double a = da[static_cast<Eigen::Index>(v)];
            double ka = shape[v].A_norm2 * a;
            for (Eigen::Index r = 0; r < nr; ++r) {
                double rho = t.radii[static_cast<std::size_t>(r)];
                if (d < rho) {
                    t.curvature(ci, r) += ka;
                    t.area(ci, r) += a;
                    double g = CutoffFunction::profile(d / rho);
                    t.smooth(ci, r) += ka * g * g * g * g;
                }
            }
        }
    });
    return t;
}

inline std::vector<Vec3> vertex_centers(const Surface& s) { return s.immersion().vertices; }

/// Offsets of a 3×3×3 grid (minus its centre) around x with chart spacing h.
inline std::vector<Vec3> refinement_centers(const AmbientSpace& amb, const Vec3& x, double h)
{
    std::vector<Vec3> out;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j)
            for (int k = -1; k <= 1; ++k) {
                if (i == 0 && j == 0 && k == 0) continue;
                Vec3 y = x + h * Vec3(i, j, k);
                if (amb.contains(y)) out.push_back(y);
            }
    return out;
}

/// Hoffman–Spruck hypotheses for a test function whose support has area
/// `support_area`, with 𝒦 = sup Ric(X, X) over unit X.
inline bool hoffman_spruck_conditions(const AmbientSpace& amb, double support_area)
{
    const double K = amb.ricci_sup();
    if (support_area <= 0) return true;
    if (K > 0 && K > 8 * M_PI / (9 * support_area)) return false;
    double needed;
    if (K > 0) {
        double arg = std::sqrt(9 * K * support_area / (4 * M_PI));
        if (arg > 1) return false;
        needed = std::asin(arg) / (2 * std::sqrt(K));
    } else {
        needed = 0.75 * std::sqrt(support_area / M_PI);
    }
    return amb.inj_radius() >= needed;
}

struct ConcentrationReport {
    double t = 0;
    double rho = 0;
    double eta = 0;        // sup over centers of ∫_{f⁻¹(B_ρ(x))} |A|² dμ
    double eta_smooth = 0; // sup of ∫ |A|² γ⁴ dμ
    double area_conc_max = 0;
    Vec3 center = Vec3::Zero();
    int center_vertex = -1; // -1 when the maximiser came from the local refinement pass
    std::vector<double> per_center;      // vertex centers, in vertex order
    std::vector<double> per_center_area; // vertex centers, in vertex order
    bool sobolev_ok = true;
};

/// Concentration at radius ρ. Centers default to the vertex images, followed
/// by one refinement pass on a small grid around the best vertex.
inline ConcentrationReport concentration(const Surface& s, std::span<const VertexShape> shape, double rho,
                                         std::optional<std::vector<Vec3>> centers = std::nullopt)
{
    const AmbientSpace& amb = s.ambient();
    const bool default_centers = !centers;
    BallTable tab = ball_table(s, shape, default_centers ? vertex_centers(s) : std::move(*centers), {rho});
    ConcentrationReport r;
    r.t = s.immersion().t;
    r.rho = rho;
    auto [eta, arg] = tab.sup(0);
    r.eta = eta;
    r.center = tab.centers[static_cast<std::size_t>(arg)];
    r.center_vertex = default_centers ? arg : -1;
    r.eta_smooth = tab.smooth.col(0).maxCoeff();
    r.area_conc_max = tab.area.col(0).maxCoeff();
    r.per_center.assign(tab.curvature.col(0).data(), tab.curvature.col(0).data() + tab.curvature.rows());
    r.per_center_area.assign(tab.area.col(0).data(), tab.area.col(0).data() + tab.area.rows());
    if (default_centers) {
        double h = 0.5 * min_edge_length(s) / amb.conformal_factor(r.center);
        BallTable extra = ball_table(s, shape, refinement_centers(amb, r.center, h), {rho});
        if (!extra.centers.empty()) {
            auto [e2, a2] = extra.sup(0);
            if (e2 > r.eta) {
                r.eta = e2;
                r.center = extra.centers[static_cast<std::size_t>(a2)];
                r.center_vertex = -1;
            }
            r.eta_smooth = std::max(r.eta_smooth, extra.smooth.col(0).maxCoeff());
            r.area_conc_max = std::max(r.area_conc_max, extra.area.col(0).maxCoeff());
        }
    }
    r.sobolev_ok = hoffman_spruck_conditions(amb, r.area_conc_max);
    return r;
}

struct CoveringReport {
    double eta = 0;      // sup at radius ρ
    double half_sup = 0; // sup at radius ρ/2
    int c_eta = 0;
    double slack = 0; // c_η · half_sup / η, ≥ 1 when the relation holds
    bool ok = true;
};

inline CoveringReport covering_from_table(const BallTable& tab, int full, int half, int c_eta)
{
    CoveringReport r;
    r.c_eta = c_eta;
    r.eta = tab.sup(full).first;
    r.half_sup = tab.sup(half).first;
    r.slack = r.eta > 0 ? c_eta * r.half_sup / r.eta : std::numeric_limits<double>::infinity();
    r.ok = r.eta <= c_eta * r.half_sup * (1 + 1e-12);
    return r;
}

/// η(t) ≤ c_η · sup_x ∫_{f⁻¹(B_{ρ/2}(x))} |A|² over the vertex centers.
inline CoveringReport covering_check(const Surface& s, std::span<const VertexShape> shape, double rho)
{
    int c_eta = s.ambient().covering_constant(rho);
    BallTable tab = ball_table(s, shape, vertex_centers(s), {rho, rho / 2});
    return covering_from_table(tab, 0, 1, c_eta);
}

/// Largest grid radius whose concentration sup is ≤ ε₀; 0 when none qualifies.
inline double rho_from_table(const BallTable& tab, std::span<const int> grid_columns, double eps0)
{
    double best = 0;
    for (int c : grid_columns)
        if (tab.sup(c).first <= eps0) best = std::max(best, tab.radii[static_cast<std::size_t>(c)]);
    return best;
}

inline double rho_of_t(const Surface& s, std::span<const VertexShape> shape, double eps0, std::vector<double> grid)
{
    if (grid.empty()) throw Error(ErrorCode::BadParams, "radius grid is empty");
    if (eps0 < 0) throw Error(ErrorCode::BadParams, "eps0 must be nonnegative");
    BallTable tab = ball_table(s, shape, vertex_centers(s), std::move(grid));
    std::vector<int> cols(tab.radii.size());
    std::iota(cols.begin(), cols.end(), 0);
    return rho_from_table(tab, cols, eps0);
}

struct HoffmanSpruckReport {
    double lhs = 0;
    double rhs = 0;
    double integral = 0; // ∫ |∇u| + |u||H| dμ
    double support_area = 0;
    double constant = 0;
    bool ok = true;
    bool conditions_ok = true;
};

/// (∫u²)^{1/2} ≤ C ∫ |∇u| + |u||H| dμ with C = 9√π/2 by default and a
/// relative slack τ_S. |∇u| is the piecewise-linear gradient per triangle;
/// the other integrals use dual areas.
inline HoffmanSpruckReport hoffman_spruck_check(const Surface& s, std::span<const VertexShape> shape, const Eigen::VectorXd& u,
                                                double slack = 0.05, double constant = hoffman_spruck_constant)
{
    if (u.size() != static_cast<Eigen::Index>(s.vertex_count())) throw Error(ErrorCode::BadParams, "test function size mismatch");
    if (!u.allFinite()) throw Error(ErrorCode::NonFiniteInput, "test function is not finite");
    for (Eigen::Index v = 0; v < u.size(); ++v)
        if (u[v] < 0) throw Error(ErrorCode::NonNegativityViolated, "test function is negative at vertex " + std::to_string(v));
    const Eigen::VectorXd& da = s.dual_area();
    HoffmanSpruckReport r;
    r.constant = constant;
    double l2 = 0, hu = 0;
    for (Eigen::Index v = 0; v < u.size(); ++v) {
        l2 += u[v] * u[v] * da[v];
        hu += u[v] * std::abs(shape[static_cast<std::size_t>(v)].H) * da[v];
    }
    double grad = 0;
    const auto& tris = s.topology().triangles();
    for (std::size_t f = 0; f < s.face_count(); ++f) {
        double a = s.metric().area[f];
        grad += s.gradient_norm(static_cast<int>(f), u) * a;
        const Triangle& t = tris[f];
        if (u[t[0]] > 0 || u[t[1]] > 0 || u[t[2]] > 0) r.support_area += a;
    }
    r.lhs = std::sqrt(l2);
    r.integral = grad + hu;
    r.rhs = constant * r.integral;
    r.ok = r.lhs <= r.rhs * (1 + slack);
    r.conditions_ok = hoffman_spruck_conditions(s.ambient(), r.support_area);
    return r;
}

struct MultiplicativeSobolevReport {
    double lhs = 0;          // ∫ (|∇A|²|A|² + |A|⁶) γˢ
    double support_A2 = 0;   // ∫_{[γ>0]} |A|²
    double high_order = 0;   // ∫ (|∇₍₂₎A|² + |A|⁶) γˢ
    double c_gamma = 0;
    double c_min = 0;        // smallest c for which the inequality holds on this state
    double c_used = 0;
    bool holds = true;       // with c_used
    bool conditions_ok = true;
};

inline MultiplicativeSobolevReport multiplicative_sobolev_check(const Surface& s, std::span<const VertexShape> shape,
                                                                std::span<const VertexDerivatives> deriv,
                                                                const CutoffFunction& cut, double s_exp = 4.0, double c = 1.0)
{
    if (s_exp < 4) throw Error(ErrorCode::BadParams, "cutoff exponent s must be at least 4");
    Eigen::VectorXd g = cut.values(s);
    const Eigen::VectorXd& da = s.dual_area();
    MultiplicativeSobolevReport r;
    r.c_gamma = cut.c_gamma();
    r.c_used = c;
    double support_area = 0;
    for (std::size_t v = 0; v < s.vertex_count(); ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        double a2 = shape[v].A_norm2;
        double gs = std::pow(g[vi], s_exp);
        r.lhs += (deriv[v].grad_norm2() * a2 + a2 * a2 * a2) * gs * da[vi];
        r.high_order += (deriv[v].hess_norm2() + a2 * a2 * a2) * gs * da[vi];
        if (g[vi] > 0) {
            r.support_A2 += a2 * da[vi];
            support_area += da[vi];
        }
    }
    double denom = r.support_A2 * r.high_order + std::pow(r.c_gamma, 4) * r.support_A2 * r.support_A2;
    r.c_min = denom > 0 ? r.lhs / denom : (r.lhs > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.holds = r.lhs <= c * denom;
    r.conditions_ok = hoffman_spruck_conditions(s.ambient(), support_area);
    return r;
}

/// Central-difference residuals of the evolution equations at the middle of
/// three consecutive states with equal steps, for ∂_t f = −F ν with F = W:
///   ∂_t dμ = H F dμ,  ∂_t g_ij = 2 F A_ij,  D_t ν = ∇F,
///   ∂_t H = −ΔF − F|A|² − F Ric̄(ν, ν)   (trace of the A equation).
/// Per-element residual vectors are kept for dt-refinement studies.
struct EvolutionResiduals {
    double dmu_l2 = 0, dmu_rel = 0, dmu_max = 0;
    double g_l2 = 0, g_rel = 0;
    double nu_l2 = 0, nu_rel = 0;
    double H_l2 = 0, H_rel = 0;
    Eigen::VectorXd dmu; // per triangle: ∂_t dμ/dμ − HF
    Eigen::VectorXd g;   // per triangle, 3 entries each: g^{-1/2}(∂_t g − 2FA)g^{-1/2}
};

namespace detail {

/// Second fundamental form at vertex v expressed in the reference coordinates of triangle f.
inline Mat2 reference_A(const Surface& s, int f, const VertexShape& sh, const Vec3& p)
{
    const AmbientSpace& amb = s.ambient();
    Eigen::Matrix<double, 3, 2> j = s.jacobian(f);
    double l2 = std::pow(amb.conformal_factor(p), 2);
    Mat2 c = l2 * sh.frame.leftCols<2>().transpose() * j; // c(a, i) = <e_a, J_i>
    return c.transpose() * sh.A * c;
}

inline Mat2 inv_sqrt(const Mat2& g)
{
    Eigen::SelfAdjointEigenSolver<Mat2> es(g);
    return es.operatorInverseSqrt();
}

} // namespace detail

inline EvolutionResiduals evolution_fd_check(const FlowState& prev, const FlowState& mid, const FlowState& next)
{
    const Surface& s = mid.surface;
    if (prev.surface.vertex_count() != s.vertex_count() || next.surface.vertex_count() != s.vertex_count() ||
        prev.surface.topology().triangles() != s.topology().triangles() ||
        next.surface.topology().triangles() != s.topology().triangles())
        throw Error(ErrorCode::ConnectivityChanged, "evolution check needs three states with identical connectivity");
    const double dt1 = mid.t - prev.t, dt2 = next.t - mid.t;
    if (!(dt1 > 0) || std::abs(dt1 - dt2) > 1e-9 * dt1)
        throw Error(ErrorCode::BadParams, "evolution check needs two equal positive steps");
    const double dt = 0.5 * (dt1 + dt2);
    const AmbientSpace& amb = s.ambient();
    const auto& tris = s.topology().triangles();
    const std::size_t nf = s.face_count(), nv = s.vertex_count();
    const Eigen::VectorXd& F = mid.shape.W;
    const auto& sh = mid.shape.vertices;

    EvolutionResiduals r;
    r.dmu.resize(static_cast<Eigen::Index>(nf));
    r.g.resize(static_cast<Eigen::Index>(3 * nf));
    double dmu_ref = 0, g_ref = 0;
    for (std::size_t f = 0; f < nf; ++f) {
        const Triangle& t = tris[f];
        double area = s.metric().area[f];
        double lhs = (next.surface.metric().area[f] - prev.surface.metric().area[f]) / (2 * dt) / area;
        double hf = 0;
        Mat2 rhs_g = Mat2::Zero();
        for (int c : t) {
            hf += sh[static_cast<std::size_t>(c)].H * F[c] / 3.0;
            rhs_g += 2.0 * F[c] * detail::reference_A(s, static_cast<int>(f), sh[static_cast<std::size_t>(c)], s.vertex(c)) / 3.0;
        }
        double e = lhs - hf;
        r.dmu[static_cast<Eigen::Index>(f)] = e;
        r.dmu_l2 += e * e * area;
        r.dmu_max = std::max(r.dmu_max, std::abs(e));
        dmu_ref += hf * hf * area;

        Mat2 dg = (next.surface.metric().g[f] - prev.surface.metric().g[f]) / (2 * dt);
        Mat2 w = detail::inv_sqrt(s.metric().g[f]);
        Mat2 res = w * (dg - rhs_g) * w;
        Mat2 ref = w * rhs_g * w;
        r.g.segment<3>(static_cast<Eigen::Index>(3 * f)) << res(0, 0), res(0, 1), res(1, 1);
        r.g_l2 += res.squaredNorm() * area;
        g_ref += ref.squaredNorm() * area;
    }
    r.dmu_l2 = std::sqrt(r.dmu_l2);
    r.dmu_rel = dmu_ref > 0 ? r.dmu_l2 / std::sqrt(dmu_ref) : r.dmu_l2;
    r.g_l2 = std::sqrt(r.g_l2);
    r.g_rel = g_ref > 0 ? r.g_l2 / std::sqrt(g_ref) : r.g_l2;

    // ν and H, per vertex.
    const Eigen::VectorXd& da = s.dual_area();
    std::vector<Vec3> gradF = s.vertex_gradient(F);
    Eigen::VectorXd lapF = s.laplace_beltrami(F);
    double nu_ref = 0, H_ref = 0;
    for (std::size_t v = 0; v < nv; ++v) {
        const auto vi = static_cast<Eigen::Index>(v);
        const Vec3& p = s.vertex(static_cast<int>(v));
        Vec3 nu = sh[v].normal();
        Vec3 vel = -F[vi] * nu;
        Vec3 dnu = (next.shape.vertices[v].normal() - prev.shape.vertices[v].normal()) / (2 * dt);
        if (amb.kind() != AmbientKind::Euclidean) dnu += amb.christoffel(p).contract(vel, nu);
        Vec3 e = dnu - gradF[v];
        r.nu_l2 += amb.inner(p, e, e) * da[vi];
        nu_ref += amb.inner(p, gradF[v], gradF[v]) * da[vi];

        double ric = amb.kind() == AmbientKind::Euclidean ? 0.0 : amb.ricci_of(p, nu);
        double lhsH = (next.shape.vertices[v].H - prev.shape.vertices[v].H) / (2 * dt);
        double rhsH = -lapF[vi] - F[vi] * sh[v].A_norm2 - F[vi] * ric;
        r.H_l2 += (lhsH - rhsH) * (lhsH - rhsH) * da[vi];
        H_ref += rhsH * rhsH * da[vi];
    }
    r.nu_l2 = std::sqrt(r.nu_l2);
    r.nu_rel = nu_ref > 0 ? r.nu_l2 / std::sqrt(nu_ref) : r.nu_l2;
    r.H_l2 = std::sqrt(r.H_l2);
    r.H_rel = H_ref > 0 ? r.H_l2 / std::sqrt(H_ref) : r.H_l2;
    return r;
}

/// dt-refinement study at a fixed mesh: from `start`, windows of two forward
/// Euler steps with dt, dt/2, dt/4, .... At fixed h the residual tends to a
/// spatial floor, so the time order is measured on successive differences:
/// p = log2(‖r(dt) − r(dt/2)‖ / ‖r(dt/2) − r(dt/4)‖).
struct DtRefinementReport {
    std::vector<double> dts;
    std::vector<double> dmu_norm, g_norm; // area-weighted L² of the residual vectors
    std::vector<double> dmu_diff, g_diff; // ‖r_k − r_{k+1}‖
    double dmu_order = 0, g_order = 0;    // from the last two differences
    double dmu_floor = 0, g_floor = 0;    // relative residual at the finest dt
    std::vector<EvolutionResiduals> windows;
};

inline DtRefinementReport evolution_dt_study(const FlowState& start, double dt, int levels = 3, const FitOptions& fit = {})
{
    if (levels < 3) throw Error(ErrorCode::BadParams, "dt study needs at least three levels");
    DtRefinementReport rep;
    std::vector<Eigen::VectorXd> rd, rg;
    const auto& area = start.surface.metric().area;
    Eigen::VectorXd w(static_cast<Eigen::Index>(area.size()));
    for (std::size_t f = 0; f < area.size(); ++f) w[static_cast<Eigen::Index>(f)] = area[f];
    auto wnorm = [&](const Eigen::VectorXd& x) { return std::sqrt(x.cwiseAbs2().dot(w)); };
    auto wnorm_g = [&](const Eigen::VectorXd& x) {
        double acc = 0;
        for (Eigen::Index f = 0; f < w.size(); ++f) {
            auto e = x.segment<3>(3 * f);
            acc += (e[0] * e[0] + 2 * e[1] * e[1] + e[2] * e[2]) * w[f];
        }
        return std::sqrt(acc);
    };
    for (int k = 0; k < levels; ++k) {
        double h = dt / std::pow(2.0, k);
        FlowState mid = euler_update(start, h, fit);
        FlowState next = euler_update(mid, h, fit);
        EvolutionResiduals res = evolution_fd_check(start, mid, next);
        rep.dts.push_back(h);
        rep.dmu_norm.push_back(wnorm(res.dmu));
        rep.g_norm.push_back(wnorm_g(res.g));
        rd.push_back(res.dmu);
        rg.push_back(res.g);
        rep.windows.push_back(std::move(res));
    }
    for (int k = 0; k + 1 < levels; ++k) {
        rep.dmu_diff.push_back(wnorm(rd[static_cast<std::size_t>(k)] - rd[static_cast<std::size_t>(k + 1)]));
        rep.g_diff.push_back(wnorm_g(rg[static_cast<std::size_t>(k)] - rg[static_cast<std::size_t>(k + 1)]));
    }
    auto order = [](const std::vector<double>& d) { return std::log2(d[d.size() - 2] / d.back()); };
    rep.dmu_order = order(rep.dmu_diff);
    rep.g_order = order(rep.g_diff);
    rep.dmu_floor = rep.windows.back().dmu_rel;
    rep.g_floor = rep.windows.back().g_rel;
    return rep;
}

struct LifespanFit {
    double slope = 0;
    double intercept = 0; // log T̂ = intercept + slope · log ρ₀
    double r2 = 0;
    double c_hat = 0; // smallest ĉ with T̂ ≥ ρ₀⁴/ĉ for every experiment
    std::vector<bool> bound_ok;
    std::vector<bool> leave_one_out_ok; // T̂_i ≥ ρ_i⁴/ĉ calibrated on the other experiments
};

inline LifespanFit lifespan_fit(std::span<const std::pair<double, double>> experiments)
{
    if (experiments.size() < 4)
        throw Error(ErrorCode::InsufficientData, "lifespan fit needs at least 4 experiments, got " + std::to_string(experiments.size()));
    for (const auto& [rho, T] : experiments)
        if (!(rho > 0) || !(T > 0) || !std::isfinite(rho) || !std::isfinite(T))
            throw Error(ErrorCode::InsufficientData, "lifespan fit needs positive finite (rho0, T) pairs");
    const std::size_t n = experiments.size();
    Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        x[static_cast<Eigen::Index>(i)] = std::log(experiments[i].first);
        y[static_cast<Eigen::Index>(i)] = std::log(experiments[i].second);
    }
    double mx = x.mean(), my = y.mean();
    double sxx = (x.array() - mx).square().sum();
    if (!(sxx > 0)) throw Error(ErrorCode::InsufficientData, "lifespan fit needs at least two distinct radii");
    double sxy = ((x.array() - mx) * (y.array() - my)).sum();
    double syy = (y.array() - my).square().sum();
    LifespanFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;

    std::vector<double> ratio(n);
    for (std::size_t i = 0; i < n; ++i) ratio[i] = std::pow(experiments[i].first, 4) / experiments[i].second;
    fit.c_hat = *std::max_element(ratio.begin(), ratio.end());
    for (std::size_t i = 0; i < n; ++i) {
        fit.bound_ok.push_back(experiments[i].second >= std::pow(experiments[i].first, 4) / fit.c_hat * (1 - 1e-12));
        double others = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others = std::max(others, ratio[j]);
        fit.leave_one_out_ok.push_back(ratio[i] <= others);
    }
    return fit;
}

/// Everything recorded per snapshot in diagnostics.csv.
struct DiagnosticsSettings {
    double rho = 0.5;
    double eps0 = 1e-2;
    double sigma0 = std::numeric_limits<double>::infinity();
    std::vector<double> radius_grid;
};

struct DiagnosticsRow {
    double t = 0, dt = 0, energy = 0, eta = 0, rho_of_t = 0, area_conc_max = 0;
    bool hs_ok = true;
    double covering_slack = 0;
    double max_abs_A = 0, min_quality = 0;
    bool covering_ok = true;
    bool sobolev_conditions = true;
};

inline DiagnosticsRow snapshot_diagnostics(const FlowState& st, const DiagnosticsSettings& cfg)
{
    const Surface& s = st.surface;
    const auto& shape = st.shape.vertices;
    std::vector<double> radii{cfg.rho, cfg.rho / 2};
    radii.insert(radii.end(), cfg.radius_grid.begin(), cfg.radius_grid.end());
    BallTable tab = ball_table(s, shape, vertex_centers(s), radii);

    DiagnosticsRow row;
    row.t = st.t;
    row.dt = st.dt_last;
    row.energy = st.energy();
    auto [eta, arg] = tab.sup(0);
    row.eta = eta;
    row.area_conc_max = tab.area.col(0).maxCoeff();
    CoveringReport cov = covering_from_table(tab, 0, 1, s.ambient().covering_constant(cfg.rho));
    row.covering_slack = cov.slack;
    row.covering_ok = cov.ok;
    std::vector<int> cols;
    for (std::size_t i = 0; i < cfg.radius_grid.size(); ++i) cols.push_back(static_cast<int>(i + 2));
    row.rho_of_t = cols.empty() ? 0.0 : rho_from_table(tab, cols, cfg.eps0);
    CutoffFunction cut(s.ambient(), tab.centers[static_cast<std::size_t>(arg)], cfg.rho);
    HoffmanSpruckReport hs = hoffman_spruck_check(s, shape, cut.values(s));
    row.sobolev_conditions = hs.conditions_ok;
    row.hs_ok = hs.ok || !hs.conditions_ok;
    row.max_abs_A = st.shape.max_abs_A();
    row.min_quality = s.quality().min_angle_deg;
    return row;
}

} // namespace willmore
