#pragma once

// Second-order geometry of a discrete immersion: second fundamental form by
// weighted polynomial fitting in ambient normal coordinates, mean curvature,
// tracefree part, derivative estimates of A, the Willmore energy and
// operator, and residuals of the Gauss, Codazzi and Simons identities.
//
// Sign convention: A_ij = <∇̄_j ∂_i f, ν> with ν the exterior normal, so the
// round sphere of radius r has H = -2/r. With this sign the flow
// ∂_t f = -W ν decreases the energy and ∂_t dμ = H F dμ holds.

#include "willmore/ambient.hpp"
#include "willmore/mesh.hpp"
#include "willmore/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace willmore {

struct VertexShape {
    Mat3 frame = Mat3::Identity(); // chart components of (e1, e2, ν), orthonormal in the ambient metric
    Mat2 A = Mat2::Zero();         // second fundamental form in (e1, e2)
    double H = 0;
    Mat2 A0 = Mat2::Zero(); // tracefree part
    double A_norm2 = 0;
    double A0_norm2 = 0;
    int fit_degree = 0;
    int fit_points = 0;

    Vec3 normal() const { return frame.col(2); }
};

struct ShapeState {
    std::vector<VertexShape> vertices;
    Eigen::VectorXd W; // Willmore operator per vertex
    double energy = 0;
    // Filled by attach_derivative_norms; empty otherwise.
    std::vector<double> grad_A_norm2;
    std::vector<double> hess_A_norm2; // low order: second derivatives from quadratic fits

    Eigen::VectorXd H() const
    {
        Eigen::VectorXd h(static_cast<Eigen::Index>(vertices.size()));
        for (std::size_t v = 0; v < vertices.size(); ++v) h[static_cast<Eigen::Index>(v)] = vertices[v].H;
        return h;
    }

    Eigen::VectorXd A_norm2() const
    {
        Eigen::VectorXd a(static_cast<Eigen::Index>(vertices.size()));
        for (std::size_t v = 0; v < vertices.size(); ++v) a[static_cast<Eigen::Index>(v)] = vertices[v].A_norm2;
        return a;
    }

    double max_abs_A() const
    {
        double m = 0;
        for (const auto& v : vertices) m = std::max(m, std::sqrt(v.A_norm2));
        return m;
    }
};

/// Breadth-first rings 1..3 per vertex, computed once per topology.
class RingCache {
public:
    static constexpr int max_rings = 3;

    explicit RingCache(const Topology& topo)
        : rings_(topo.vertex_count())
    {
        for (std::size_t v = 0; v < topo.vertex_count(); ++v) {
            std::vector<int> all = topo.ring(static_cast<int>(v), max_rings);
            // Ring boundaries: recompute cumulative sizes per level.
            for (int k = 1; k <= max_rings; ++k) rings_[v][static_cast<std::size_t>(k - 1)] = topo.ring(static_cast<int>(v), k).size();
            order_.push_back(std::move(all));
        }
    }

    /// Vertices within k rings of v (excluding v).
    std::span<const int> within(int v, int k) const
    {
        const auto& all = order_[static_cast<std::size_t>(v)];
        return {all.data(), rings_[static_cast<std::size_t>(v)][static_cast<std::size_t>(k - 1)]};
    }

private:
    std::vector<std::array<std::size_t, max_rings>> rings_;
    std::vector<std::vector<int>> order_;
};

struct FitOptions {
    int max_degree = 4;
    double max_condition = 1e8;
    double min_tangent_fraction = 0.1; // neighbours closer to the normal axis are dropped
};

namespace detail {

inline int monomial_count(int degree) { return (degree + 1) * (degree + 2) / 2 - 1; }

/// Monomials x^a y^b, 1 <= a + b <= degree, graded order (x, y, x², xy, y², ...).
inline void monomials(double x, double y, int degree, double* out)
{
    double xp[5] = {1, x, x * x, x * x * x, x * x * x * x};
    double yp[5] = {1, y, y * y, y * y * y, y * y * y * y};
    int c = 0;
    for (int d = 1; d <= degree; ++d)
        for (int b = 0; b <= d; ++b) out[c++] = xp[d - b] * yp[b];
}

/// G-orthonormal frame (e1, e2, n) with n given (G-unit).
inline Mat3 frame_from_normal(const AmbientSpace& amb, const Vec3& p, const Vec3& n)
{
    double lambda = amb.conformal_factor(p);
    Vec3 ne = n.normalized();
    int axis = 0;
    for (int a = 1; a < 3; ++a)
        if (std::abs(ne[a]) < std::abs(ne[axis])) axis = a;
    Vec3 a = Vec3::Unit(axis);
    Vec3 e1 = a - ne.dot(a) * ne;
    e1 = e1.normalized() / lambda;
    Vec3 e2 = ne.cross(e1.normalized()) / lambda;
    Mat3 f;
    f.col(0) = e1;
    f.col(1) = e2;
    f.col(2) = ne / lambda;
    return f;
}

/// Inverse of a G-orthonormal frame: E^{-1} = E^T G.
inline Mat3 frame_inverse(const AmbientSpace& amb, const Vec3& p, const Mat3& frame)
{
    double lambda = amb.conformal_factor(p);
    return lambda * lambda * frame.transpose();
}

inline constexpr std::size_t max_fit_points = 128;

} // namespace detail

/// Fits the surface around vertex v as a graph over the tangent plane of the
/// mesh normal in ambient normal coordinates (exact logarithm for the model
/// kinds, second order for conformal ambients). The highest polynomial degree
/// the neighbourhood supports is used, up to FitOptions::max_degree.
inline VertexShape fit_vertex(const Surface& s, const RingCache& rings, int v, const Vec3& mesh_normal,
                              const FitOptions& opt = {})
{
    const AmbientSpace& amb = s.ambient();
    const Vec3& p = s.vertex(v);
    Mat3 frame = detail::frame_from_normal(amb, p, mesh_normal);
    Mat3 inv = detail::frame_inverse(amb, p, frame);

    auto need = [](int degree) { return (detail::monomial_count(degree) * 7 + 4) / 5; };

    std::vector<Vec3> pts;
    for (int k = 1; k <= RingCache::max_rings; ++k) {
        if (static_cast<int>(pts.size()) >= need(opt.max_degree)) break;
        pts.clear();
        for (int q : rings.within(v, k)) {
            Vec3 xi = inv * amb.log_map(p, s.vertex(q));
            pts.push_back(xi);
        }
    }
    // Drop points lying almost along the normal: the graph is not single valued there.
    std::vector<Vec3> kept;
    kept.reserve(pts.size());
    for (const Vec3& xi : pts) {
        double r = xi.norm();
        if (r > 0 && xi.head<2>().norm() >= opt.min_tangent_fraction * r) kept.push_back(xi);
    }

    if (kept.size() > detail::max_fit_points) {
        std::partial_sort(kept.begin(), kept.begin() + detail::max_fit_points, kept.end(),
                          [](const Vec3& a, const Vec3& b) { return a.squaredNorm() < b.squaredNorm(); });
        kept.resize(detail::max_fit_points);
    }

    double scale = 0;
    for (const Vec3& xi : kept) scale += xi.norm();
    if (kept.empty() || !(scale > 0)) throw Error(ErrorCode::RankDeficientFit, "empty neighbourhood at vertex " + std::to_string(v));
    scale /= static_cast<double>(kept.size());

    for (int degree = opt.max_degree; degree >= 2; --degree) {
        const int m = detail::monomial_count(degree);
        if (static_cast<int>(kept.size()) < need(degree)) continue;
        Eigen::MatrixXd X(static_cast<Eigen::Index>(kept.size()), m);
        Eigen::VectorXd z(static_cast<Eigen::Index>(kept.size()));
        double row[16] = {};
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const Vec3& xi = kept[i];
            double w = scale / xi.norm();
            detail::monomials(xi.x() / scale, xi.y() / scale, degree, row);
            for (int c = 0; c < m; ++c) X(static_cast<Eigen::Index>(i), c) = w * row[c];
            z[static_cast<Eigen::Index>(i)] = w * xi.z() / scale;
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
        double cond = diag.maxCoeff() / std::max(diag.minCoeff(), 1e-300);
        if (!(cond <= opt.max_condition)) continue;
        Eigen::VectorXd c = qr.solve(z);
        // Unscale: h(x) = scale * ẑ(x / scale).
        Vec2 grad(c[0], c[1]);
        Mat2 hess;
        hess << 2 * c[2] / scale, c[3] / scale, c[3] / scale, 2 * c[4] / scale;

        double w2 = 1.0 + grad.squaredNorm();
        Mat2 g = Mat2::Identity() + grad * grad.transpose();
        Mat2 a_graph = hess / std::sqrt(w2);
        Eigen::LLT<Mat2> llt(g);
        Mat2 l = llt.matrixL();
        Mat2 l_inv = l.inverse();
        Mat2 a = l_inv * a_graph * l_inv.transpose();
        a = 0.5 * (a + a.transpose());

        Eigen::Matrix<double, 3, 2> tangents;
        tangents << 1, 0, 0, 1, grad.x(), grad.y();
        Eigen::Matrix<double, 3, 2> ortho = tangents * l_inv.transpose();
        Vec3 nu(-grad.x(), -grad.y(), 1.0);
        nu /= std::sqrt(w2);

        VertexShape out;
        out.frame.col(0) = frame * ortho.col(0);
        out.frame.col(1) = frame * ortho.col(1);
        out.frame.col(2) = frame * nu;
        out.A = a;
        out.H = a.trace();
        out.A0 = a - 0.5 * out.H * Mat2::Identity();
        out.A_norm2 = a.squaredNorm();
        out.A0_norm2 = out.A0.squaredNorm();
        out.fit_degree = degree;
        out.fit_points = static_cast<int>(kept.size());
        return out;
    }
    throw Error(ErrorCode::RankDeficientFit, "no well-conditioned fit at vertex " + std::to_string(v) + " with " +
                                                 std::to_string(kept.size()) + " neighbours");
}

/// Per-vertex A, H, A°, ν for every vertex.
inline std::vector<VertexShape> second_fundamental_form(const Surface& s, const RingCache& rings, const FitOptions& opt = {})
{
    std::vector<Vec3> normals = s.vertex_normals();
    std::vector<VertexShape> out(s.vertex_count());
    parallel_for(s.vertex_count(), [&](std::size_t v) { out[v] = fit_vertex(s, rings, static_cast<int>(v), normals[v], opt); });
    return out;
}

inline std::vector<VertexShape> second_fundamental_form(const Surface& s, const FitOptions& opt = {})
{
    RingCache rings(s.topology());
    return second_fundamental_form(s, rings, opt);
}

/// ¼ Σ_v H(v)² · dualArea(v).
inline double willmore_energy(const Surface& s, std::span<const VertexShape> shape)
{
    const auto& da = s.dual_area();
    double e = 0;
    for (std::size_t v = 0; v < shape.size(); ++v) e += shape[v].H * shape[v].H * da[static_cast<Eigen::Index>(v)];
    return 0.25 * e;
}

inline double willmore_energy(const Surface& s, const ShapeState& state) { return willmore_energy(s, state.vertices); }

/// W = ΔH + H|A°|² + H Ric̄(ν, ν), with Δ the cotangent Laplacian of the induced metric.
inline Eigen::VectorXd willmore_operator(const Surface& s, std::span<const VertexShape> shape)
{
    Eigen::VectorXd h(static_cast<Eigen::Index>(shape.size()));
    for (std::size_t v = 0; v < shape.size(); ++v) h[static_cast<Eigen::Index>(v)] = shape[v].H;
    Eigen::VectorXd w = s.laplace_beltrami(h);
    const AmbientSpace& amb = s.ambient();
    const bool flat = amb.kind() == AmbientKind::Euclidean;
    for (std::size_t v = 0; v < shape.size(); ++v) {
        double ric = flat ? 0.0 : amb.ricci_of(s.vertex(static_cast<int>(v)), shape[v].normal());
        w[static_cast<Eigen::Index>(v)] += shape[v].H * (shape[v].A0_norm2 + ric);
    }
    return w;
}

/// Full shape state: A, H, W and the energy.
inline ShapeState compute_shape(const Surface& s, const RingCache& rings, const FitOptions& opt = {})
{
    ShapeState st;
    st.vertices = second_fundamental_form(s, rings, opt);
    st.W = willmore_operator(s, st.vertices);
    st.energy = willmore_energy(s, st.vertices);
    return st;
}

inline ShapeState compute_shape(const Surface& s, const FitOptions& opt = {})
{
    RingCache rings(s.topology());
    return compute_shape(s, rings, opt);
}

/// Covariant derivatives of A and H at one vertex, in its orthonormal frame.
struct VertexDerivatives {
    std::array<Mat2, 2> dA{};                 // dA[k](i, j) = ∇_k A_ij
    std::array<std::array<Mat2, 2>, 2> d2A{}; // d2A[k][l](i, j) = ∇_k ∇_l A_ij
    Vec2 dH = Vec2::Zero();
    Mat2 d2H = Mat2::Zero(); // ∇_ij H
    int points = 0;

    double grad_norm2() const { return dA[0].squaredNorm() + dA[1].squaredNorm(); }
    double hess_norm2() const
    {
        double s = 0;
        for (const auto& row : d2A)
            for (const auto& m : row) s += m.squaredNorm();
        return s;
    }
    Mat2 laplacian() const { return d2A[0][0] + d2A[1][1]; }
};

namespace detail {

/// A neighbour q seen from vertex p: x are its graph coordinates over p's
/// tangent plane (first two normal coordinates), and c maps those coordinate
/// directions to q's orthonormal tangent frame, ∂x_i = Σ_a c(a, i) f_a(q).
struct LocalSample {
    Vec2 x;
    Mat2 c;
    int q;
};

struct LocalPatch {
    std::vector<LocalSample> samples;
    double scale = 0;
};

inline LocalPatch local_patch(const Surface& s, const RingCache& rings, std::span<const VertexShape> shape, int v)
{
    const AmbientSpace& amb = s.ambient();
    const bool flat = amb.kind() == AmbientKind::Euclidean;
    const Vec3& p = s.vertex(v);
    Mat3 inv = frame_inverse(amb, p, shape[static_cast<std::size_t>(v)].frame);

    std::span<const int> nbrs = rings.within(v, 2);
    if (nbrs.size() < 9) nbrs = rings.within(v, 3);

    LocalPatch patch;
    patch.samples.reserve(nbrs.size());
    for (int q : nbrs) {
        const Vec3& pq = s.vertex(q);
        Vec3 xi = inv * amb.log_map(p, pq);
        Mat3 dlog;
        if (flat) {
            dlog = Mat3::Identity();
        } else {
            double eps = 1e-6 * std::max(1e-3, (pq - p).norm());
            for (int c = 0; c < 3; ++c) {
                Vec3 d = Vec3::Zero();
                d[c] = eps;
                dlog.col(c) = (amb.log_map(p, pq + d) - amb.log_map(p, pq - d)) / (2 * eps);
            }
        }
        Eigen::Matrix<double, 3, 2> m = inv * dlog * shape[static_cast<std::size_t>(q)].frame.leftCols<2>();
        Mat2 m12 = m.topRows<2>();
        if (std::abs(m12.determinant()) < 1e-3) continue; // neighbour tangent plane nearly vertical
        patch.samples.push_back({xi.head<2>(), m12.inverse(), q});
        patch.scale += xi.head<2>().norm();
    }
    if (patch.samples.size() < 6)
        throw Error(ErrorCode::RankDeficientFit, "too few neighbours for derivative fit at vertex " + std::to_string(v));
    patch.scale /= static_cast<double>(patch.samples.size());
    return patch;
}

/// Weighted fit of f(x) − f(0) = D_k x_k + ½ D_kl x_k x_l for every column of
/// `values` (rows follow the patch samples). Returns first derivatives in
/// rows 0..1 and second derivatives (xx, xy, yy) in rows 2..4.
inline Eigen::MatrixXd quadratic_fit(const LocalPatch& patch, const Eigen::MatrixXd& values, int v)
{
    const auto n = static_cast<Eigen::Index>(patch.samples.size());
    const double scale = patch.scale;
    Eigen::MatrixXd X(n, 5);
    Eigen::MatrixXd Y(n, values.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vec2& x = patch.samples[static_cast<std::size_t>(i)].x;
        double w = scale / std::max(x.norm(), 1e-300);
        double u = x.x() / scale, t = x.y() / scale;
        X.row(i) << w * u, w * t, w * 0.5 * u * u, w * u * t, w * 0.5 * t * t;
        Y.row(i) = w * values.row(i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < 5) throw Error(ErrorCode::RankDeficientFit, "derivative fit is rank deficient at vertex " + std::to_string(v));
    Eigen::MatrixXd coef = qr.solve(Y);
    coef.topRows(2) /= scale;
    coef.bottomRows(3) /= scale * scale;
    return coef;
}

inline int sym_index(int i, int j) { return (i == 0 && j == 0) ? 0 : (i == 1 && j == 1) ? 2 : 1; }

/// Christoffel symbols Γ^m_ij of the induced metric at the patch centre
/// (where g = I) and their first derivatives, from fitted metric derivatives.
/// dg[k][i][j] = ∂_k g_ij, ddg[k][l][i][j] = ∂_kl g_ij.
struct PatchConnection {
    double gam[2][2][2];     // gam[m][i][j]
    double dgam[2][2][2][2]; // dgam[k][m][i][j] = ∂_k Γ^m_ij
};

inline PatchConnection patch_connection(const double dg[2][2][2], const double ddg[2][2][2][2])
{
    PatchConnection pc;
    for (int m = 0; m < 2; ++m)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                pc.gam[m][i][j] = 0.5 * (dg[i][j][m] + dg[j][i][m] - dg[m][i][j]);
                for (int k = 0; k < 2; ++k) {
                    // ∂_k (g^{ml} Γ_lij) with g = I and ∂_k g^{ml} = −∂_k g_ml.
                    double val = 0.5 * (ddg[k][i][j][m] + ddg[k][j][i][m] - ddg[k][m][i][j]);
                    for (int l = 0; l < 2; ++l) val -= dg[k][m][l] * 0.5 * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                    pc.dgam[k][m][i][j] = val;
                }
            }
    return pc;
}

} // namespace detail

/// Least-squares estimates of ∇A, ∇∇A and ∇∇H from the variation of A, the
/// induced metric and H over the two-ring, all pulled back into the graph
/// coordinates of each vertex's fitted tangent plane. The Christoffel symbols
/// of the induced metric and their first derivatives come from the fitted
/// metric variation. Second derivatives are low order.
inline std::vector<VertexDerivatives> curvature_derivatives(const Surface& s, const RingCache& rings,
                                                            std::span<const VertexShape> shape)
{
    std::vector<VertexDerivatives> out(s.vertex_count());

    parallel_for(s.vertex_count(), [&](std::size_t vi) {
        const int v = static_cast<int>(vi);
        const VertexShape& sp = shape[vi];
        detail::LocalPatch patch = detail::local_patch(s, rings, shape, v);

        // Columns: T_00, T_01, T_11, g_00, g_01, g_11, H (differences from the centre).
        Eigen::MatrixXd vals(static_cast<Eigen::Index>(patch.samples.size()), 7);
        for (std::size_t i = 0; i < patch.samples.size(); ++i) {
            const auto& smp = patch.samples[i];
            const VertexShape& sq = shape[static_cast<std::size_t>(smp.q)];
            Mat2 T = smp.c.transpose() * sq.A * smp.c;
            Mat2 g = smp.c.transpose() * smp.c;
            vals.row(static_cast<Eigen::Index>(i)) << T(0, 0) - sp.A(0, 0), T(0, 1) - sp.A(0, 1), T(1, 1) - sp.A(1, 1),
                g(0, 0) - 1.0, g(0, 1), g(1, 1) - 1.0, sq.H - sp.H;
        }
        Eigen::MatrixXd coef = detail::quadratic_fit(patch, vals, v);
        auto first = [&](int k, int col) { return coef(k, col); };
        auto second = [&](int k, int l, int col) { return coef(2 + k + l, col); };

        double dg[2][2][2], ddg[2][2][2][2], dT[2][2][2], ddT[2][2][2][2];
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    dT[k][i][j] = first(k, detail::sym_index(i, j));
                    dg[k][i][j] = first(k, 3 + detail::sym_index(i, j));
                    for (int l = 0; l < 2; ++l) {
                        ddT[k][l][i][j] = second(k, l, detail::sym_index(i, j));
                        ddg[k][l][i][j] = second(k, l, 3 + detail::sym_index(i, j));
                    }
                }
        detail::PatchConnection pc = detail::patch_connection(dg, ddg);
        const auto& gam = pc.gam;
        const auto& dgam = pc.dgam;

        const Mat2& A = sp.A;
        VertexDerivatives d;
        d.points = static_cast<int>(patch.samples.size());
        double nabA[2][2][2];
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    double val = dT[k][i][j];
                    for (int m = 0; m < 2; ++m) val -= gam[m][k][i] * A(m, j) + gam[m][k][j] * A(i, m);
                    nabA[k][i][j] = val;
                    d.dA[static_cast<std::size_t>(k)](i, j) = val;
                }
        for (int k = 0; k < 2; ++k)
            for (int l = 0; l < 2; ++l)
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        // ∂_k (∇_l A_ij), then the connection terms of ∇_k acting on ∇A.
                        double val = ddT[k][l][i][j];
                        for (int m = 0; m < 2; ++m) {
                            val -= dgam[k][m][l][i] * A(m, j) + gam[m][l][i] * dT[k][m][j];
                            val -= dgam[k][m][l][j] * A(i, m) + gam[m][l][j] * dT[k][i][m];
                        }
                        for (int m = 0; m < 2; ++m)
                            val -= gam[m][k][l] * nabA[m][i][j] + gam[m][k][i] * nabA[l][m][j] + gam[m][k][j] * nabA[l][i][m];
                        d.d2A[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)](i, j) = val;
                    }
        for (int k = 0; k < 2; ++k) d.dH[k] = first(k, 6);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double val = second(i, j, 6);
                for (int k = 0; k < 2; ++k) val -= gam[k][i][j] * d.dH[k];
                d.d2H(i, j) = val;
            }
        out[vi] = d;
    });
    return out;
}

/// Covariant Hessian ∇_ij u of a per-vertex scalar, in each vertex's frame.
inline std::vector<Mat2> scalar_hessian(const Surface& s, const RingCache& rings, std::span<const VertexShape> shape,
                                        const Eigen::VectorXd& u)
{
    std::vector<Mat2> out(s.vertex_count());
    parallel_for(s.vertex_count(), [&](std::size_t vi) {
        const int v = static_cast<int>(vi);
        detail::LocalPatch patch = detail::local_patch(s, rings, shape, v);
        Eigen::MatrixXd vals(static_cast<Eigen::Index>(patch.samples.size()), 4);
        for (std::size_t i = 0; i < patch.samples.size(); ++i) {
            const auto& smp = patch.samples[i];
            Mat2 g = smp.c.transpose() * smp.c;
            vals.row(static_cast<Eigen::Index>(i)) << g(0, 0) - 1.0, g(0, 1), g(1, 1) - 1.0, u[smp.q] - u[v];
        }
        Eigen::MatrixXd coef = detail::quadratic_fit(patch, vals, v);
        double dg[2][2][2], ddg[2][2][2][2] = {};
        for (int k = 0; k < 2; ++k)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) dg[k][i][j] = coef(k, detail::sym_index(i, j));
        detail::PatchConnection pc = detail::patch_connection(dg, ddg);
        Mat2 h;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double val = coef(2 + i + j, 3);
                for (int k = 0; k < 2; ++k) val -= pc.gam[k][i][j] * coef(k, 3);
                h(i, j) = val;
            }
        out[vi] = h;
    });
    return out;
}

inline void attach_derivative_norms(ShapeState& st, std::span<const VertexDerivatives> d)
{
    st.grad_A_norm2.resize(d.size());
    st.hess_A_norm2.resize(d.size());
    for (std::size_t v = 0; v < d.size(); ++v) {
        st.grad_A_norm2[v] = d[v].grad_norm2();
        st.hess_A_norm2[v] = d[v].hess_norm2();
    }
}

/// Frame components R̄(f_a, f_b, f_c, f_d) with f = (e1, e2, ν).
inline Tensor4 frame_riemann(const AmbientSpace& amb, const Vec3& p, const Mat3& frame)
{
    Tensor4 out;
    if (amb.kind() == AmbientKind::Euclidean) return out;
    Tensor4 r = amb.riemann(p);
    // Contract one index at a time.
    Tensor4 tmp1, tmp2;
    auto step = [](const Tensor4& in, const Mat3& f, int slot) {
        Tensor4 o;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c)
                    for (int d = 0; d < 3; ++d) {
                        double s = 0;
                        for (int x = 0; x < 3; ++x) {
                            int idx[4] = {a, b, c, d};
                            int src[4] = {a, b, c, d};
                            src[slot] = x;
                            s += f(x, idx[slot]) * in(src[0], src[1], src[2], src[3]);
                        }
                        o(a, b, c, d) = s;
                    }
        return o;
    };
    tmp1 = step(r, frame, 0);
    tmp2 = step(tmp1, frame, 1);
    tmp1 = step(tmp2, frame, 2);
    out = step(tmp1, frame, 3);
    return out;
}

struct IdentityResiduals {
    Eigen::VectorXd gauss;
    Eigen::VectorXd codazzi;
    Eigen::VectorXd simons;
    Eigen::VectorXd simons_ambient; // norm of the ambient-curvature contribution
};

/// Pointwise residuals of
///   Gauss:   Sc = Sc̄ - 2 Ric̄(ν,ν) + H² - |A|², with Sc = 2K from the angle defect;
///   Codazzi: ∇_i A_jk - ∇_j A_ik = R̄_0ijk;
///   Simons:  ΔA_ij = ∇_ij H + H A_ir A^r_j - A_ij |A|² + R̄_iq^q_r A^r_j + R̄_iqjr A^qr.
/// The ∇R̄ terms of Simons' identity vanish on the model spaces and are not
/// evaluated for conformal ambients.
inline IdentityResiduals identity_residuals(const Surface& s, std::span<const VertexShape> shape,
                                            std::span<const VertexDerivatives> deriv)
{
    const AmbientSpace& amb = s.ambient();
    const auto n = static_cast<Eigen::Index>(s.vertex_count());
    IdentityResiduals r{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
    Eigen::VectorXd K = s.gauss_curvature();
    const bool flat = amb.kind() == AmbientKind::Euclidean;
    for (Eigen::Index v = 0; v < n; ++v) {
        const VertexShape& sp = shape[static_cast<std::size_t>(v)];
        const VertexDerivatives& d = deriv[static_cast<std::size_t>(v)];
        const Vec3& p = s.vertex(static_cast<int>(v));
        Tensor4 rf = flat ? Tensor4{} : frame_riemann(amb, p, sp.frame);
        double sc_bar = flat ? 0.0 : amb.scalar(p);
        double ric_nn = flat ? 0.0 : amb.ricci_of(p, sp.normal());

        r.gauss[v] = std::abs(2 * K[v] - (sc_bar - 2 * ric_nn + sp.H * sp.H - sp.A_norm2));

        double cod = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    double val = d.dA[static_cast<std::size_t>(i)](j, k) - d.dA[static_cast<std::size_t>(j)](i, k) - rf(2, i, j, k);
                    cod += val * val;
                }
        r.codazzi[v] = std::sqrt(cod);

        const Mat2& A = sp.A;
        Mat2 amb_term = Mat2::Zero();
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                double val = 0;
                for (int q = 0; q < 2; ++q)
                    for (int rr = 0; rr < 2; ++rr) val += rf(i, q, q, rr) * A(rr, j) + rf(i, q, j, rr) * A(q, rr);
                amb_term(i, j) = val;
            }
        Mat2 rhs = d.d2H + sp.H * A * A - A * sp.A_norm2 + amb_term;
        r.simons[v] = (d.laplacian() - rhs).norm();
        r.simons_ambient[v] = amb_term.norm();
    }
    return r;
}

/// sqrt(Σ_v r(v)² dualArea(v)).
inline double l2_norm(const Surface& s, const Eigen::VectorXd& r)
{
    return std::sqrt(r.cwiseAbs2().dot(s.dual_area()));
}

} // namespace willmore
