#pragma once

// Closed oriented triangle meshes immersed in an AmbientSpace, with the
// first-order operators of the induced metric: areas, dual areas, the
// cotangent Laplace-Beltrami operator, gradients and normals.

#include "willmore/ambient.hpp"
#include "willmore/error.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace willmore {

using Triangle = std::array<int, 3>;

struct Immersion {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    double t = 0.0;
};

/// Connectivity derived once from the triangle list and shared by every
/// immersion along a trajectory.
class Topology {
public:
    explicit Topology(std::span<const Triangle> triangles, std::size_t vertex_count)
        : triangles_(triangles.begin(), triangles.end())
        , vertex_faces_(vertex_count)
        , neighbors_(vertex_count)
    {
        std::map<std::pair<int, int>, int> directed;
        for (std::size_t f = 0; f < triangles_.size(); ++f) {
            const Triangle& t = triangles_[f];
            for (int c = 0; c < 3; ++c) {
                int a = t[c], b = t[(c + 1) % 3];
                if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= vertex_count ||
                    static_cast<std::size_t>(b) >= vertex_count)
                    throw Error(ErrorCode::InvalidMesh, "triangle " + std::to_string(f) + " has an invalid vertex index");
                if (a == b) throw Error(ErrorCode::InvalidMesh, "triangle " + std::to_string(f) + " repeats a vertex");
                if (!directed.emplace(std::make_pair(a, b), static_cast<int>(f)).second)
                    throw Error(ErrorCode::InvalidMesh, "directed edge (" + std::to_string(a) + "," + std::to_string(b) +
                                                            ") used twice: mesh is non-manifold or inconsistently oriented");
                vertex_faces_[static_cast<std::size_t>(a)].push_back(static_cast<int>(f));
            }
        }
        for (const auto& [key, face] : directed) {
            auto [a, b] = key;
            auto twin = directed.find({b, a});
            if (twin == directed.end())
                throw Error(ErrorCode::InvalidMesh,
                            "edge (" + std::to_string(a) + "," + std::to_string(b) + ") has one incident triangle: mesh is not closed");
            if (a < b) {
                edges_.push_back({a, b});
                edge_faces_.push_back({face, twin->second});
            }
            neighbors_[static_cast<std::size_t>(a)].push_back(b);
        }
        for (std::size_t v = 0; v < vertex_count; ++v) {
            if (neighbors_[v].empty()) throw Error(ErrorCode::InvalidMesh, "vertex " + std::to_string(v) + " is isolated");
            std::sort(neighbors_[v].begin(), neighbors_[v].end());
        }
        // Connectedness.
        std::vector<char> seen(vertex_count, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        std::size_t reached = 1;
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            for (int w : neighbors_[static_cast<std::size_t>(v)])
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    ++reached;
                    stack.push_back(w);
                }
        }
        if (reached != vertex_count) throw Error(ErrorCode::InvalidMesh, "mesh is not connected");
    }

    std::size_t vertex_count() const { return neighbors_.size(); }
    std::size_t face_count() const { return triangles_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const std::vector<std::array<int, 2>>& edges() const { return edges_; }
    const std::vector<std::array<int, 2>>& edge_faces() const { return edge_faces_; }
    const std::vector<int>& vertex_faces(int v) const { return vertex_faces_[static_cast<std::size_t>(v)]; }
    const std::vector<int>& neighbors(int v) const { return neighbors_[static_cast<std::size_t>(v)]; }

    int euler_characteristic() const
    {
        return static_cast<int>(vertex_count()) - static_cast<int>(edge_count()) + static_cast<int>(face_count());
    }

    /// Vertices within k edges of v, excluding v, in breadth-first order.
    std::vector<int> ring(int v, int k) const
    {
        std::vector<int> out;
        std::vector<int> frontier{v};
        std::vector<int> visited{v};
        for (int level = 0; level < k; ++level) {
            std::vector<int> next;
            for (int u : frontier)
                for (int w : neighbors(u))
                    if (std::find(visited.begin(), visited.end(), w) == visited.end()) {
                        visited.push_back(w);
                        next.push_back(w);
                        out.push_back(w);
                    }
            frontier = std::move(next);
        }
        return out;
    }

    /// The triangle sharing edge (a, b) of face f, and the vertex opposite to it.
    std::pair<int, int> across(int f, int a, int b) const
    {
        for (int g : vertex_faces(a)) {
            if (g == f) continue;
            const Triangle& t = triangles_[static_cast<std::size_t>(g)];
            for (int c = 0; c < 3; ++c)
                if (t[c] == b && t[(c + 1) % 3] == a) return {g, t[(c + 2) % 3]};
        }
        throw Error(ErrorCode::InvalidMesh, "no triangle across edge");
    }

private:
    std::vector<Triangle> triangles_;
    std::vector<std::array<int, 2>> edges_;
    std::vector<std::array<int, 2>> edge_faces_;
    std::vector<std::vector<int>> vertex_faces_;
    std::vector<std::vector<int>> neighbors_;
};

/// Per-triangle pullback metric in the reference coordinates of the affine
/// triangle map (v0, v1 - v0, v2 - v0), evaluated with the ambient metric at
/// the barycenter.
struct InducedMetric {
    std::vector<Mat2> g;
    std::vector<double> area;        // dμ per triangle = sqrt(det g) / 2
    std::vector<double> edge_length; // ambient length per topology edge, metric at the midpoint
    double total_area = 0;
};

struct QualityReport {
    double min_angle_deg = 0;
    double max_aspect = 0;
    double min_area = 0;
    double edge_ratio = 0;
    double min_edge = 0;
};

/// Validated immersion plus cached first-order geometry.
class Surface {
public:
    static constexpr double default_area_floor = 1e-12;

    Surface(Immersion im, const AmbientSpace& amb, std::shared_ptr<const Topology> topo = nullptr,
            double area_floor = default_area_floor)
        : im_(std::move(im))
        , amb_(std::make_shared<const AmbientSpace>(amb))
        , topo_(topo ? std::move(topo) : std::make_shared<const Topology>(im_.triangles, im_.vertices.size()))
    {
        if (topo_->vertex_count() != im_.vertices.size())
            throw Error(ErrorCode::ConnectivityChanged, "vertex count differs from topology");
        for (std::size_t v = 0; v < im_.vertices.size(); ++v) {
            if (!im_.vertices[v].allFinite())
                throw Error(ErrorCode::NonFiniteInput, "vertex " + std::to_string(v) + " is not finite");
            amb.require_in_chart(im_.vertices[v]);
        }
        build_metric(area_floor);
        build_laplacian();
    }

    const Immersion& immersion() const { return im_; }
    const AmbientSpace& ambient() const { return *amb_; }
    const Topology& topology() const { return *topo_; }
    std::shared_ptr<const Topology> shared_topology() const { return topo_; }
    const InducedMetric& metric() const { return metric_; }
    std::size_t vertex_count() const { return im_.vertices.size(); }
    std::size_t face_count() const { return im_.triangles.size(); }
    const Vec3& vertex(int v) const { return im_.vertices[static_cast<std::size_t>(v)]; }

    /// Mixed Voronoi dual area per vertex.
    const Eigen::VectorXd& dual_area() const { return dual_area_; }
    /// Cotangent stiffness matrix: (L u)_i = Σ_j w_ij (u_j - u_i).
    const Eigen::SparseMatrix<double>& stiffness() const { return stiffness_; }
    const std::vector<std::array<double, 3>>& cotangents() const { return cot_; }

    Eigen::Matrix<double, 3, 2> jacobian(int f) const
    {
        const Triangle& t = im_.triangles[static_cast<std::size_t>(f)];
        Eigen::Matrix<double, 3, 2> j;
        j.col(0) = vertex(t[1]) - vertex(t[0]);
        j.col(1) = vertex(t[2]) - vertex(t[0]);
        return j;
    }

    Vec3 barycenter(int f) const
    {
        const Triangle& t = im_.triangles[static_cast<std::size_t>(f)];
        return (vertex(t[0]) + vertex(t[1]) + vertex(t[2])) / 3.0;
    }

    /// Δu = M^{-1} L u.
    Eigen::VectorXd laplace_beltrami(const Eigen::VectorXd& u) const
    {
        if (u.size() != static_cast<Eigen::Index>(vertex_count()))
            throw Error(ErrorCode::BadParams, "field size does not match vertex count");
        if (!u.allFinite()) throw Error(ErrorCode::NonFiniteInput, "laplace_beltrami input is not finite");
        Eigen::VectorXd lu = stiffness_ * u;
        return lu.cwiseQuotient(dual_area_);
    }

    /// Exterior unit normal per vertex (unit in the ambient metric), from
    /// area-weighted chart face normals.
    std::vector<Vec3> vertex_normals() const
    {
        std::vector<Vec3> acc(vertex_count(), Vec3::Zero());
        for (std::size_t f = 0; f < face_count(); ++f) {
            auto j = jacobian(static_cast<int>(f));
            Vec3 n = j.col(0).cross(j.col(1));
            for (int c : im_.triangles[f]) acc[static_cast<std::size_t>(c)] += n;
        }
        std::vector<Vec3> out(vertex_count());
        for (std::size_t v = 0; v < vertex_count(); ++v) {
            // Conformal metric: the G-normal has the Euclidean direction.
            const Vec3& p = im_.vertices[v];
            double lambda = amb_->conformal_factor(p);
            double len = acc[v].norm();
            if (!(len > 0)) throw Error(ErrorCode::DegenerateTriangle, "zero normal at vertex " + std::to_string(v));
            out[v] = acc[v] / (len * lambda);
        }
        return out;
    }

    /// Gradient of a piecewise-linear field on triangle f as a reference covector (du/dξ1, du/dξ2).
    Vec2 gradient_covector(int f, const Eigen::VectorXd& u) const
    {
        const Triangle& t = im_.triangles[static_cast<std::size_t>(f)];
        return Vec2(u[t[1]] - u[t[0]], u[t[2]] - u[t[0]]);
    }

    /// |∇u|_g on triangle f.
    double gradient_norm(int f, const Eigen::VectorXd& u) const
    {
        Vec2 du = gradient_covector(f, u);
        double s = du.dot(metric_.g[static_cast<std::size_t>(f)].inverse() * du);
        return std::sqrt(std::max(0.0, s));
    }

    /// ∇u on triangle f as a chart vector (tangent to the triangle).
    Vec3 gradient_vector(int f, const Eigen::VectorXd& u) const
    {
        Vec2 du = gradient_covector(f, u);
        return jacobian(f) * (metric_.g[static_cast<std::size_t>(f)].inverse() * du);
    }

    /// Per-vertex ∇u as an area-weighted average of incident triangle gradients.
    std::vector<Vec3> vertex_gradient(const Eigen::VectorXd& u) const
    {
        std::vector<Vec3> out(vertex_count(), Vec3::Zero());
        std::vector<double> w(vertex_count(), 0.0);
        for (std::size_t f = 0; f < face_count(); ++f) {
            Vec3 gv = gradient_vector(static_cast<int>(f), u);
            double a = metric_.area[f];
            for (int c : im_.triangles[f]) {
                out[static_cast<std::size_t>(c)] += a * gv;
                w[static_cast<std::size_t>(c)] += a;
            }
        }
        for (std::size_t v = 0; v < vertex_count(); ++v) out[v] /= w[v];
        return out;
    }

    /// Discrete Gauss curvature: angle defect over mixed dual area.
    Eigen::VectorXd gauss_curvature() const
    {
        Eigen::VectorXd defect = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(vertex_count()), 2 * M_PI);
        for (std::size_t f = 0; f < face_count(); ++f)
            for (int c = 0; c < 3; ++c) defect[im_.triangles[f][static_cast<std::size_t>(c)]] -= angles_[f][static_cast<std::size_t>(c)];
        return defect.cwiseQuotient(dual_area_);
    }

    /// Interior angles (radians) of triangle f in the induced metric.
    const std::array<double, 3>& angles(int f) const { return angles_[static_cast<std::size_t>(f)]; }

    QualityReport quality() const
    {
        QualityReport q;
        q.min_angle_deg = 180;
        q.min_area = std::numeric_limits<double>::infinity();
        double min_e = std::numeric_limits<double>::infinity(), max_e = 0;
        for (std::size_t f = 0; f < face_count(); ++f) {
            const auto& l = side_lengths_[f];
            for (double a : angles_[f]) q.min_angle_deg = std::min(q.min_angle_deg, a * 180.0 / M_PI);
            double lmax = std::max({l[0], l[1], l[2]});
            // Aspect ratio normalised to 1 for equilateral triangles.
            double area = metric_.area[f];
            double aspect = lmax * (l[0] + l[1] + l[2]) / (4.0 * std::sqrt(3.0) * area);
            q.max_aspect = std::max(q.max_aspect, aspect);
            q.min_area = std::min(q.min_area, area);
        }
        for (double e : metric_.edge_length) {
            min_e = std::min(min_e, e);
            max_e = std::max(max_e, e);
        }
        q.min_edge = min_e;
        q.edge_ratio = max_e / min_e;
        return q;
    }

private:
    void build_metric(double area_floor)
    {
        const std::size_t nf = face_count();
        metric_.g.resize(nf);
        metric_.area.resize(nf);
        cot_.resize(nf);
        angles_.resize(nf);
        side_lengths_.resize(nf);
        metric_.total_area = 0;
        for (std::size_t f = 0; f < nf; ++f) {
            auto j = jacobian(static_cast<int>(f));
            const double lambda = amb_->conformal_factor(barycenter(static_cast<int>(f)));
            const double lambda2 = lambda * lambda;
            Mat2 g = lambda2 * (j.transpose() * j);
            double det = g.determinant();
            double area = 0.5 * std::sqrt(std::max(det, 0.0));
            if (!(area > area_floor))
                throw Error(ErrorCode::DegenerateTriangle, "triangle " + std::to_string(f) + " has induced area " +
                                                               std::to_string(area) + " below the floor");
            metric_.g[f] = g;
            metric_.area[f] = area;
            metric_.total_area += area;
            // Squared side lengths opposite to corners 0, 1, 2.
            std::array<double, 3> l2{g(0, 0) + g(1, 1) - 2 * g(0, 1), g(1, 1), g(0, 0)};
            std::array<double, 3> dots{g(0, 1), g(0, 0) - g(0, 1), g(1, 1) - g(0, 1)};
            for (int c = 0; c < 3; ++c) {
                // cot of the angle at corner c = (adjacent dot) / (2 area)
                cot_[f][static_cast<std::size_t>(c)] = dots[static_cast<std::size_t>(c)] / (2 * area);
                angles_[f][static_cast<std::size_t>(c)] = std::atan2(2 * area, dots[static_cast<std::size_t>(c)]);
                side_lengths_[f][static_cast<std::size_t>(c)] = std::sqrt(l2[static_cast<std::size_t>(c)]);
            }
        }
        const auto& edges = topo_->edges();
        metric_.edge_length.resize(edges.size());
        for (std::size_t e = 0; e < edges.size(); ++e) {
            Vec3 a = vertex(edges[e][0]), b = vertex(edges[e][1]);
            metric_.edge_length[e] = amb_->conformal_factor(0.5 * (a + b)) * (b - a).norm();
        }
    }

    void build_laplacian()
    {
        const std::size_t nv = vertex_count();
        dual_area_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nv));
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(face_count() * 12);
        for (std::size_t f = 0; f < face_count(); ++f) {
            const Triangle& t = im_.triangles[f];
            const auto& cot = cot_[f];
            const auto& l = side_lengths_[f];
            const double area = metric_.area[f];
            int obtuse = -1;
            for (int c = 0; c < 3; ++c)
                if (cot[static_cast<std::size_t>(c)] < 0) obtuse = c;
            for (int c = 0; c < 3; ++c) {
                int i = t[static_cast<std::size_t>((c + 1) % 3)];
                int k = t[static_cast<std::size_t>((c + 2) % 3)];
                double w = 0.5 * cot[static_cast<std::size_t>(c)];
                trip.emplace_back(i, k, w);
                trip.emplace_back(k, i, w);
                trip.emplace_back(i, i, -w);
                trip.emplace_back(k, k, -w);
            }
            for (int c = 0; c < 3; ++c) {
                int v = t[static_cast<std::size_t>(c)];
                double a;
                if (obtuse < 0) {
                    // Voronoi: (|e_next|^2 cot(prev) + |e_prev|^2 cot(next)) / 8
                    std::size_t n = static_cast<std::size_t>((c + 1) % 3), p = static_cast<std::size_t>((c + 2) % 3);
                    a = (l[p] * l[p] * cot[p] + l[n] * l[n] * cot[n]) / 8.0;
                } else {
                    a = (obtuse == c) ? area / 2 : area / 4;
                }
                dual_area_[v] += a;
            }
        }
        stiffness_.resize(static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(nv));
        stiffness_.setFromTriplets(trip.begin(), trip.end());
    }

    Immersion im_;
    std::shared_ptr<const AmbientSpace> amb_; // owned copy, so temporaries are safe to pass
    std::shared_ptr<const Topology> topo_;
    InducedMetric metric_;
    Eigen::VectorXd dual_area_;
    Eigen::SparseMatrix<double> stiffness_;
    std::vector<std::array<double, 3>> cot_;
    std::vector<std::array<double, 3>> angles_;
    std::vector<std::array<double, 3>> side_lengths_;
};

inline InducedMetric induced_metric(const Immersion& im, const AmbientSpace& amb)
{
    return Surface(im, amb).metric();
}

inline std::vector<Vec3> vertex_normal(const Immersion& im, const AmbientSpace& amb)
{
    return Surface(im, amb).vertex_normals();
}

inline Eigen::VectorXd laplace_beltrami(const Immersion& im, const AmbientSpace& amb, const Eigen::VectorXd& u)
{
    return Surface(im, amb).laplace_beltrami(u);
}

inline QualityReport quality_report(const Immersion& im, const AmbientSpace& amb)
{
    return Surface(im, amb).quality();
}

/// Per-triangle ∇u as a reference-coordinate covector.
inline std::vector<Vec2> tangential_gradient(const Surface& s, const Eigen::VectorXd& u)
{
    std::vector<Vec2> out(s.face_count());
    for (std::size_t f = 0; f < s.face_count(); ++f) out[f] = s.gradient_covector(static_cast<int>(f), u);
    return out;
}

/// ∇T for a per-triangle covariant 2-tensor T (reference coordinates of each
/// triangle). Neighbouring triangles are unfolded isometrically across the
/// shared edge, which is the discrete Levi-Civita transport; the first-order
/// variation is then fitted by least squares over the three neighbours.
/// Returns (∇T)(k)(i, j) = ∇_k T_ij in reference coordinates.
inline std::vector<std::array<Mat2, 2>> covariant_derivative(const Surface& s, std::span<const Mat2> tensor)
{
    const auto& topo = s.topology();
    const auto& tris = topo.triangles();
    const std::size_t nf = s.face_count();
    if (tensor.size() != nf) throw Error(ErrorCode::BadParams, "tensor field size does not match face count");

    // Flattened frame: corner 0 at origin, corner 1 on the x axis.
    // P maps reference coordinates to flattened coordinates.
    auto flatten = [&](int f) {
        const Mat2& g = s.metric().g[static_cast<std::size_t>(f)];
        double l1 = std::sqrt(g(0, 0));
        double x2 = g(0, 1) / l1;
        double y2 = std::sqrt(std::max(g(1, 1) - x2 * x2, 0.0));
        Mat2 p;
        p << l1, x2, 0, y2;
        return p;
    };

    std::vector<std::array<Mat2, 2>> out(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        const Triangle& t = tris[f];
        Mat2 pf = flatten(static_cast<int>(f));
        Mat2 pf_inv = pf.inverse();
        std::array<Vec2, 3> corner{Vec2::Zero(), pf.col(0), pf.col(1)};
        Vec2 centroid = (corner[0] + corner[1] + corner[2]) / 3.0;
        Mat2 tf = pf_inv.transpose() * tensor[f] * pf_inv;

        Eigen::Matrix<double, 3, 2> design;
        std::array<Mat2, 3> rhs;
        for (int c = 0; c < 3; ++c) {
            int a = t[static_cast<std::size_t>(c)], b = t[static_cast<std::size_t>((c + 1) % 3)];
            auto [g, opp] = topo.across(static_cast<int>(f), a, b);
            const Triangle& tg = tris[static_cast<std::size_t>(g)];
            Mat2 pg = flatten(g);
            std::array<Vec2, 3> cg{Vec2::Zero(), pg.col(0), pg.col(1)};
            auto local = [&](int v) {
                for (int k = 0; k < 3; ++k)
                    if (tg[static_cast<std::size_t>(k)] == v) return cg[static_cast<std::size_t>(k)];
                return Vec2(Vec2::Zero());
            };
            // Rigid motion taking g's copy of edge (a, b) onto f's copy.
            Vec2 ea_f = corner[static_cast<std::size_t>(c)], eb_f = corner[static_cast<std::size_t>((c + 1) % 3)];
            Vec2 ea_g = local(a), eb_g = local(b);
            Vec2 df = eb_f - ea_f, dg = eb_g - ea_g;
            double ang = std::atan2(df.y(), df.x()) - std::atan2(dg.y(), dg.x());
            Mat2 rot;
            rot << std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang);
            Vec2 opp_pos = ea_f + rot * (local(opp) - ea_g);
            Vec2 cent_g = (ea_f + eb_f + opp_pos) / 3.0;
            Mat2 pg_inv = pg.inverse();
            Mat2 tg_flat = pg_inv.transpose() * tensor[static_cast<std::size_t>(g)] * pg_inv;
            design.row(c) = (cent_g - centroid).transpose();
            rhs[static_cast<std::size_t>(c)] = rot * tg_flat * rot.transpose() - tf;
        }
        Mat2 normal = design.transpose() * design;
        Mat2 normal_inv = normal.inverse();
        std::array<Mat2, 2> d_flat{Mat2::Zero(), Mat2::Zero()};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                Eigen::Vector3d y(rhs[0](i, j), rhs[1](i, j), rhs[2](i, j));
                Vec2 slope = normal_inv * (design.transpose() * y);
                d_flat[0](i, j) = slope[0];
                d_flat[1](i, j) = slope[1];
            }
        // Back to reference coordinates: contract every index with P.
        std::array<Mat2, 2> d_ref{Mat2::Zero(), Mat2::Zero()};
        for (int k = 0; k < 2; ++k)
            for (int a = 0; a < 2; ++a) d_ref[static_cast<std::size_t>(k)] += pf(a, k) * (pf.transpose() * d_flat[static_cast<std::size_t>(a)] * pf);
        out[f] = d_ref;
    }
    return out;
}

} // namespace willmore
