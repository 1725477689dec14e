#pragma once

// Closed test surfaces: icosphere, ellipsoid, torus of revolution, dumbbell
// and ambient geodesic spheres.

#include "willmore/ambient.hpp"
#include "willmore/error.hpp"
#include "willmore/mesh.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace willmore {

/// Unit icosphere: the icosahedron with `level` midpoint subdivisions, projected to |x| = 1.
inline Immersion icosphere(int level)
{
    if (level < 0 || level > 8) throw Error(ErrorCode::BadParams, "icosphere level must be in [0, 8]");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : v) p.normalize();
    std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                               {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
            int id = static_cast<int>(v.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<Triangle> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    return {std::move(v), std::move(f), 0.0};
}

/// Axis-aligned ellipsoid with semi-axes (a, b, c): a scaled icosphere.
inline Immersion ellipsoid(double a, double b, double c, int level)
{
    if (!(a > 0 && b > 0 && c > 0)) throw Error(ErrorCode::BadParams, "ellipsoid semi-axes must be positive");
    Immersion im = icosphere(level);
    for (auto& p : im.vertices) p = Vec3(a * p.x(), b * p.y(), c * p.z());
    return im;
}

/// Torus of revolution about the z axis, tube radius r < R, on an nu × nv parameter grid.
inline Immersion torus(double R, double r, int nu, int nv)
{
    if (!(R > r && r > 0) || nu < 3 || nv < 3) throw Error(ErrorCode::BadParams, "torus needs R > r > 0 and nu, nv >= 3");
    Immersion im;
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            double u = 2 * M_PI * i / nu, w = 2 * M_PI * j / nv;
            im.vertices.emplace_back((R + r * std::cos(w)) * std::cos(u), (R + r * std::cos(w)) * std::sin(u), r * std::sin(w));
        }
    auto id = [&](int i, int j) { return ((i + nu) % nu) * nv + (j + nv) % nv; };
    for (int i = 0; i < nu; ++i)
        for (int j = 0; j < nv; ++j) {
            im.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            im.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return im;
}

/// Closed surface of revolution about the z axis from a profile polyline
/// (r_j, z_j) running from the north pole (r = 0) to the south pole (r = 0).
/// Rings sit at arclength spacing h(s) = h0 · min(1, 4/κ(s)), κ the larger
/// absolute principal curvature, with about 2πr/h vertices each; consecutive
/// rings are stitched by angle.
inline Immersion surface_of_revolution(const std::vector<Vec2>& profile, double h0)
{
    const std::size_t m = profile.size();
    if (m < 5 || !(h0 > 0)) throw Error(ErrorCode::BadParams, "surface_of_revolution needs a dense profile and h0 > 0");
    std::vector<double> s(m, 0.0);
    for (std::size_t j = 1; j < m; ++j) s[j] = s[j - 1] + (profile[j] - profile[j - 1]).norm();
    // Principal curvatures from the polyline: turning rate and parallel curvature.
    std::vector<double> h(m);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t a = j == 0 ? 0 : j - 1, b = j + 1 == m ? m - 1 : j + 1;
        if (a == j) ++b;
        if (b == j) --a;
        Vec2 t0 = (profile[a + 1] - profile[a]).normalized(), t1 = (profile[b] - profile[b - 1]).normalized();
        double ds = 0.5 * (s[b] - s[a]);
        double k1 = ds > 0 ? std::abs(std::atan2(t0.x() * t1.y() - t0.y() * t1.x(), t0.dot(t1))) / std::max(ds, 1e-300) : 0.0;
        Vec2 t = (profile[b] - profile[a]).normalized();
        double r = profile[j].x();
        double k2 = r > 1e-9 ? std::abs(t.y()) / r : k1;
        h[j] = h0 * std::min(1.0, 4.0 / std::max({k1, k2, 1e-12}));
    }
    // τ(s) = ∫ ds / h, nodes at equal τ.
    std::vector<double> tau(m, 0.0);
    for (std::size_t j = 1; j < m; ++j) tau[j] = tau[j - 1] + (s[j] - s[j - 1]) * 0.5 * (1 / h[j] + 1 / h[j - 1]);
    const int n_seg = std::max(4, static_cast<int>(std::ceil(tau.back())));
    std::vector<Vec2> nodes;
    std::vector<double> node_h;
    std::size_t j = 0;
    for (int i = 1; i < n_seg; ++i) {
        double target = tau.back() * i / n_seg;
        while (tau[j + 1] < target) ++j;
        double f = (target - tau[j]) / (tau[j + 1] - tau[j]);
        nodes.push_back((1 - f) * profile[j] + f * profile[j + 1]);
        node_h.push_back((1 - f) * h[j] + f * h[j + 1]);
    }

    Immersion im;
    im.vertices.emplace_back(0.0, 0.0, profile.front().y());
    std::vector<std::vector<int>> rings;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        double r = nodes[i].x();
        int n = std::max(6, static_cast<int>(std::lround(2 * M_PI * r / node_h[i])));
        double offset = 0.5 * static_cast<double>(i % 2);
        std::vector<int> ring;
        for (int k = 0; k < n; ++k) {
            double phi = 2 * M_PI * (k + offset) / n;
            ring.push_back(static_cast<int>(im.vertices.size()));
            im.vertices.emplace_back(r * std::cos(phi), r * std::sin(phi), nodes[i].y());
        }
        rings.push_back(std::move(ring));
    }
    const int south = static_cast<int>(im.vertices.size());
    im.vertices.emplace_back(0.0, 0.0, profile.back().y());

    auto angle = [&](int v) {
        double a = std::atan2(im.vertices[static_cast<std::size_t>(v)].y(), im.vertices[static_cast<std::size_t>(v)].x());
        return a < 0 ? a + 2 * M_PI : a;
    };
    for (std::size_t k = 0; k < rings.front().size(); ++k)
        im.triangles.push_back({0, rings.front()[k], rings.front()[(k + 1) % rings.front().size()]});
    for (std::size_t i = 0; i + 1 < rings.size(); ++i) {
        const auto& A = rings[i];
        const auto& B = rings[i + 1];
        const int na = static_cast<int>(A.size()), nb = static_cast<int>(B.size());
        // Unwrapped angles with both sweeps starting below 2π/6.
        auto ang_a = [&](int k) { return angle(A[static_cast<std::size_t>(k % na)]) + 2 * M_PI * (k / na); };
        auto ang_b = [&](int k) { return angle(B[static_cast<std::size_t>(k % nb)]) + 2 * M_PI * (k / nb); };
        int ia = 0, ib = 0;
        while (ia < na || ib < nb) {
            bool advance_a = ib == nb || (ia < na && ang_a(ia + 1) <= ang_b(ib + 1));
            if (advance_a) {
                im.triangles.push_back({A[static_cast<std::size_t>(ia % na)], B[static_cast<std::size_t>(ib % nb)],
                                        A[static_cast<std::size_t>((ia + 1) % na)]});
                ++ia;
            } else {
                im.triangles.push_back({A[static_cast<std::size_t>(ia % na)], B[static_cast<std::size_t>(ib % nb)],
                                        B[static_cast<std::size_t>((ib + 1) % nb)]});
                ++ib;
            }
        }
    }
    const auto& last = rings.back();
    for (std::size_t k = 0; k < last.size(); ++k) im.triangles.push_back({south, last[(k + 1) % last.size()], last[k]});

    double volume = 0;
    for (const auto& t : im.triangles)
        volume += im.vertices[static_cast<std::size_t>(t[0])].dot(
            im.vertices[static_cast<std::size_t>(t[1])].cross(im.vertices[static_cast<std::size_t>(t[2])]));
    if (volume < 0)
        for (auto& t : im.triangles) std::swap(t[1], t[2]);
    return im;
}

/// Cassini-oval dumbbell: (r² + z² + 1)² − 4z² = (1 + δ²)², δ = neck_width/2.
/// Two lobes of radius about 1 centred near z = ±1, joined by a waist of
/// radius δ whose meridian is close to the hyperbola r² − z² = δ², so |A| is
/// of order 1/δ there. Meshed as a surface of revolution with spacing
/// 1.2/2^level away from the neck.
inline Immersion dumbbell(double neck_width, int level)
{
    if (!(neck_width > 0 && neck_width < 1)) throw Error(ErrorCode::BadParams, "dumbbell neck_width must be in (0, 1)");
    if (level < 0 || level > 8) throw Error(ErrorCode::BadParams, "dumbbell level must be in [0, 8]");
    const double delta = neck_width / 2, b4 = std::pow(1 + delta * delta, 2);
    // Polar form about the origin, θ from the +z axis.
    const int m = 40000;
    std::vector<Vec2> profile;
    profile.reserve(m + 1);
    for (int j = 0; j <= m; ++j) {
        double th = M_PI * j / m;
        double c2 = std::cos(2 * th);
        double rho2 = c2 + std::sqrt(c2 * c2 + b4 - 1);
        double rho = std::sqrt(rho2);
        profile.emplace_back(j == 0 || j == m ? 0.0 : rho * std::sin(th), rho * std::cos(th));
    }
    return surface_of_revolution(profile, 1.2 / std::pow(2.0, level));
}

/// Geodesic sphere of radius r about the chart origin: icosphere directions
/// pushed through the ambient exponential map.
inline Immersion geodesic_sphere(const AmbientSpace& amb, double r, int level)
{
    if (!(r > 0)) throw Error(ErrorCode::BadParams, "geodesic_sphere radius must be positive");
    if (r >= amb.inj_radius()) throw Error(ErrorCode::RadiusExceedsInjectivity, "geodesic_sphere radius exceeds injectivity radius");
    Immersion im = icosphere(level);
    const Vec3 origin = Vec3::Zero();
    for (auto& p : im.vertices) p = amb.exp_map(origin, p, r);
    return im;
}

inline Immersion translated(Immersion im, const Vec3& d)
{
    for (auto& p : im.vertices) p += d;
    return im;
}

inline Immersion transformed(Immersion im, const Mat3& rot, const Vec3& shift = Vec3::Zero())
{
    for (auto& p : im.vertices) p = rot * p + shift;
    return im;
}

inline Immersion reversed(Immersion im)
{
    for (auto& t : im.triangles) std::swap(t[1], t[2]);
    return im;
}

} // namespace willmore
