#pragma once

// Hand-rolled generators for the property tests. Every generator takes the
// engine explicitly so a failing case can be replayed from its seed.

#include "willmore/flow.hpp"
#include "willmore/generate.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <unistd.h>

namespace willmore::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Vec3 unit_vector(Rng& rng)
{
    std::normal_distribution<double> n;
    Vec3 v(n(rng), n(rng), n(rng));
    return v.norm() > 1e-8 ? v.normalized() : Vec3::UnitX();
}

/// Uniform point in the ball of the given chart radius.
inline Vec3 point_in_ball(Rng& rng, double radius) { return radius * std::cbrt(uniform(rng, 0, 1)) * unit_vector(rng); }

/// A point well inside the chart of each model ambient.
inline Vec3 chart_point(Rng& rng, const AmbientSpace& amb)
{
    switch (amb.kind()) {
    case AmbientKind::Hyperbolic: return point_in_ball(rng, 0.8 / std::sqrt(-amb.curvature()));
    case AmbientKind::Spherical: return point_in_ball(rng, 2.0 / std::sqrt(amb.curvature()));
    default: return point_in_ball(rng, 3.0);
    }
}

inline Mat3 rotation(Rng& rng) { return Eigen::AngleAxisd(uniform(rng, 0, 2 * M_PI), unit_vector(rng)).toRotationMatrix(); }

/// The three model ambients at a random curvature magnitude.
inline std::vector<AmbientSpace> model_ambients(Rng& rng)
{
    return {AmbientSpace::euclidean(), AmbientSpace::hyperbolic(-uniform(rng, 0.25, 4)),
            AmbientSpace::spherical(uniform(rng, 0.25, 4))};
}

/// Hyperbolic ball written as a user conformal field, phi = log(2 / (1 - |x|^2)).
inline AmbientSpace poincare_as_conformal()
{
    ConformalField f;
    f.phi = [](const Vec3& x) { return std::log(2.0 / (1.0 - x.squaredNorm())); };
    f.gradient = [](const Vec3& x) -> Vec3 { return 2.0 * x / (1.0 - x.squaredNorm()); };
    f.hessian = [](const Vec3& x) -> Mat3 {
        double s = 1.0 - x.squaredNorm();
        return 2.0 / s * Mat3::Identity() + 4.0 / (s * s) * x * x.transpose();
    };
    f.domain = [](const Vec3& x) { return x.squaredNorm() < 1.0; };
    AmbientBounds b;
    b.inj_radius = std::numeric_limits<double>::infinity();
    b.sect_sup = -1;
    b.ricci_sup = -2;
    b.ricci_deriv = {2, 0, 0, 0, 0, 0};
    return AmbientSpace::conformal(f, b);
}

/// Smooth random radial perturbation of the unit sphere, r = 1 + eps * sum of low modes.
inline Immersion bumpy_sphere(Rng& rng, int level, double eps)
{
    Immersion im = icosphere(level);
    Vec3 a = unit_vector(rng), b = unit_vector(rng);
    double c1 = uniform(rng, -1, 1), c2 = uniform(rng, -1, 1);
    for (Vec3& p : im.vertices) {
        double r = 1 + eps * (c1 * p.dot(a) * p.dot(b) + c2 * std::pow(p.dot(a), 3));
        p *= r;
    }
    return im;
}

inline double mean_edge(const Surface& s)
{
    double m = 0;
    for (double e : s.metric().edge_length) m += e;
    return m / static_cast<double>(s.metric().edge_length.size());
}

/// Fresh empty directory under the system temp dir, unique per process.
inline std::filesystem::path fresh_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("willmore_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

#define EXPECT_THROW_CODE(stmt, expected)                                                                                   \
    do {                                                                                                                     \
        try {                                                                                                                \
            stmt;                                                                                                            \
            ADD_FAILURE() << "expected " << to_string(expected) << " from " #stmt;                                          \
        } catch (const ::willmore::Error& e) {                                                                               \
            EXPECT_EQ(e.code(), expected) << e.what();                                                                       \
        }                                                                                                                    \
    } while (0)

} // namespace willmore::testing
