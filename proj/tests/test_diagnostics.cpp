#include "willmore/diagnostics.hpp"

#include "support.hpp"

using namespace willmore;
using namespace willmore::testing;

namespace {

/// Nonnegative test functions: a cutoff, a product of random linear fields
/// clipped at zero, and noise on a random subset of vertices.
std::vector<Eigen::VectorXd> nonnegative_fields(Rng& rng, const Surface& s, int count)
{
    std::vector<Eigen::VectorXd> out;
    const auto n = static_cast<Eigen::Index>(s.vertex_count());
    for (int k = 0; k < count; ++k) {
        Eigen::VectorXd u(n);
        switch (k % 3) {
        case 0: {
            CutoffFunction cut(s.ambient(), s.vertex(static_cast<int>(rng() % s.vertex_count())), uniform(rng, 0.2, 1.5));
            u = cut.values(s);
            break;
        }
        case 1: {
            Vec3 a = unit_vector(rng);
            double c = uniform(rng, -0.5, 0.5);
            for (Eigen::Index v = 0; v < n; ++v) u[v] = std::max(0.0, s.vertex(static_cast<int>(v)).dot(a) - c);
            break;
        }
        default:
            for (Eigen::Index v = 0; v < n; ++v) u[v] = uniform(rng, 0, 1) < 0.3 ? uniform(rng, 0, 2) : 0.0;
        }
        if (u.maxCoeff() <= 0) u[0] = 1;
        out.push_back(u);
    }
    return out;
}

} // namespace

TEST(Cutoff, Profile)
{
    double max_d = 0, max_d2 = 0, prev = 1;
    for (int i = 0; i <= 20000; ++i) {
        double s = 1.2 * i / 20000.0;
        double p = CutoffFunction::profile(s);
        EXPECT_LE(p, prev + 1e-15);
        prev = p;
        max_d = std::max(max_d, std::abs(CutoffFunction::dprofile(s)));
        max_d2 = std::max(max_d2, std::abs(CutoffFunction::d2profile(s)));
        if (s > 0.51 && s < 0.99) {
            const double h = 1e-6;
            EXPECT_NEAR(CutoffFunction::dprofile(s), (CutoffFunction::profile(s + h) - CutoffFunction::profile(s - h)) / (2 * h), 1e-6);
            EXPECT_NEAR(CutoffFunction::d2profile(s), (CutoffFunction::dprofile(s + h) - CutoffFunction::dprofile(s - h)) / (2 * h), 1e-4);
        }
    }
    EXPECT_EQ(CutoffFunction::profile(0.5), 1.0);
    EXPECT_EQ(CutoffFunction::profile(1.0), 0.0);
    EXPECT_NEAR(max_d, CutoffFunction::max_dphi, 1e-6);
    EXPECT_NEAR(max_d2, CutoffFunction::max_d2phi, 1e-3);
    // C² at the junctions.
    EXPECT_NEAR(CutoffFunction::d2profile(0.5 + 1e-9), 0.0, 1e-5);
    EXPECT_NEAR(CutoffFunction::d2profile(1.0 - 1e-9), 0.0, 1e-5);
}

TEST(Cutoff, GradientBoundOnRandomSurfaces)
{
    Rng rng(41);
    for (int n = 0; n < 6; ++n) {
        for (const AmbientSpace& amb : model_ambients(rng)) {
            Immersion im = bumpy_sphere(rng, 3, 0.3);
            double scale = amb.kind() == AmbientKind::Hyperbolic ? 0.6 / std::sqrt(-amb.curvature()) : 1.0;
            for (Vec3& p : im.vertices) p *= scale;
            Surface s(std::move(im), amb);
            RingCache rings(s.topology());
            ShapeState st = compute_shape(s, rings);
            double rho = uniform(rng, 0.3, 0.9) * std::min(1.0, amb.inj_radius() / 2);
            CutoffFunction cut(amb, s.vertex(static_cast<int>(rng() % s.vertex_count())), rho);
            CutoffBoundsReport r = cutoff_bounds(s, rings, st.vertices, cut);
            double h = mean_edge(s);
            EXPECT_LE(r.max_grad, r.c_gamma * (1 + 2 * h / rho)) << to_string(amb.kind()) << " rho " << rho;
            EXPECT_GE(r.c_gamma, CutoffFunction::max_dphi / rho);
        }
    }
}

TEST(Cutoff, Errors)
{
    AmbientSpace e = AmbientSpace::euclidean();
    EXPECT_THROW_CODE(CutoffFunction(e, Vec3::Zero(), 0), ErrorCode::BadParams);
    EXPECT_THROW_CODE(CutoffFunction(AmbientSpace::spherical(1), Vec3::Zero(), 4), ErrorCode::RadiusExceedsInjectivity);
    EXPECT_THROW_CODE(CutoffFunction(AmbientSpace::hyperbolic(-1), Vec3(2, 0, 0), 0.5), ErrorCode::OutOfChart);
}

TEST(Concentration, BallTableLimits)
{
    Rng rng(42);
    Surface s(bumpy_sphere(rng, 3, 0.3), AmbientSpace::euclidean());
    ShapeState st = compute_shape(s);
    double total = st.A_norm2().dot(s.dual_area());
    std::vector<double> radii{0.05, 0.1, 0.3, 0.6, 1.2, 10};
    BallTable tab = ball_table(s, st.vertices, vertex_centers(s), radii);
    for (Eigen::Index c = 0; c < tab.curvature.rows(); ++c) {
        for (Eigen::Index r = 1; r < tab.curvature.cols(); ++r) {
            EXPECT_GE(tab.curvature(c, r), tab.curvature(c, r - 1));
            EXPECT_GE(tab.area(c, r), tab.area(c, r - 1));
            EXPECT_LE(tab.smooth(c, r), tab.curvature(c, r) + 1e-12);
        }
        EXPECT_NEAR(tab.curvature(c, 5), total, 1e-9 * total);
        EXPECT_NEAR(tab.area(c, 5), s.metric().total_area, 1e-9);
    }
    EXPECT_THROW_CODE(ball_table(s, st.vertices, vertex_centers(s), {0.0}), ErrorCode::BadParams);
}

TEST(Concentration, SphereOracle)
{
    // ∫|A|² = 8π on the round sphere; a ball of radius √2 about a point of
    // the unit sphere captures the hemisphere cap of area 2π.
    Surface s(icosphere(4), AmbientSpace::euclidean());
    ShapeState st = compute_shape(s);
    ConcentrationReport all = concentration(s, st.vertices, 3.0);
    EXPECT_NEAR(all.eta, 8 * M_PI, 0.01 * 8 * M_PI);
    ConcentrationReport cap = concentration(s, st.vertices, std::sqrt(2.0));
    EXPECT_NEAR(cap.area_conc_max, 2 * M_PI, 0.05 * 2 * M_PI);
    EXPECT_NEAR(cap.eta, 4 * M_PI, 0.05 * 4 * M_PI);
    EXPECT_TRUE(cap.sobolev_ok);
}

TEST(Concentration, CoveringHoldsOnRandomSurfaces)
{
    Rng rng(43);
    for (int n = 0; n < 8; ++n) {
        Surface s(bumpy_sphere(rng, 3, uniform(rng, 0, 0.5)), AmbientSpace::euclidean());
        ShapeState st = compute_shape(s);
        for (double rho : {0.2, 0.5, 1.0}) {
            CoveringReport r = covering_check(s, st.vertices, rho);
            EXPECT_TRUE(r.ok) << "rho " << rho << " slack " << r.slack;
            EXPECT_GE(r.slack, 1.0);
            EXPECT_LE(r.half_sup, r.eta);
        }
    }
}

TEST(Concentration, CoveringDetectsViolation)
{
    BallTable tab;
    tab.radii = {1.0, 0.5};
    tab.curvature = Eigen::MatrixXd(1, 2);
    tab.curvature << 10.0, 1.0;
    EXPECT_FALSE(covering_from_table(tab, 0, 1, 8).ok);
    EXPECT_TRUE(covering_from_table(tab, 0, 1, 10).ok);
}

TEST(Concentration, RhoOfT)
{
    Rng rng(44);
    Surface s(bumpy_sphere(rng, 3, 0.3), AmbientSpace::euclidean());
    ShapeState st = compute_shape(s);
    std::vector<double> grid{0.05, 0.1, 0.2, 0.4, 0.8};
    double prev = 0;
    for (double eps : {0.0, 0.05, 0.2, 1.0, 5.0, 100.0}) {
        double r = rho_of_t(s, st.vertices, eps, grid);
        EXPECT_GE(r, prev);
        prev = r;
    }
    EXPECT_EQ(rho_of_t(s, st.vertices, 0.0, grid), 0.0);
    EXPECT_EQ(prev, 0.8);
    EXPECT_THROW_CODE(rho_of_t(s, st.vertices, 1.0, {}), ErrorCode::BadParams);
    EXPECT_THROW_CODE(rho_of_t(s, st.vertices, -1.0, grid), ErrorCode::BadParams);
}

TEST(HoffmanSpruck, Conditions)
{
    EXPECT_TRUE(hoffman_spruck_conditions(AmbientSpace::euclidean(), 1e6));
    EXPECT_TRUE(hoffman_spruck_conditions(AmbientSpace::hyperbolic(-1), 1e6));
    AmbientSpace s3 = AmbientSpace::spherical(1);
    EXPECT_TRUE(hoffman_spruck_conditions(s3, 0.5));
    EXPECT_FALSE(hoffman_spruck_conditions(s3, 1.0)); // 9 K |Σ| / 4π > 1
    EXPECT_FALSE(hoffman_spruck_conditions(s3, 2.0));
    // A declared injectivity radius below the required one fails.
    ConformalField f;
    f.phi = [](const Vec3&) { return 0.0; };
    f.gradient = [](const Vec3&) -> Vec3 { return Vec3::Zero(); };
    f.hessian = [](const Vec3&) -> Mat3 { return Mat3::Zero(); };
    AmbientBounds b;
    b.inj_radius = 0.1;
    AmbientSpace c = AmbientSpace::conformal(f, b);
    EXPECT_TRUE(hoffman_spruck_conditions(c, 0.01));
    EXPECT_FALSE(hoffman_spruck_conditions(c, 1.0));
}

TEST(HoffmanSpruck, ConstantFunctionOnSphere)
{
    // u ≡ 1: ‖u‖₂ = √(4π), ∫|H| = 8π.
    Surface s(icosphere(4), AmbientSpace::euclidean());
    ShapeState st = compute_shape(s);
    HoffmanSpruckReport r = hoffman_spruck_check(s, st.vertices, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.vertex_count())));
    EXPECT_NEAR(r.lhs, std::sqrt(4 * M_PI), 1e-2);
    EXPECT_NEAR(r.integral, 8 * M_PI, 0.01 * 8 * M_PI);
    EXPECT_NEAR(r.rhs, hoffman_spruck_constant * r.integral, 1e-12);
    EXPECT_TRUE(r.ok);
    EXPECT_NEAR(r.support_area, s.metric().total_area, 1e-12);
}

TEST(HoffmanSpruck, HoldsForRandomNonnegativeFunctions)
{
    Rng rng(45);
    for (int n = 0; n < 4; ++n) {
        for (const AmbientSpace& amb : model_ambients(rng)) {
            Immersion im = bumpy_sphere(rng, 3, 0.3);
            double scale = amb.kind() == AmbientKind::Euclidean ? 1.0 : 0.5 / std::sqrt(std::abs(amb.curvature()));
            for (Vec3& p : im.vertices) p *= scale;
            Surface s(std::move(im), amb);
            ShapeState st = compute_shape(s);
            for (const Eigen::VectorXd& u : nonnegative_fields(rng, s, 10)) {
                HoffmanSpruckReport r = hoffman_spruck_check(s, st.vertices, u);
                if (r.conditions_ok) {
                    EXPECT_TRUE(r.ok) << r.lhs << " vs " << r.rhs;
                }
                EXPECT_GT(r.integral, 0);
                // Scaling u scales both sides.
                HoffmanSpruckReport r3 = hoffman_spruck_check(s, st.vertices, 3 * u);
                EXPECT_NEAR(r3.lhs, 3 * r.lhs, 1e-9 * (1 + r.lhs));
                EXPECT_NEAR(r3.rhs, 3 * r.rhs, 1e-9 * (1 + r.rhs));
            }
        }
    }
}

TEST(HoffmanSpruck, Errors)
{
    Surface s(icosphere(2), AmbientSpace::euclidean());
    ShapeState st = compute_shape(s);
    Eigen::VectorXd u = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.vertex_count()));
    u[3] = -1e-3;
    EXPECT_THROW_CODE(hoffman_spruck_check(s, st.vertices, u), ErrorCode::NonNegativityViolated);
    EXPECT_THROW_CODE(hoffman_spruck_check(s, st.vertices, Eigen::VectorXd::Ones(4)), ErrorCode::BadParams);
    u[3] = NAN;
    EXPECT_THROW_CODE(hoffman_spruck_check(s, st.vertices, u), ErrorCode::NonFiniteInput);
}

TEST(MultiplicativeSobolev, Report)
{
    Rng rng(46);
    Surface s(bumpy_sphere(rng, 3, 0.3), AmbientSpace::euclidean());
    RingCache rings(s.topology());
    ShapeState st = compute_shape(s, rings);
    auto d = curvature_derivatives(s, rings, st.vertices);
    CutoffFunction cut(s.ambient(), s.vertex(0), 0.8);
    MultiplicativeSobolevReport r = multiplicative_sobolev_check(s, st.vertices, d, cut);
    EXPECT_GT(r.lhs, 0);
    EXPECT_GT(r.c_min, 0);
    EXPECT_TRUE(std::isfinite(r.c_min));
    EXPECT_EQ(r.holds, r.c_min <= 1.0);
    EXPECT_TRUE(multiplicative_sobolev_check(s, st.vertices, d, cut, 4.0, r.c_min * 1.0001).holds);
    EXPECT_FALSE(multiplicative_sobolev_check(s, st.vertices, d, cut, 4.0, r.c_min * 0.9999).holds);
    EXPECT_THROW_CODE(multiplicative_sobolev_check(s, st.vertices, d, cut, 3.0), ErrorCode::BadParams);
}

TEST(Evolution, ResidualsSmallOnSmoothFlow)
{
    Rng rng(47);
    FlowState start = make_flow_state(bumpy_sphere(rng, 3, 0.2), AmbientSpace::euclidean());
    double dt = propose_dt(start, StepControl{});
    FlowState mid = euler_update(start, dt);
    FlowState next = euler_update(mid, dt);
    EvolutionResiduals r = evolution_fd_check(start, mid, next);
    EXPECT_LT(r.dmu_rel, 0.05);
    EXPECT_LT(r.g_rel, 0.25); // dominated by the level-3 discretisation gap of -2W A
    EXPECT_EQ(r.dmu.size(), static_cast<Eigen::Index>(start.surface.face_count()));
}

TEST(Evolution, DtStudyIsFirstOrder)
{
    Rng rng(48);
    FlowState start = make_flow_state(bumpy_sphere(rng, 3, 0.2), AmbientSpace::euclidean());
    DtRefinementReport rep = evolution_dt_study(start, propose_dt(start, StepControl{}), 4);
    EXPECT_NEAR(rep.dmu_order, 1.0, 0.05);
    EXPECT_NEAR(rep.g_order, 1.0, 0.05);
    EXPECT_EQ(rep.windows.size(), 4u);
    EXPECT_THROW_CODE(evolution_dt_study(start, 1e-6, 2), ErrorCode::BadParams);
}

TEST(Evolution, Errors)
{
    AmbientSpace e = AmbientSpace::euclidean();
    FlowState a = make_flow_state(icosphere(2), e);
    FlowState b = euler_update(a, 1e-6);
    FlowState c = euler_update(b, 2e-6);
    EXPECT_THROW_CODE(evolution_fd_check(a, b, c), ErrorCode::BadParams);
    FlowState other = make_flow_state(icosphere(3), e);
    EXPECT_THROW_CODE(evolution_fd_check(a, b, other), ErrorCode::ConnectivityChanged);
}

TEST(Lifespan, ExactPowerLaw)
{
    std::vector<std::pair<double, double>> data;
    for (double rho : {0.05, 0.1, 0.2, 0.4}) data.emplace_back(rho, std::pow(rho, 4) / 0.01);
    LifespanFit fit = lifespan_fit(data);
    EXPECT_NEAR(fit.slope, 4, 1e-12);
    EXPECT_NEAR(fit.r2, 1, 1e-12);
    EXPECT_NEAR(fit.c_hat, 0.01, 1e-14);
    EXPECT_NEAR(fit.intercept, std::log(100.0), 1e-12);
    for (bool ok : fit.bound_ok) EXPECT_TRUE(ok);
    for (bool ok : fit.leave_one_out_ok) EXPECT_TRUE(ok);
}

TEST(Lifespan, NoisyFitAndLeaveOneOut)
{
    Rng rng(49);
    for (int n = 0; n < 20; ++n) {
        std::vector<std::pair<double, double>> data;
        for (int k = 0; k < 6; ++k) {
            double rho = std::exp(uniform(rng, -4, -1));
            data.emplace_back(rho, std::pow(rho, 4) * std::exp(uniform(rng, -1, 1)));
        }
        LifespanFit fit = lifespan_fit(data);
        EXPECT_GE(fit.r2, 0);
        EXPECT_LE(fit.r2, 1 + 1e-12);
        // ĉ is the smallest constant with T ≥ ρ⁴/ĉ throughout.
        for (std::size_t i = 0; i < data.size(); ++i) EXPECT_TRUE(fit.bound_ok[i]);
        int binding = 0;
        for (const auto& [rho, T] : data) binding += std::abs(std::pow(rho, 4) / T - fit.c_hat) < 1e-12 * fit.c_hat;
        EXPECT_GE(binding, 1);
        EXPECT_LE(std::count(fit.leave_one_out_ok.begin(), fit.leave_one_out_ok.end(), false), 1);
    }
}

TEST(Lifespan, Errors)
{
    std::vector<std::pair<double, double>> three{{0.1, 1}, {0.2, 2}, {0.3, 3}};
    EXPECT_THROW_CODE(lifespan_fit(three), ErrorCode::InsufficientData);
    std::vector<std::pair<double, double>> zero{{0.1, 1}, {0.2, 2}, {0.3, 0}, {0.4, 4}};
    EXPECT_THROW_CODE(lifespan_fit(zero), ErrorCode::InsufficientData);
    std::vector<std::pair<double, double>> same{{0.1, 1}, {0.1, 2}, {0.1, 3}, {0.1, 4}};
    EXPECT_THROW_CODE(lifespan_fit(same), ErrorCode::InsufficientData);
}

TEST(Snapshot, DiagnosticsOnSphere)
{
    FlowState st = make_flow_state(icosphere(3), AmbientSpace::euclidean());
    DiagnosticsSettings cfg;
    cfg.rho = 0.5;
    cfg.eps0 = 1.0;
    cfg.radius_grid = {0.1, 0.2, 0.3, 0.4, 0.5};
    DiagnosticsRow row = snapshot_diagnostics(st, cfg);
    EXPECT_EQ(row.energy, st.energy());
    EXPECT_TRUE(row.covering_ok);
    EXPECT_TRUE(row.hs_ok);
    EXPECT_TRUE(row.sobolev_conditions);
    EXPECT_NEAR(row.max_abs_A, std::sqrt(2.0), 1e-2);
    // The cap inside a chordal ball of radius ρ has area πρ², and |A|² = 2.
    EXPECT_NEAR(row.eta, 2 * M_PI * 0.25, 0.15 * 2 * M_PI * 0.25);
    EXPECT_LE(row.rho_of_t, 0.4);
    EXPECT_GE(row.rho_of_t, 0.3);
}
