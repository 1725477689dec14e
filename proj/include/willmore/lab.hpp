#pragma once

// Orchestration shared by the willmore-lab tool and the acceptance checks:
// a run written to an output directory, the verification suites, and the
// lifespan campaign.

#include "willmore/diagnostics.hpp"
#include "willmore/flow.hpp"
#include "willmore/generate.hpp"
#include "willmore/io.hpp"
#include "willmore/shape.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <random>
#include <string>
#include <vector>

namespace willmore {

struct RunOutcome {
    RunSummary summary;
    long snapshots = 0;
};

/// Integrates the configured flow, writing config.echo, one snapshot every
/// `snapshot_every` accepted steps (plus the initial state) and one
/// diagnostics.csv row per snapshot. With deterministic = false the snapshot
/// files are written on a worker thread while the next steps run; the row is
/// appended only after that snapshot's files are complete either way.
inline RunOutcome run_to_directory(const RunConfig& cfg, std::function<void(const FlowState&)> on_step = {})
{
    namespace fs = std::filesystem;
    const AmbientSpace amb = cfg.ambient.make();
    FlowState state = make_flow_state(generate_mesh(cfg.mesh, amb), amb, cfg.control.fit);
    const fs::path dir = cfg.outdir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& e : fs::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name == "diagnostics.csv" || name.rfind("snap_", 0) == 0) fs::remove(e.path());
    }
    {
        std::ofstream echo(dir / "config.echo");
        if (!echo) throw Error(ErrorCode::IoError, "cannot write config.echo in " + dir.string());
        echo << echo_config(cfg);
    }
    DiagnosticsLog log(dir / "diagnostics.csv");
    const DiagnosticsSettings settings = cfg.diagnostics.settings();

    RunOutcome out;
    std::future<void> pending;
    auto snapshot = [&](const FlowState& st) {
        if (pending.valid()) pending.get();
        long k = out.snapshots++;
        auto job = [&log, &dir, &settings, k](FlowState copy) {
            DiagnosticsRow row = snapshot_diagnostics(copy, settings);
            write_snapshot(dir, k, copy);
            log.append(row);
        };
        if (cfg.deterministic) job(st);
        else pending = std::async(std::launch::async, job, st);
    };
    RunOptions opt;
    opt.horizon = cfg.horizon;
    opt.max_steps = cfg.max_steps;
    opt.snapshot_every = cfg.snapshot_every;
    opt.on_snapshot = snapshot;
    opt.on_step = std::move(on_step);
    try {
        out.summary = run(state, cfg.control, opt);
    } catch (...) {
        if (pending.valid()) pending.wait();
        throw;
    }
    if (pending.valid()) pending.get();
    // The final state is always on disk.
    if (cfg.snapshot_every == 0 || out.summary.steps % cfg.snapshot_every != 0) snapshot(state);
    if (pending.valid()) pending.get();
    return out;
}

// --- verification suites ----------------------------------------------------

struct CheckRow {
    std::string name;
    double value = 0;
    double bound = 0;
    std::string relation; // "<=", ">=", or "info"
    bool pass = true;
};

inline CheckRow check_le(std::string name, double value, double bound)
{
    return {std::move(name), value, bound, "<=", value <= bound};
}

inline CheckRow check_ge(std::string name, double value, double bound)
{
    return {std::move(name), value, bound, ">=", value >= bound};
}

inline CheckRow info(std::string name, double value) { return {std::move(name), value, 0.0, "info", true}; }

/// Least-squares slope of log r against log(1/h) with h halving per entry.
inline double refinement_order(const std::vector<double>& r)
{
    const std::size_t n = r.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += static_cast<double>(i) * std::log(2.0) / static_cast<double>(n);
        my += std::log(r[i]) / static_cast<double>(n);
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double x = static_cast<double>(i) * std::log(2.0) - mx;
        sxy += x * (std::log(r[i]) - my);
        sxx += x * x;
    }
    return -sxy / sxx;
}

/// The configured mesh at three resolutions, finest last.
inline std::vector<Immersion> refinement_sequence(const MeshConfig& m, const AmbientSpace& amb)
{
    if (m.source == "file") throw Error(ErrorCode::BadParams, "mesh.source = file has no refinement sequence");
    std::vector<Immersion> out;
    for (int k = 2; k >= 0; --k) {
        MeshConfig c = m;
        if (m.generator == "torus") {
            c.nu = std::max(3, m.nu >> k);
            c.nv = std::max(3, m.nv >> k);
        } else {
            c.level = m.level - k;
            if (c.level < 0) throw Error(ErrorCode::BadParams, "mesh.level must be at least 2 for a refinement sequence");
        }
        out.push_back(generate_mesh(c, amb));
    }
    return out;
}

/// Gauss, Codazzi and Simons residuals on three resolutions of the configured
/// mesh: monotone decrease and order ≥ 0.5.
inline std::vector<CheckRow> verify_identities(const RunConfig& cfg)
{
    const AmbientSpace amb = cfg.ambient.make();
    std::vector<double> g, c, s, amb_term;
    for (Immersion& im : refinement_sequence(cfg.mesh, amb)) {
        Surface surf(std::move(im), amb);
        RingCache rings(surf.topology());
        ShapeState st = compute_shape(surf, rings, cfg.control.fit);
        auto d = curvature_derivatives(surf, rings, st.vertices);
        IdentityResiduals r = identity_residuals(surf, st.vertices, d);
        g.push_back(l2_norm(surf, r.gauss));
        c.push_back(l2_norm(surf, r.codazzi));
        s.push_back(l2_norm(surf, r.simons));
        amb_term.push_back(l2_norm(surf, r.simons_ambient));
    }
    std::vector<CheckRow> rows;
    auto add = [&](const std::string& name, const std::vector<double>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) rows.push_back(info("identities." + name + ".l2[" + std::to_string(i) + "]", r[i]));
        double worst = std::max(r[1] / r[0], r[2] / r[1]);
        rows.push_back(check_le("identities." + name + ".max_ratio", worst, 1.0));
        rows.push_back(check_ge("identities." + name + ".order", refinement_order(r), 0.5));
    };
    add("gauss", g);
    add("codazzi", c);
    add("simons", s);
    rows.push_back(info("identities.simons_ambient_term.l2", amb_term.back()));
    return rows;
}

/// Per-step gradient-flow ratios along accepted steps:
/// |Δ𝒲/dt + a ∫W²| / (a ∫W²) with a = 1 (literal) and a = ½ (exact for 𝒲 = ¼∫H²).
struct GradientFlowRatios {
    std::vector<double> literal, half;
    double median_literal = 0, median_half = 0;
};

inline double median(std::vector<double> v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    double hi = v[v.size() / 2];
    if (v.size() % 2) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2)));
}

inline double integral_W2(const FlowState& st) { return st.shape.W.cwiseAbs2().dot(st.surface.dual_area()); }

inline GradientFlowRatios gradient_flow_ratios(FlowState state, const StepControl& ctl, long steps)
{
    GradientFlowRatios out;
    for (long k = 0; k < steps; ++k) {
        double w2 = integral_W2(state);
        FlowState next = step(state, ctl);
        double rate = (next.energy() - state.energy()) / next.dt_last;
        out.literal.push_back(std::abs(rate + w2) / w2);
        out.half.push_back(std::abs(rate + 0.5 * w2) / (0.5 * w2));
        state = std::move(next);
    }
    out.median_literal = median(out.literal);
    out.median_half = median(out.half);
    return out;
}

/// Finite-difference checks of the evolution equations from the configured
/// initial state: a dt-refinement study at fixed mesh and the ∂_t𝒲 identity.
inline std::vector<CheckRow> verify_evolution(const RunConfig& cfg)
{
    const AmbientSpace amb = cfg.ambient.make();
    FlowState st = make_flow_state(generate_mesh(cfg.mesh, amb), amb, cfg.control.fit);
    double dt = propose_dt(st, cfg.control);
    DtRefinementReport rep = evolution_dt_study(st, dt, 3, cfg.control.fit);
    const EvolutionResiduals& w = rep.windows.front();
    std::vector<CheckRow> rows;
    // Relative residuals compare noise with noise on (near) critical points.
    double a = st.shape.max_abs_A();
    double index = std::sqrt(integral_W2(st) / st.surface.metric().total_area) / std::max(a * a * a, 1e-300);
    const bool moving = index > 1e-2;
    auto gated = [&](CheckRow r) { return moving ? r : info(r.name, r.value); };
    rows.push_back(info("evolution.stationarity_index", index));
    rows.push_back(gated(check_le("evolution.dmu.relative_l2", w.dmu_rel, 0.05)));
    rows.push_back(info("evolution.metric.relative_l2", w.g_rel));
    rows.push_back(info("evolution.normal.relative_l2", w.nu_rel));
    rows.push_back(info("evolution.mean_curvature.relative_l2", w.H_rel));
    rows.push_back(check_ge("evolution.dmu.dt_order", rep.dmu_order, 1.0));
    rows.push_back(check_ge("evolution.metric.dt_order", rep.g_order, 1.0));
    GradientFlowRatios gf = gradient_flow_ratios(st, cfg.control, 20);
    rows.push_back(info("evolution.energy_rate.median_ratio_literal", gf.median_literal));
    rows.push_back(gated(check_le("evolution.energy_rate.median_ratio_half", gf.median_half, 0.1)));
    return rows;
}

/// Nonnegative test functions on a surface: cutoffs at random vertices and
/// radii, rough random fields, and products of the two. Deterministic in seed.
inline std::vector<Eigen::VectorXd> random_test_functions(const Surface& s, int count, unsigned seed, double max_radius)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, s.vertex_count() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double rmax = std::min(max_radius, 0.99 * s.ambient().inj_radius());
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < count; ++i) {
        const auto n = static_cast<Eigen::Index>(s.vertex_count());
        Eigen::VectorXd u(n);
        int kind = i % 3;
        if (kind == 1) {
            for (Eigen::Index v = 0; v < n; ++v) u[v] = unit(rng);
        } else {
            CutoffFunction cut(s.ambient(), s.vertex(static_cast<int>(pick(rng))), rmax * (0.2 + 0.8 * unit(rng)));
            u = cut.values(s) * (0.5 + 2 * unit(rng));
            if (kind == 2)
                for (Eigen::Index v = 0; v < n; ++v) u[v] *= unit(rng);
        }
        out.push_back(std::move(u));
    }
    return out;
}

/// Hoffman–Spruck over random test functions, covering relation, cutoff
/// gradient contract and the empirical multiplicative Sobolev constant.
inline std::vector<CheckRow> verify_sobolev(const RunConfig& cfg)
{
    const AmbientSpace amb = cfg.ambient.make();
    FlowState st = make_flow_state(generate_mesh(cfg.mesh, amb), amb, cfg.control.fit);
    const Surface& s = st.surface;
    const auto& shape = st.shape.vertices;
    std::vector<CheckRow> rows;

    double worst = 0;
    int applicable = 0;
    auto tests = random_test_functions(s, 12, 12345u, 2.0 * cfg.diagnostics.rho.front());
    tests.push_back(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(s.vertex_count())));
    for (const auto& u : tests) {
        HoffmanSpruckReport hs = hoffman_spruck_check(s, shape, u);
        if (!hs.conditions_ok || hs.rhs <= 0) continue;
        ++applicable;
        worst = std::max(worst, hs.lhs / hs.rhs);
    }
    rows.push_back(info("sobolev.hoffman_spruck.applicable_tests", applicable));
    rows.push_back(check_le("sobolev.hoffman_spruck.max_lhs_over_rhs", worst, 1.05));

    for (double rho : cfg.diagnostics.rho) {
        std::string tag = "[rho=" + format_double(rho) + "]";
        CoveringReport cov = covering_check(s, shape, rho);
        rows.push_back(check_ge("sobolev.covering.slack" + tag, cov.slack, 1.0));
        ConcentrationReport conc = concentration(s, shape, rho);
        CutoffFunction cut(amb, conc.center, rho);
        CutoffBoundsReport cb = cutoff_bounds(s, *st.rings, shape, cut);
        double mean_edge = 0;
        for (double e : s.metric().edge_length) mean_edge += e;
        mean_edge /= static_cast<double>(s.metric().edge_length.size());
        rows.push_back(check_le("sobolev.cutoff.max_grad" + tag, cb.max_grad, 4.0 / rho * (1 + 2 * mean_edge / rho)));
        rows.push_back(info("sobolev.cutoff.max_hess_excess" + tag, cb.max_hess_excess));
        auto d = curvature_derivatives(s, *st.rings, shape);
        MultiplicativeSobolevReport ms = multiplicative_sobolev_check(s, shape, d, cut);
        rows.push_back(info("sobolev.multiplicative.c_min" + tag, ms.c_min));
        rows.push_back(info("sobolev.eta" + tag, conc.eta));
    }
    rows.push_back(info("sobolev.rho_of_t", rho_of_t(s, shape, cfg.diagnostics.eps0, cfg.diagnostics.settings().radius_grid)));
    return rows;
}

inline std::vector<CheckRow> verify_suite(const RunConfig& cfg, const std::string& suite)
{
    if (suite == "identities") return verify_identities(cfg);
    if (suite == "evolution") return verify_evolution(cfg);
    if (suite == "sobolev") return verify_sobolev(cfg);
    if (suite == "all") {
        std::vector<CheckRow> rows;
        for (const char* name : {"identities", "evolution", "sobolev"}) {
            auto part = verify_suite(cfg, name);
            rows.insert(rows.end(), part.begin(), part.end());
        }
        return rows;
    }
    throw Error(ErrorCode::BadParams, "unknown suite '" + suite + "' (identities, evolution, sobolev, all)");
}

// --- lifespan campaign -------------------------------------------------------

struct LifespanExperiment {
    double parameter = 0;
    double rho0 = 0;
    double T_hat = 0;
    Termination reason = Termination::Horizon;
    long steps = 0;
    double energy0 = 0;
    double max_abs_A0 = 0;
};

struct CampaignResult {
    std::vector<LifespanExperiment> experiments;
    std::optional<LifespanFit> fit;
    std::string fit_error;
};

inline MeshConfig with_parameter(MeshConfig m, const std::string& name, double value)
{
    if (name == "neck_width") m.neck_width = value;
    else if (name == "radius") m.radius = value;
    else if (name == "a") m.a = value;
    else if (name == "level") m.level = static_cast<int>(std::lround(value));
    else throw Error(ErrorCode::BadParams, "unknown campaign parameter '" + name + "'");
    return m;
}

/// One experiment per campaign value: ρ₀ is the largest grid radius with
/// initial concentration ≤ ε₀, T̂ the time at which the run terminates (or
/// the horizon). Experiments run independently; results keep input order.
/// on_snapshot may be called concurrently from different experiments.
inline CampaignResult run_campaign(const RunConfig& cfg,
                                   std::function<void(std::size_t, const FlowState&)> on_snapshot = {})
{
    if (!(cfg.horizon > 0)) throw Error(ErrorCode::BadParams, "flow.horizon must be positive for a lifespan campaign");
    const AmbientSpace amb = cfg.ambient.make();
    const DiagnosticsSettings settings = cfg.diagnostics.settings();
    CampaignResult res;
    res.experiments.resize(cfg.campaign.values.size());
    parallel_for(cfg.campaign.values.size(), [&](std::size_t i) {
        LifespanExperiment& e = res.experiments[i];
        e.parameter = cfg.campaign.values[i];
        FlowState st = make_flow_state(generate_mesh(with_parameter(cfg.mesh, cfg.campaign.parameter, e.parameter), amb), amb,
                                       cfg.control.fit);
        e.rho0 = rho_of_t(st.surface, st.shape.vertices, settings.eps0, settings.radius_grid);
        e.energy0 = st.energy();
        e.max_abs_A0 = st.shape.max_abs_A();
        RunOptions opt;
        opt.horizon = cfg.horizon;
        opt.max_steps = cfg.max_steps;
        if (on_snapshot) {
            opt.snapshot_every = cfg.snapshot_every;
            opt.on_snapshot = [&](const FlowState& s) { on_snapshot(i, s); };
        }
        double t0 = st.t;
        RunSummary sum = run(st, cfg.control, opt);
        e.T_hat = sum.t_final - t0;
        e.reason = sum.reason;
        e.steps = sum.steps;
    });
    std::vector<std::pair<double, double>> data;
    for (const auto& e : res.experiments) data.emplace_back(e.rho0, e.T_hat);
    try {
        res.fit = lifespan_fit(data);
    } catch (const Error& err) {
        res.fit_error = err.what();
    }
    return res;
}

inline void write_lifespan_csv(const std::filesystem::path& path, const CampaignResult& res, const std::string& parameter)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << parameter << ",rho0,T_hat,reason,steps,bound_ok\n";
    for (std::size_t i = 0; i < res.experiments.size(); ++i) {
        const auto& e = res.experiments[i];
        out << format_double(e.parameter) << ',' << format_double(e.rho0) << ',' << format_double(e.T_hat) << ',' << to_string(e.reason)
            << ',' << e.steps << ',' << (res.fit ? (res.fit->bound_ok[i] ? "1" : "0") : "") << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace willmore
