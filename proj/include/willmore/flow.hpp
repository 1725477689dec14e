#pragma once

// Explicit time stepping of ∂_t f = -W(f) ν in chart coordinates, with an
// h⁴ step-size rule, energy/quality based rejection and the termination
// signals used as a numerical surrogate for the maximal existence time.

#include "willmore/mesh.hpp"
#include "willmore/shape.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>

namespace willmore {

struct QualityThresholds {
    double min_angle_deg = 2.0;
    double max_aspect = 50.0;
    double max_edge_ratio = 1e3;

    bool accepts(const QualityReport& q) const
    {
        return q.min_angle_deg >= min_angle_deg && q.max_aspect <= max_aspect && q.edge_ratio <= max_edge_ratio;
    }
};

struct StepControl {
    double c_cfl = 0.05;
    double max_dt = std::numeric_limits<double>::infinity();
    double energy_tolerance = 1e-8; // relative, τ_E
    double length_scale = 1.0;      // ℓ
    double curvature_cap = 1e3;     // ‖A‖∞ cap in units of 1/ℓ
    int max_rejections = 20;
    QualityThresholds quality;
    FitOptions fit;

    void validate() const
    {
        if (!(c_cfl > 0)) throw Error(ErrorCode::BadParams, "c_cfl must be positive");
        if (!(energy_tolerance >= 0)) throw Error(ErrorCode::BadParams, "energy tolerance must be nonnegative");
        if (!(max_dt > 0)) throw Error(ErrorCode::BadParams, "max_dt must be positive");
        if (!(length_scale > 0)) throw Error(ErrorCode::BadParams, "length scale must be positive");
    }
};

struct FlowState {
    Surface surface;
    ShapeState shape;
    std::shared_ptr<const RingCache> rings;
    double t = 0;
    double dt_last = 0;
    long step_index = 0;
    int rejections_last = 0;

    double energy() const { return shape.energy; }
    const Immersion& immersion() const { return surface.immersion(); }
};

inline FlowState make_flow_state(Immersion im, const AmbientSpace& amb, const FitOptions& fit = {})
{
    double t = im.t;
    Surface s(std::move(im), amb);
    auto rings = std::make_shared<const RingCache>(s.topology());
    ShapeState shape = compute_shape(s, *rings, fit);
    return FlowState{std::move(s), std::move(shape), std::move(rings), t, 0.0, 0, 0};
}

inline double min_edge_length(const Surface& s)
{
    const auto& e = s.metric().edge_length;
    return *std::min_element(e.begin(), e.end());
}

/// dt = c_cfl · h_min⁴ / max(1, (‖A‖∞ ℓ)⁴), clipped to max_dt.
inline double propose_dt(const FlowState& state, const StepControl& ctl)
{
    double h = min_edge_length(state.surface);
    double a = state.shape.max_abs_A() * ctl.length_scale;
    double dt = ctl.c_cfl * std::pow(h, 4) / std::max(1.0, std::pow(a, 4));
    return std::min(dt, ctl.max_dt);
}

/// One unconditional forward-Euler update v ↦ v − dt W(v) ν(v). Throws
/// whatever the new surface construction or shape fit throws.
inline FlowState euler_update(const FlowState& state, double dt, const FitOptions& fit = {})
{
    Immersion next = state.immersion();
    for (std::size_t v = 0; v < next.vertices.size(); ++v)
        next.vertices[v] -= dt * state.shape.W[static_cast<Eigen::Index>(v)] * state.shape.vertices[v].normal();
    next.t = state.t + dt;
    Surface s(std::move(next), state.surface.ambient(), state.surface.shared_topology());
    ShapeState shape = compute_shape(s, *state.rings, fit);
    return FlowState{std::move(s), std::move(shape), state.rings, state.t + dt, dt, state.step_index + 1, 0};
}

enum class StepOutcome { Accepted, EnergyIncrease, Quality, OutOfChart };

inline std::string to_string(StepOutcome o)
{
    switch (o) {
    case StepOutcome::Accepted: return "Accepted";
    case StepOutcome::EnergyIncrease: return "EnergyIncrease";
    case StepOutcome::Quality: return "Quality";
    case StepOutcome::OutOfChart: return "OutOfChart";
    }
    return "Unknown";
}

struct StepResult {
    std::optional<FlowState> state;
    StepOutcome last_failure = StepOutcome::Accepted;
    int rejections = 0;
};

/// Attempts dt, halving on rejection up to ctl.max_rejections times.
inline StepResult try_step(const FlowState& state, const StepControl& ctl, double dt)
{
    StepResult res;
    if (dt == 0) {
        FlowState same = state;
        same.step_index += 1;
        same.dt_last = 0;
        res.state = std::move(same);
        return res;
    }
    for (int attempt = 0; attempt <= ctl.max_rejections; ++attempt, dt *= 0.5) {
        try {
            FlowState next = euler_update(state, dt, ctl.fit);
            if (next.energy() - state.energy() > ctl.energy_tolerance * (1 + std::abs(state.energy()))) {
                res.last_failure = StepOutcome::EnergyIncrease;
            } else if (!ctl.quality.accepts(next.surface.quality())) {
                res.last_failure = StepOutcome::Quality;
            } else {
                next.rejections_last = attempt;
                res.rejections = attempt;
                res.state = std::move(next);
                return res;
            }
        } catch (const Error& e) {
            switch (e.code()) {
            case ErrorCode::OutOfChart: res.last_failure = StepOutcome::OutOfChart; break;
            case ErrorCode::DegenerateTriangle:
            case ErrorCode::RankDeficientFit:
            case ErrorCode::NonFiniteInput: res.last_failure = StepOutcome::Quality; break;
            default: throw;
            }
        }
        res.rejections = attempt + 1;
    }
    return res;
}

/// One accepted step at the proposed dt; StepFailure after max_rejections halvings.
inline FlowState step(const FlowState& state, const StepControl& ctl)
{
    StepResult r = try_step(state, ctl, propose_dt(state, ctl));
    if (!r.state)
        throw Error(ErrorCode::StepFailure, "step rejected " + std::to_string(r.rejections) + " times, last cause " +
                                                to_string(r.last_failure));
    return std::move(*r.state);
}

enum class Termination { Horizon, StepFailure, QualityAbort, CurvatureCap, OutOfChart };

inline std::string to_string(Termination t)
{
    switch (t) {
    case Termination::Horizon: return "Horizon";
    case Termination::StepFailure: return "StepFailure";
    case Termination::QualityAbort: return "QualityAbort";
    case Termination::CurvatureCap: return "CurvatureCap";
    case Termination::OutOfChart: return "OutOfChart";
    }
    return "Unknown";
}

struct RunOptions {
    double horizon = 0;
    long max_steps = std::numeric_limits<long>::max();
    long snapshot_every = 0; // accepted steps between snapshots; 0 disables
    std::function<void(const FlowState&)> on_step;     // every accepted step
    std::function<void(const FlowState&)> on_snapshot; // initial state and every snapshot_every steps
};

struct RunSummary {
    Termination reason = Termination::Horizon;
    long steps = 0;
    long rejections = 0;
    double t_final = 0;
    double energy_initial = 0;
    double energy_final = 0;
    double max_abs_A = 0;
    std::string detail;
};

/// Integrates until the horizon or a termination signal. `state` holds the
/// last accepted state on return.
inline RunSummary run(FlowState& state, const StepControl& ctl, const RunOptions& opt)
{
    ctl.validate();
    if (!(opt.horizon >= 0)) throw Error(ErrorCode::BadParams, "horizon must be nonnegative");
    RunSummary sum;
    sum.energy_initial = state.energy();
    const double t0 = state.t;
    const double cap = ctl.curvature_cap / ctl.length_scale;
    if (opt.on_snapshot) opt.on_snapshot(state);

    auto finish = [&](Termination reason, std::string detail) {
        sum.reason = reason;
        sum.detail = std::move(detail);
        sum.t_final = state.t;
        sum.energy_final = state.energy();
        sum.max_abs_A = state.shape.max_abs_A();
        return sum;
    };

    if (!ctl.quality.accepts(state.surface.quality())) return finish(Termination::QualityAbort, "initial mesh quality below thresholds");
    while (true) {
        if (state.t - t0 >= opt.horizon) return finish(Termination::Horizon, "");
        if (sum.steps >= opt.max_steps) return finish(Termination::Horizon, "step limit reached");
        if (state.shape.max_abs_A() > cap) return finish(Termination::CurvatureCap, "max |A| exceeds cap");
        double dt = std::min(propose_dt(state, ctl), t0 + opt.horizon - state.t);
        StepResult r = try_step(state, ctl, dt);
        sum.rejections += r.rejections;
        if (!r.state) {
            std::string why = "rejected " + std::to_string(r.rejections) + " times, last cause " + to_string(r.last_failure);
            switch (r.last_failure) {
            case StepOutcome::Quality: return finish(Termination::QualityAbort, why);
            case StepOutcome::OutOfChart: return finish(Termination::OutOfChart, why);
            default: return finish(Termination::StepFailure, why);
            }
        }
        state = std::move(*r.state);
        ++sum.steps;
        if (opt.on_step) opt.on_step(state);
        if (opt.on_snapshot && opt.snapshot_every > 0 && sum.steps % opt.snapshot_every == 0) opt.on_snapshot(state);
    }
}

} // namespace willmore
