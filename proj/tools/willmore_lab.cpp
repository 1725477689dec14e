// willmore-lab <run|verify|lifespan|inspect> [--config PATH] [--suite NAME] [--outdir PATH]
//
// Exit codes: 0 success, 1 invalid config or arguments, 2 runtime failure,
// 3 a verification check failed.

#include "willmore/lab.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace willmore;

namespace {

RunConfig load(const std::string& path, const std::string& outdir)
{
    if (path.empty()) throw ConfigError(ErrorCode::ValidationError, {"--config: a config file is required"});
    if (!std::filesystem::exists(path)) throw ConfigError(ErrorCode::ValidationError, {"--config: file not found: " + path});
    RunConfig cfg = load_config(path);
    if (!outdir.empty()) cfg.outdir = outdir;
    return cfg;
}

int cmd_run(const RunConfig& cfg)
{
    auto t0 = std::chrono::steady_clock::now();
    RunOutcome out = run_to_directory(cfg);
    const RunSummary& s = out.summary;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("termination  %s%s%s\n", to_string(s.reason).c_str(), s.detail.empty() ? "" : ": ", s.detail.c_str());
    std::printf("steps        %ld (%ld rejections)\n", s.steps, s.rejections);
    std::printf("t_final      %.10g\n", s.t_final);
    std::printf("energy       %.10g -> %.10g\n", s.energy_initial, s.energy_final);
    std::printf("max |A|      %.6g\n", s.max_abs_A);
    std::printf("snapshots    %ld in %s (%.1f s)\n", out.snapshots, cfg.outdir.c_str(), secs);
    return 0;
}

int cmd_verify(const RunConfig& cfg, const std::string& suite)
{
    std::vector<CheckRow> rows = verify_suite(cfg, suite);
    std::size_t width = 5;
    for (const auto& r : rows) width = std::max(width, r.name.size());
    std::printf("%-*s  %14s  %4s  %14s  %s\n", static_cast<int>(width), "check", "value", "", "bound", "result");
    bool ok = true;
    for (const auto& r : rows) {
        if (r.relation == "info") {
            std::printf("%-*s  %14.6g  %4s  %14s  %s\n", static_cast<int>(width), r.name.c_str(), r.value, "", "", "info");
        } else {
            std::printf("%-*s  %14.6g  %4s  %14.6g  %s\n", static_cast<int>(width), r.name.c_str(), r.value, r.relation.c_str(), r.bound,
                        r.pass ? "pass" : "FAIL");
            ok = ok && r.pass;
        }
    }
    return ok ? 0 : 3;
}

int cmd_lifespan(const RunConfig& cfg)
{
    CampaignResult res = run_campaign(cfg);
    std::filesystem::create_directories(cfg.outdir);
    auto path = std::filesystem::path(cfg.outdir) / "lifespan.csv";
    write_lifespan_csv(path, res, cfg.campaign.parameter);
    std::printf("%12s  %10s  %14s  %-14s %8s\n", cfg.campaign.parameter.c_str(), "rho0", "T_hat", "reason", "steps");
    for (const auto& e : res.experiments)
        std::printf("%12.6g  %10.6g  %14.8g  %-14s %8ld\n", e.parameter, e.rho0, e.T_hat, to_string(e.reason).c_str(), e.steps);
    std::printf("wrote %s\n", path.c_str());
    if (!res.fit) {
        std::fprintf(stderr, "error: %s\n", res.fit_error.c_str());
        return 2;
    }
    const LifespanFit& f = *res.fit;
    std::printf("fit: log T_hat = %.6g + %.6g log rho0, r^2 = %.6g\n", f.intercept, f.slope, f.r2);
    std::printf("calibrated c_hat = %.6g (T_hat >= rho0^4 / c_hat)\n", f.c_hat);
    int loo = 0;
    for (bool b : f.leave_one_out_ok) loo += b;
    std::printf("leave-one-out bound holds for %d of %zu experiments\n", loo, f.leave_one_out_ok.size());
    return 0;
}

int cmd_inspect(const std::string& dir, long snapshot)
{
    namespace fs = std::filesystem;
    if (!fs::exists(fs::path(dir) / "config.echo")) throw Error(ErrorCode::NotFound, "no config.echo in run directory " + dir);
    RunConfig cfg = load_config(fs::path(dir) / "config.echo");
    AmbientSpace amb = cfg.ambient.make();
    std::vector<long> snaps = list_snapshots(dir);
    DiagnosticsTable tab = read_diagnostics(fs::path(dir) / "diagnostics.csv");
    std::printf("run directory %s: ambient %s, %zu snapshots, %zu diagnostics rows\n", dir.c_str(), amb.chart_descriptor().c_str(),
                snaps.size(), tab.rows.size());
    if (snaps.size() != tab.rows.size()) std::printf("warning: snapshot count and diagnostics rows differ\n");
    for (const auto& c : tab.columns) std::printf("%14s", c.c_str());
    std::printf("\n");
    for (const auto& row : tab.rows) {
        for (double v : row) std::printf("%14.6g", v);
        std::printf("\n");
    }
    if (snapshot >= 0) {
        FlowState st = read_snapshot(dir, snapshot, amb, cfg.control.fit);
        QualityReport q = st.surface.quality();
        std::printf("snapshot %ld: t %.10g, %zu vertices, %zu faces, energy %.10g, max |A| %.6g, min angle %.3f deg\n", snapshot, st.t,
                    st.surface.vertex_count(), st.surface.face_count(), st.energy(), st.shape.max_abs_A(), q.min_angle_deg);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Willmore flow lab: runs, verification suites, lifespan campaigns"};
    app.name("willmore-lab");
    app.require_subcommand(1, 1);
    std::string config, outdir, suite = "all";
    long snapshot = -1;

    auto* run = app.add_subcommand("run", "integrate the flow and write snapshots and diagnostics");
    run->add_option("--config", config, "config file")->required();
    run->add_option("--outdir", outdir, "output directory (overrides output.outdir)");

    auto* verify = app.add_subcommand("verify", "run a verification suite and print a check table");
    verify->add_option("--config", config, "config file")->required();
    verify->add_option("--suite", suite, "identities, evolution, sobolev or all")
        ->check(CLI::IsMember({"identities", "evolution", "sobolev", "all"}));
    verify->add_option("--outdir", outdir, "unused; accepted for symmetry");

    auto* lifespan = app.add_subcommand("lifespan", "run the campaign and fit T_hat against rho0");
    lifespan->add_option("--config", config, "campaign config file")->required();
    lifespan->add_option("--outdir", outdir, "output directory for lifespan.csv");

    auto* inspect = app.add_subcommand("inspect", "summarise a run directory without modifying it");
    inspect->add_option("--outdir", outdir, "run directory")->required();
    inspect->add_option("--snapshot", snapshot, "also reload this snapshot index");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*inspect) return cmd_inspect(outdir, snapshot);
        RunConfig cfg = load(config, outdir);
        if (*run) return cmd_run(cfg);
        if (*verify) return cmd_verify(cfg, suite);
        return cmd_lifespan(cfg);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "invalid config %s:\n", config.c_str());
        for (const auto& issue : e.issues()) std::fprintf(stderr, "  %s\n", issue.c_str());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.code() == ErrorCode::IoError && !std::filesystem::exists(config)) return 1;
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
