#pragma once

// Run configuration, mesh generation dispatch and on-disk results:
// <outdir>/config.echo, snap_<k>.obj, snap_<k>.fields.csv, diagnostics.csv.

#include "willmore/ambient.hpp"
#include "willmore/diagnostics.hpp"
#include "willmore/error.hpp"
#include "willmore/flow.hpp"
#include "willmore/generate.hpp"
#include "willmore/mesh.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace willmore {

/// Error carrying every problem found in a config, not just the first.
class ConfigError : public Error {
public:
    ConfigError(ErrorCode code, std::vector<std::string> issues)
        : Error(code, join(issues))
        , issues_(std::move(issues))
    {}

    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    static std::string join(const std::vector<std::string>& v)
    {
        std::string out;
        for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
        return out;
    }
    std::vector<std::string> issues_;
};

struct AmbientConfig {
    std::string kind = "euclidean";
    double kappa = -1.0;
    double pole_bound = 10.0;

    AmbientSpace make() const
    {
        if (kind == "hyperbolic") return AmbientSpace::hyperbolic(kappa);
        if (kind == "spherical") return AmbientSpace::spherical(kappa, pole_bound);
        return AmbientSpace::euclidean();
    }
};

struct MeshConfig {
    std::string source = "generator"; // or "file"
    std::string generator = "icosphere";
    std::string file;
    int level = 3;
    double a = 1.5, b = 1.0, c = 1.0;
    double R = 2.0, r = 1.0;
    int nu = 64, nv = 32;
    double neck_width = 0.3;
    double radius = 1.0;
};

struct DiagnosticsConfig {
    std::vector<double> rho{0.5};
    double eps0 = 1e-2;
    double sigma0 = std::numeric_limits<double>::infinity();
    std::vector<double> radius_grid; // empty: eight equal steps up to rho[0]

    DiagnosticsSettings settings() const
    {
        DiagnosticsSettings s;
        s.rho = rho.front();
        s.eps0 = eps0;
        s.sigma0 = sigma0;
        s.radius_grid = radius_grid;
        if (s.radius_grid.empty())
            for (int k = 1; k <= 8; ++k) s.radius_grid.push_back(s.rho * k / 8.0);
        return s;
    }
};

struct CampaignConfig {
    std::string parameter = "neck_width";
    std::vector<double> values{0.4, 0.3, 0.2, 0.15};
};

struct RunConfig {
    AmbientConfig ambient;
    MeshConfig mesh;
    StepControl control;
    double horizon = 0;
    long max_steps = 1000000;
    long snapshot_every = 100;
    DiagnosticsConfig diagnostics;
    CampaignConfig campaign;
    std::string outdir = "out";
    bool deterministic = true;
};

namespace detail {

inline std::size_t edit_distance(const std::string& a, const std::string& b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline std::string trim(std::string s)
{
    auto ws = [](unsigned char c) { return std::isspace(c); };
    s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
    s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
    return s;
}

inline std::optional<double> to_double(const std::string& text)
{
    std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    double v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

inline std::optional<long> to_long(const std::string& text)
{
    std::string t = trim(text);
    long v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || t.empty()) return std::nullopt;
    return v;
}

/// Reads typed values out of the flat key table, collecting problems.
class ConfigReader {
public:
    explicit ConfigReader(std::map<std::string, std::string> kv)
        : kv_(std::move(kv))
    {}

    void real(const std::string& key, double& out) { read(key, [&](const std::string& v) { return assign(to_double(v), out); }); }
    void integer(const std::string& key, int& out)
    {
        read(key, [&](const std::string& v) {
            auto x = to_long(v);
            if (x && *x >= std::numeric_limits<int>::min() && *x <= std::numeric_limits<int>::max()) out = static_cast<int>(*x);
            return x.has_value();
        });
    }
    void integer(const std::string& key, long& out) { read(key, [&](const std::string& v) { return assign(to_long(v), out); }); }
    void text(const std::string& key, std::string& out)
    {
        read(key, [&](const std::string& v) {
            out = trim(v);
            return true;
        });
    }
    void boolean(const std::string& key, bool& out)
    {
        read(key, [&](const std::string& v) {
            std::string t = trim(v);
            if (t == "true" || t == "1" || t == "yes") out = true;
            else if (t == "false" || t == "0" || t == "no") out = false;
            else return false;
            return true;
        });
    }
    void list(const std::string& key, std::vector<double>& out)
    {
        read(key, [&](const std::string& v) {
            std::vector<double> vals;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                auto x = to_double(item);
                if (!x) return false;
                vals.push_back(*x);
            }
            out = std::move(vals);
            return true;
        });
    }

    void fail(const std::string& key, const std::string& why) { issues_.push_back(key + ": " + why); }

    /// Unknown keys, each with the nearest known key.
    void finish()
    {
        for (const auto& [key, value] : kv_) {
            if (known_.count(key)) continue;
            std::string best;
            std::size_t best_d = std::numeric_limits<std::size_t>::max();
            for (const auto& k : known_) {
                std::size_t d = edit_distance(key, k);
                if (d < best_d) best_d = d, best = k;
            }
            issues_.push_back(key + ": unknown key (did you mean '" + best + "'?)");
        }
    }

    std::vector<std::string>& issues() { return issues_; }

private:
    template <typename T, typename U>
    static bool assign(const std::optional<T>& x, U& out)
    {
        if (x) out = *x;
        return x.has_value();
    }

    template <typename F>
    void read(const std::string& key, F&& parse)
    {
        known_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return;
        if (!parse(it->second)) issues_.push_back(key + ": cannot parse value '" + trim(it->second) + "'");
    }

    std::map<std::string, std::string> kv_;
    std::set<std::string> known_;
    std::vector<std::string> issues_;
};

} // namespace detail

/// Every [section] key with its default, in the order they are documented.
inline const char* default_config_text()
{
    return R"([ambient]
; euclidean | hyperbolic | spherical
kind = euclidean
kappa = -1
pole_bound = 10

[mesh]
; generator | file
source = generator
; icosphere | ellipsoid | torus | dumbbell | geodesic_sphere
generator = icosphere
file =
level = 3
a = 1.5
b = 1
c = 1
R = 2
r = 1
nu = 64
nv = 32
neck_width = 0.3
radius = 1

[flow]
c_cfl = 0.05
horizon = 0
max_steps = 1000000
max_dt = inf
energy_tolerance = 1e-8
length_scale = 1
curvature_cap = 1000
max_rejections = 20
snapshot_every = 100
min_angle_deg = 2
max_aspect = 50
max_edge_ratio = 1000

[diagnostics]
rho = 0.5
eps0 = 0.01
sigma0 = inf
; empty: rho/8, 2rho/8, ..., rho
radius_grid =

[campaign]
parameter = neck_width
values = 0.4, 0.3, 0.2, 0.15

[output]
outdir = out
deterministic = true
)";
}

/// Parses and validates a flat `key = value` config with [section] headers.
/// Throws ConfigError(ParseError) on malformed text and
/// ConfigError(ValidationError) listing every invalid or unknown key.
inline RunConfig parse_config(const std::string& text)
{
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(ErrorCode::ParseError, {"line " + std::to_string(e.line()) + ": " + e.message()});
    } catch (const std::exception& e) {
        throw ConfigError(ErrorCode::ParseError, {e.what()});
    }
    std::map<std::string, std::string> kv;
    std::vector<std::string> issues;
    for (const auto& [section, body] : tree) {
        if (body.empty()) {
            // An empty [section] and a top-level key look alike; only the latter has a value.
            if (!body.data().empty()) issues.push_back(section + ": key outside a [section]");
            continue;
        }
        for (const auto& [key, value] : body) kv[section + "." + key] = value.data();
    }

    RunConfig c;
    detail::ConfigReader rd(std::move(kv));
    rd.text("ambient.kind", c.ambient.kind);
    rd.real("ambient.kappa", c.ambient.kappa);
    rd.real("ambient.pole_bound", c.ambient.pole_bound);
    rd.text("mesh.source", c.mesh.source);
    rd.text("mesh.generator", c.mesh.generator);
    rd.text("mesh.file", c.mesh.file);
    rd.integer("mesh.level", c.mesh.level);
    rd.real("mesh.a", c.mesh.a);
    rd.real("mesh.b", c.mesh.b);
    rd.real("mesh.c", c.mesh.c);
    rd.real("mesh.R", c.mesh.R);
    rd.real("mesh.r", c.mesh.r);
    rd.integer("mesh.nu", c.mesh.nu);
    rd.integer("mesh.nv", c.mesh.nv);
    rd.real("mesh.neck_width", c.mesh.neck_width);
    rd.real("mesh.radius", c.mesh.radius);
    rd.real("flow.c_cfl", c.control.c_cfl);
    rd.real("flow.horizon", c.horizon);
    rd.integer("flow.max_steps", c.max_steps);
    rd.real("flow.max_dt", c.control.max_dt);
    rd.real("flow.energy_tolerance", c.control.energy_tolerance);
    rd.real("flow.length_scale", c.control.length_scale);
    rd.real("flow.curvature_cap", c.control.curvature_cap);
    rd.integer("flow.max_rejections", c.control.max_rejections);
    rd.integer("flow.snapshot_every", c.snapshot_every);
    rd.real("flow.min_angle_deg", c.control.quality.min_angle_deg);
    rd.real("flow.max_aspect", c.control.quality.max_aspect);
    rd.real("flow.max_edge_ratio", c.control.quality.max_edge_ratio);
    rd.list("diagnostics.rho", c.diagnostics.rho);
    rd.real("diagnostics.eps0", c.diagnostics.eps0);
    rd.real("diagnostics.sigma0", c.diagnostics.sigma0);
    rd.list("diagnostics.radius_grid", c.diagnostics.radius_grid);
    rd.text("campaign.parameter", c.campaign.parameter);
    rd.list("campaign.values", c.campaign.values);
    rd.text("output.outdir", c.outdir);
    rd.boolean("output.deterministic", c.deterministic);
    rd.finish();
    for (auto& s : rd.issues()) issues.push_back(std::move(s));

    auto require = [&](bool ok, const std::string& key, const std::string& why) {
        if (!ok) issues.push_back(key + ": " + why);
    };
    const std::string& kind = c.ambient.kind;
    require(kind == "euclidean" || kind == "hyperbolic" || kind == "spherical", "ambient.kind",
            "must be euclidean, hyperbolic or spherical");
    if (kind == "hyperbolic") require(c.ambient.kappa < 0 && std::isfinite(c.ambient.kappa), "ambient.kappa", "must be negative");
    if (kind == "spherical") {
        require(c.ambient.kappa > 0 && std::isfinite(c.ambient.kappa), "ambient.kappa", "must be positive");
        require(c.ambient.pole_bound > 0 && std::isfinite(c.ambient.pole_bound), "ambient.pole_bound", "must be positive");
    }
    double inj = std::numeric_limits<double>::infinity();
    if (kind == "spherical" && c.ambient.kappa > 0) inj = M_PI / std::sqrt(c.ambient.kappa);

    const MeshConfig& m = c.mesh;
    require(m.source == "generator" || m.source == "file", "mesh.source", "must be generator or file");
    if (m.source == "file") require(!m.file.empty(), "mesh.file", "required when mesh.source = file");
    if (m.source == "generator") {
        const std::string& g = m.generator;
        require(g == "icosphere" || g == "ellipsoid" || g == "torus" || g == "dumbbell" || g == "geodesic_sphere", "mesh.generator",
                "must be icosphere, ellipsoid, torus, dumbbell or geodesic_sphere");
        if (g != "torus") require(m.level >= 0 && m.level <= 8, "mesh.level", "must be in [0, 8]");
        if (g == "ellipsoid") require(m.a > 0 && m.b > 0 && m.c > 0, "mesh.a", "semi-axes a, b, c must be positive");
        if (g == "torus") {
            require(m.R > m.r && m.r > 0, "mesh.R", "torus needs R > r > 0");
            require(m.nu >= 3 && m.nv >= 3, "mesh.nu", "nu and nv must be at least 3");
        }
        if (g == "dumbbell") require(m.neck_width > 0 && m.neck_width < 1, "mesh.neck_width", "must be in (0, 1)");
        if (g == "geodesic_sphere") require(m.radius > 0 && m.radius < inj, "mesh.radius", "must be positive and below the injectivity radius");
    }

    require(c.control.c_cfl > 0, "flow.c_cfl", "must be positive");
    require(c.horizon >= 0 && std::isfinite(c.horizon), "flow.horizon", "must be nonnegative and finite");
    require(c.max_steps >= 0, "flow.max_steps", "must be nonnegative");
    require(c.control.max_dt > 0, "flow.max_dt", "must be positive");
    require(c.control.energy_tolerance >= 0, "flow.energy_tolerance", "must be nonnegative");
    require(c.control.length_scale > 0, "flow.length_scale", "must be positive");
    require(c.control.curvature_cap > 0, "flow.curvature_cap", "must be positive");
    require(c.control.max_rejections >= 0, "flow.max_rejections", "must be nonnegative");
    require(c.snapshot_every >= 0, "flow.snapshot_every", "must be nonnegative");

    require(!c.diagnostics.rho.empty(), "diagnostics.rho", "needs at least one radius");
    for (double r : c.diagnostics.rho) require(r > 0 && r < inj, "diagnostics.rho", "radii must be positive and below the injectivity radius");
    for (double r : c.diagnostics.radius_grid)
        require(r > 0 && r < inj, "diagnostics.radius_grid", "radii must be positive and below the injectivity radius");
    require(c.diagnostics.eps0 >= 0, "diagnostics.eps0", "must be nonnegative");
    require(c.diagnostics.sigma0 > 0, "diagnostics.sigma0", "must be positive");
    require(c.campaign.parameter == "neck_width" || c.campaign.parameter == "level" || c.campaign.parameter == "radius" ||
                c.campaign.parameter == "a",
            "campaign.parameter", "must be neck_width, level, radius or a");
    require(!c.outdir.empty(), "output.outdir", "must not be empty");

    if (!issues.empty()) throw ConfigError(ErrorCode::ValidationError, std::move(issues));
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Config with every key spelled out, as written to config.echo.
inline std::string echo_config(const RunConfig& c)
{
    std::ostringstream os;
    os.precision(17);
    auto list = [&](const std::vector<double>& v) {
        std::ostringstream l;
        l.precision(17);
        for (std::size_t i = 0; i < v.size(); ++i) l << (i ? ", " : "") << v[i];
        return l.str();
    };
    os << "[ambient]\nkind = " << c.ambient.kind << "\nkappa = " << c.ambient.kappa << "\npole_bound = " << c.ambient.pole_bound
       << "\n\n[mesh]\nsource = " << c.mesh.source << "\ngenerator = " << c.mesh.generator << "\nfile = " << c.mesh.file
       << "\nlevel = " << c.mesh.level << "\na = " << c.mesh.a << "\nb = " << c.mesh.b << "\nc = " << c.mesh.c << "\nR = " << c.mesh.R
       << "\nr = " << c.mesh.r << "\nnu = " << c.mesh.nu << "\nnv = " << c.mesh.nv << "\nneck_width = " << c.mesh.neck_width
       << "\nradius = " << c.mesh.radius << "\n\n[flow]\nc_cfl = " << c.control.c_cfl << "\nhorizon = " << c.horizon
       << "\nmax_steps = " << c.max_steps << "\nmax_dt = " << c.control.max_dt << "\nenergy_tolerance = " << c.control.energy_tolerance
       << "\nlength_scale = " << c.control.length_scale << "\ncurvature_cap = " << c.control.curvature_cap
       << "\nmax_rejections = " << c.control.max_rejections << "\nsnapshot_every = " << c.snapshot_every
       << "\nmin_angle_deg = " << c.control.quality.min_angle_deg << "\nmax_aspect = " << c.control.quality.max_aspect
       << "\nmax_edge_ratio = " << c.control.quality.max_edge_ratio << "\n\n[diagnostics]\nrho = " << list(c.diagnostics.rho)
       << "\neps0 = " << c.diagnostics.eps0 << "\nsigma0 = " << c.diagnostics.sigma0 << "\nradius_grid = " << list(c.diagnostics.radius_grid)
       << "\n\n[campaign]\nparameter = " << c.campaign.parameter
       << "\nvalues = " << list(c.campaign.values) << "\n\n[output]\noutdir = " << c.outdir
       << "\ndeterministic = " << (c.deterministic ? "true" : "false") << "\n";
    return os.str();
}

// --- meshes ---------------------------------------------------------------

struct ObjData {
    Immersion immersion;
    std::optional<std::string> chart;
};

inline std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// OBJ with `# chart: <descriptor>` and `# t: <time>` header comments.
inline void write_obj(const std::filesystem::path& path, const Immersion& im, const AmbientSpace& amb)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "# chart: " << amb.chart_descriptor() << "\n# t: " << format_double(im.t) << "\n";
    for (const auto& p : im.vertices) out << "v " << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
    for (const auto& t : im.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline ObjData read_obj(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    ObjData d;
    std::string line;
    int lineno = 0;
    auto bad = [&](const std::string& why) {
        return Error(ErrorCode::IoError, path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "#") {
            std::string key;
            ls >> key;
            std::string rest;
            std::getline(ls, rest);
            rest = detail::trim(rest);
            if (key == "chart:") d.chart = rest;
            if (key == "t:") {
                auto t = detail::to_double(rest);
                if (!t) throw bad("bad time comment");
                d.immersion.t = *t;
            }
        } else if (tag == "v") {
            std::string tok[3];
            ls >> tok[0] >> tok[1] >> tok[2];
            Vec3 p;
            for (int k = 0; k < 3; ++k) {
                auto x = detail::to_double(tok[k]);
                if (!x) throw bad("bad vertex coordinate");
                p[k] = *x;
            }
            d.immersion.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                auto x = detail::to_long(tok.substr(0, tok.find('/')));
                if (!x || *x == 0) throw bad("bad face index");
                long n = static_cast<long>(d.immersion.vertices.size());
                idx.push_back(static_cast<int>(*x > 0 ? *x - 1 : n + *x));
            }
            if (idx.size() != 3) throw Error(ErrorCode::SchemaMismatch, path.string() + ":" + std::to_string(lineno) + ": only triangles are supported");
            d.immersion.triangles.push_back({idx[0], idx[1], idx[2]});
        }
    }
    for (const auto& t : d.immersion.triangles)
        for (int v : t)
            if (v < 0 || v >= static_cast<int>(d.immersion.vertices.size())) throw Error(ErrorCode::IoError, path.string() + ": face index out of range");
    return d;
}

/// Initial immersion described by the [mesh] section.
inline Immersion generate_mesh(const MeshConfig& m, const AmbientSpace& amb)
{
    if (m.source == "file") {
        ObjData d = read_obj(m.file);
        if (d.chart && *d.chart != amb.chart_descriptor())
            throw Error(ErrorCode::SchemaMismatch, m.file + " was written for chart '" + *d.chart + "', config ambient is '" +
                                                       amb.chart_descriptor() + "'");
        return std::move(d.immersion);
    }
    if (m.generator == "icosphere") return icosphere(m.level);
    if (m.generator == "ellipsoid") return ellipsoid(m.a, m.b, m.c, m.level);
    if (m.generator == "torus") return torus(m.R, m.r, m.nu, m.nv);
    if (m.generator == "dumbbell") return dumbbell(m.neck_width, m.level);
    if (m.generator == "geodesic_sphere") return geodesic_sphere(amb, m.radius, m.level);
    throw Error(ErrorCode::BadParams, "unknown generator '" + m.generator + "'");
}

// --- snapshots ------------------------------------------------------------

inline std::filesystem::path snapshot_obj(const std::filesystem::path& dir, long k) { return dir / ("snap_" + std::to_string(k) + ".obj"); }
inline std::filesystem::path snapshot_fields(const std::filesystem::path& dir, long k)
{
    return dir / ("snap_" + std::to_string(k) + ".fields.csv");
}

/// Per-vertex H, W, |A|², A in the vertex frame and ν in chart components.
inline void write_fields(const std::filesystem::path& path, const FlowState& st)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "vertex,H,W,A_norm2,A11,A12,A22,nu_x,nu_y,nu_z\n";
    for (std::size_t v = 0; v < st.shape.vertices.size(); ++v) {
        const VertexShape& s = st.shape.vertices[v];
        Vec3 n = s.normal();
        out << v << ',' << format_double(s.H) << ',' << format_double(st.shape.W[static_cast<Eigen::Index>(v)]) << ','
            << format_double(s.A_norm2) << ',' << format_double(s.A(0, 0)) << ',' << format_double(s.A(0, 1)) << ','
            << format_double(s.A(1, 1)) << ',' << format_double(n.x()) << ',' << format_double(n.y()) << ',' << format_double(n.z())
            << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline void write_snapshot(const std::filesystem::path& dir, long k, const FlowState& st)
{
    write_obj(snapshot_obj(dir, k), st.immersion(), st.surface.ambient());
    write_fields(snapshot_fields(dir, k), st);
}

/// Reloads snapshot k; shape quantities are recomputed from the positions.
inline FlowState read_snapshot(const std::filesystem::path& dir, long k, const AmbientSpace& amb, const FitOptions& fit = {})
{
    auto path = snapshot_obj(dir, k);
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::NotFound, "snapshot " + std::to_string(k) + " not found in " + dir.string());
    ObjData d = read_obj(path);
    if (!d.chart) throw Error(ErrorCode::SchemaMismatch, path.string() + " has no chart comment");
    if (*d.chart != amb.chart_descriptor())
        throw Error(ErrorCode::SchemaMismatch,
                    path.string() + " was written for chart '" + *d.chart + "', expected '" + amb.chart_descriptor() + "'");
    return make_flow_state(std::move(d.immersion), amb, fit);
}

/// Snapshot indices present in dir, ascending.
inline std::vector<long> list_snapshots(const std::filesystem::path& dir)
{
    std::vector<long> out;
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::NotFound, "run directory " + dir.string() + " does not exist");
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        std::string name = e.path().filename().string();
        if (name.rfind("snap_", 0) != 0 || e.path().extension() != ".obj") continue;
        if (auto k = detail::to_long(name.substr(5, name.size() - 9))) out.push_back(*k);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline const char* diagnostics_header = "t,dt,energy,eta,rho_of_t,area_conc_max,hs_ok,covering_slack,max_abs_A,min_quality";

inline std::string diagnostics_line(const DiagnosticsRow& r)
{
    return format_double(r.t) + ',' + format_double(r.dt) + ',' + format_double(r.energy) + ',' + format_double(r.eta) + ',' +
           format_double(r.rho_of_t) + ',' + format_double(r.area_conc_max) + ',' + (r.hs_ok ? "1" : "0") + ',' +
           format_double(r.covering_slack) + ',' + format_double(r.max_abs_A) + ',' + format_double(r.min_quality);
}

/// Append-only diagnostics.csv; the header is written when the file is new.
class DiagnosticsLog {
public:
    explicit DiagnosticsLog(const std::filesystem::path& path)
        : path_(path)
    {
        bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
        out_.open(path, std::ios::app);
        if (!out_) throw Error(ErrorCode::IoError, "cannot open " + path.string());
        if (fresh) out_ << diagnostics_header << '\n';
    }

    void append(const DiagnosticsRow& r)
    {
        out_ << diagnostics_line(r) << '\n';
        out_.flush();
        if (!out_) throw Error(ErrorCode::IoError, "write failed for " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

struct DiagnosticsTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

inline DiagnosticsTable read_diagnostics(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
    DiagnosticsTable t;
    std::string line;
    if (!std::getline(in, line) || line != diagnostics_header)
        throw Error(ErrorCode::SchemaMismatch, path.string() + " does not start with the expected header");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) t.columns.push_back(cell);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            auto x = detail::to_double(cell);
            if (!x) throw Error(ErrorCode::SchemaMismatch, path.string() + ":" + std::to_string(lineno) + ": bad value '" + cell + "'");
            row.push_back(*x);
        }
        if (row.size() != t.columns.size())
            throw Error(ErrorCode::SchemaMismatch, path.string() + ":" + std::to_string(lineno) + ": wrong column count");
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace willmore
