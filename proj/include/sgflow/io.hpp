#pragma once

// Run configuration, persistence (CSV, manifest, SVG) and the `run`
// orchestration used by the command line tool.

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/dynamics.hpp"
#include "sgflow/errors.hpp"
#include "sgflow/geom2d.hpp"
#include "sgflow/laguerre.hpp"
#include "sgflow/quantize.hpp"
#include "sgflow/sdot.hpp"

#ifndef SGFLOW_VERSION
#define SGFLOW_VERSION "0.1.0"
#endif

namespace sgflow {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kSeedsHeader = "index,x,y,mass,weight";
inline constexpr const char* kDiagnosticsHeader = "t,transport_cost,energy,min_separation,max_area_error";

/// Shortest decimal form that round-trips a double.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- config

struct DomainSpec {
    std::string type = "square";  // square | disk | polygon
    double a = 0.0, b = 1.0;      // square [a,b]²
    double area = 1.0;            // disk
    int sides = 256;
    Point2 center;
    std::vector<Point2> vertices;

    ConvexPolygon polygon() const {
        if (type == "square") return make_rectangle(a, a, b, b);
        if (type == "disk") return make_regular_polygon(static_cast<std::size_t>(sides), area, center);
        return ConvexPolygon(vertices);
    }
    Domain build() const { return Domain(polygon()); }
};

struct InitialSpec {
    enum class Source { Density, Explicit, SeedsCsv };
    Source source = Source::Density;
    std::string density_type = "uniform";  // uniform | gaussian | grid
    Point2 center;
    double sigma = 1.0;
    std::string density_csv;
    std::size_t n = 1;
    int lloyd_iterations = 100;
    std::uint64_t rng_seed = 0;
    std::optional<std::pair<int, double>> well_prepare;  // axis, scale
    std::string seeds_csv;
    std::vector<Point2> seeds;
    std::vector<double> masses;
    std::vector<double> weights;
};

struct RunConfig {
    DomainSpec domain;
    InitialSpec initial;
    double T = 1.0;
    double h = 0.01;
    double tol = 0.1;
    int snapshot_every = 0;
    std::vector<double> snapshot_times;
    double sep_floor = 0.0;
    double diagnostics_tol = 0.0;
    std::string output = "sgflow_out";
};

namespace detail {

inline std::size_t line_of(const std::string& text, const std::string& key) {
    if (text.empty()) return 0;
    const auto pos = text.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

struct Reader {
    const std::string& text;

    [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
        const auto leaf = path.substr(path.find_last_of('.') + 1);
        const auto line = line_of(text, leaf);
        throw ConfigError(path, line,
                          "config field '" + path + "'" + (line ? " (line " + std::to_string(line) + ")" : "") +
                              ": " + msg);
    }

    void only_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) const {
        if (!j.is_object()) fail(path, "expected an object");
        for (const auto& [k, v] : j.items()) {
            (void)v;
            if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
                fail(path.empty() ? k : path + "." + k, "unknown key");
        }
    }

    double number(const json& j, const std::string& key, const std::string& path) const {
        if (!j.contains(key)) fail(path, "missing");
        if (!j.at(key).is_number()) fail(path, "expected a number");
        const double v = j.at(key).get<double>();
        if (!std::isfinite(v)) fail(path, "must be finite");
        return v;
    }
    double number_or(const json& j, const std::string& key, const std::string& path, double def) const {
        return j.contains(key) ? number(j, key, path) : def;
    }
    long long integer(const json& j, const std::string& key, const std::string& path) const {
        if (!j.contains(key)) fail(path, "missing");
        if (!j.at(key).is_number_integer()) fail(path, "expected an integer");
        return j.at(key).get<long long>();
    }
    Point2 point(const json& j, const std::string& path) const {
        if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
            fail(path, "expected [x, y]");
        return {j[0].get<double>(), j[1].get<double>()};
    }
    std::vector<Point2> points(const json& j, const std::string& path) const {
        if (!j.is_array()) fail(path, "expected a list of [x, y]");
        std::vector<Point2> out;
        for (std::size_t k = 0; k < j.size(); ++k) out.push_back(point(j[k], path + "[" + std::to_string(k) + "]"));
        return out;
    }
    std::vector<double> numbers(const json& j, const std::string& path) const {
        if (!j.is_array()) fail(path, "expected a list of numbers");
        std::vector<double> out;
        for (const auto& v : j) {
            if (!v.is_number()) fail(path, "expected a list of numbers");
            out.push_back(v.get<double>());
        }
        return out;
    }
    std::string string(const json& j, const std::string& key, const std::string& path) const {
        if (!j.contains(key) || !j.at(key).is_string()) fail(path, "expected a string");
        return j.at(key).get<std::string>();
    }
};

inline std::string resolve(const std::string& p, const fs::path& base) {
    if (p.empty()) return p;
    const fs::path q(p);
    return (q.is_absolute() ? q : base / q).lexically_normal().string();
}

}  // namespace detail

struct SeedsTable {
    DiscreteMeasure measure;
    WeightVector weights;
};

inline SeedsTable read_seeds_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("initial.seeds_csv", 0, "cannot open seeds file " + path);
    std::string line;
    if (!std::getline(f, line) || line.substr(0, line.find_last_not_of("\r") + 1) != kSeedsHeader)
        throw ConfigError("initial.seeds_csv", 1, "seeds file must start with header '" + std::string(kSeedsHeader) + "'");
    SeedsTable t;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::vector<double> v;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str()) throw ConfigError("initial.seeds_csv", line_no, "malformed number in " + path);
            v.push_back(x);
        }
        if (v.size() != 5) throw ConfigError("initial.seeds_csv", line_no, "expected 5 columns in " + path);
        if (static_cast<std::size_t>(v[0]) != t.measure.size())
            throw ConfigError("initial.seeds_csv", line_no, "indices must be consecutive from 0");
        t.measure.seeds.push_back({v[1], v[2]});
        t.measure.masses.push_back(v[3]);
        t.weights.values.push_back(v[4]);
    }
    return t;
}

inline void write_seeds_csv(const std::string& path, const DiscreteMeasure& nu, const WeightVector& w) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << kSeedsHeader << '\n';
    for (std::size_t i = 0; i < nu.size(); ++i)
        f << i << ',' << fmt17(nu.seeds[i].x) << ',' << fmt17(nu.seeds[i].y) << ',' << fmt17(nu.masses[i]) << ','
          << fmt17(i < w.size() ? w[i] : 0.0) << '\n';
}

inline std::string diagnostics_row(const Diagnostics& d) {
    return fmt17(d.t) + ',' + fmt17(d.transport_cost) + ',' + fmt17(d.energy) + ',' + fmt17(d.min_separation) + ',' +
           fmt17(d.max_area_error);
}

inline DomainSpec parse_domain(const json& j, const detail::Reader& rd) {
    DomainSpec d;
    if (!j.is_object()) rd.fail("domain", "expected an object");
    d.type = rd.string(j, "type", "domain.type");
    if (d.type == "square") {
        rd.only_keys(j, "domain", {"type", "a", "b"});
        d.a = rd.number_or(j, "a", "domain.a", 0.0);
        d.b = rd.number_or(j, "b", "domain.b", 1.0);
        if (!(d.b > d.a)) rd.fail("domain.b", "must exceed domain.a");
    } else if (d.type == "disk") {
        rd.only_keys(j, "domain", {"type", "area", "sides", "center"});
        d.area = rd.number_or(j, "area", "domain.area", 1.0);
        if (!(d.area > 0.0)) rd.fail("domain.area", "must be positive");
        if (j.contains("sides")) d.sides = static_cast<int>(rd.integer(j, "sides", "domain.sides"));
        if (d.sides < 3) rd.fail("domain.sides", "must be >= 3");
        if (j.contains("center")) d.center = rd.point(j.at("center"), "domain.center");
    } else if (d.type == "polygon") {
        rd.only_keys(j, "domain", {"type", "vertices"});
        if (!j.contains("vertices")) rd.fail("domain.vertices", "missing");
        d.vertices = rd.points(j.at("vertices"), "domain.vertices");
    } else {
        rd.fail("domain.type", "expected square, disk or polygon");
    }
    try {
        (void)d.build();
    } catch (const Error& e) {
        rd.fail(d.type == "polygon" ? "domain.vertices" : "domain", e.what());
    }
    return d;
}

inline InitialSpec parse_initial(const json& j, const detail::Reader& rd, const fs::path& base, const Domain& dom) {
    InitialSpec s;
    rd.only_keys(j, "initial", {"density", "n", "lloyd_iterations", "rng_seed", "well_prepare", "seeds", "masses",
                                "weights", "seeds_csv"});
    if (j.contains("rng_seed")) {
        const auto& v = j.at("rng_seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            rd.fail("initial.rng_seed", "expected a non-negative integer");
        s.rng_seed = v.get<std::uint64_t>();
    }
    const int sources = int(j.contains("density")) + int(j.contains("seeds")) + int(j.contains("seeds_csv"));
    if (sources != 1) rd.fail("initial", "exactly one of density, seeds, seeds_csv is required");

    if (j.contains("density")) {
        s.source = InitialSpec::Source::Density;
        const auto& d = j.at("density");
        rd.only_keys(d, "initial.density", {"type", "center", "sigma", "csv"});
        s.density_type = rd.string(d, "type", "initial.density.type");
        if (s.density_type == "gaussian") {
            if (d.contains("center")) s.center = rd.point(d.at("center"), "initial.density.center");
            s.sigma = rd.number(d, "sigma", "initial.density.sigma");
            if (!(s.sigma > 0.0)) rd.fail("initial.density.sigma", "must be positive");
        } else if (s.density_type == "grid") {
            s.density_csv = detail::resolve(rd.string(d, "csv", "initial.density.csv"), base);
            (void)load_grid_csv(s.density_csv);
        } else if (s.density_type != "uniform") {
            rd.fail("initial.density.type", "expected uniform, gaussian or grid");
        }
        const long long n = rd.integer(j, "n", "initial.n");
        if (n < 1) rd.fail("initial.n", "must be >= 1");
        s.n = static_cast<std::size_t>(n);
        if (j.contains("lloyd_iterations")) {
            const long long it = rd.integer(j, "lloyd_iterations", "initial.lloyd_iterations");
            if (it < 0) rd.fail("initial.lloyd_iterations", "must be >= 0");
            s.lloyd_iterations = static_cast<int>(it);
        }
        if (j.contains("well_prepare")) {
            const auto& w = j.at("well_prepare");
            rd.only_keys(w, "initial.well_prepare", {"axis", "scale"});
            const long long axis = rd.integer(w, "axis", "initial.well_prepare.axis");
            const double scale = rd.number(w, "scale", "initial.well_prepare.scale");
            if (axis != 0 && axis != 1) rd.fail("initial.well_prepare.axis", "must be 0 or 1");
            if (!(scale > 0.0)) rd.fail("initial.well_prepare.scale", "must be positive");
            s.well_prepare = std::make_pair(static_cast<int>(axis), scale);
        }
        for (const char* k : {"masses", "weights"})
            if (j.contains(k)) rd.fail(std::string("initial.") + k, "only allowed with explicit seeds");
        return s;
    }

    for (const char* k : {"n", "lloyd_iterations", "well_prepare"})
        if (j.contains(k)) rd.fail(std::string("initial.") + k, "only allowed with a density");
    if (j.contains("seeds_csv")) {
        if (j.contains("masses") || j.contains("weights"))
            rd.fail("initial.seeds_csv", "masses and weights come from the file");
        s.source = InitialSpec::Source::SeedsCsv;
        s.seeds_csv = detail::resolve(rd.string(j, "seeds_csv", "initial.seeds_csv"), base);
        auto t = read_seeds_csv(s.seeds_csv);
        s.seeds = std::move(t.measure.seeds);
        s.masses = std::move(t.measure.masses);
        s.weights = std::move(t.weights.values);
    } else {
        s.source = InitialSpec::Source::Explicit;
        s.seeds = rd.points(j.at("seeds"), "initial.seeds");
        if (j.contains("masses")) {
            s.masses = rd.numbers(j.at("masses"), "initial.masses");
        } else {
            s.masses.assign(s.seeds.size(), dom.area() / static_cast<double>(std::max<std::size_t>(1, s.seeds.size())));
        }
        if (j.contains("weights")) s.weights = rd.numbers(j.at("weights"), "initial.weights");
    }
    const std::string where = s.source == InitialSpec::Source::SeedsCsv ? "initial.seeds_csv" : "initial.masses";
    if (s.seeds.empty()) rd.fail("initial.seeds", "need at least one seed");
    if (s.masses.size() != s.seeds.size()) rd.fail(where, "one mass per seed required");
    if (!s.weights.empty() && s.weights.size() != s.seeds.size()) rd.fail("initial.weights", "one weight per seed required");
    try {
        DiscreteMeasure{s.seeds, s.masses}.validate(dom.area(), 1e-9);
    } catch (const Error& e) {
        rd.fail(where, e.what());
    }
    return s;
}

/// Parses and validates a JSON run configuration. A run manifest is accepted
/// too (its "config" member is used). Relative file paths resolve against `base`.
inline RunConfig parse_config(const std::string& text, const fs::path& base = ".") {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n')) + 1;
        throw ConfigError("", line, "config is not valid JSON (line " + std::to_string(line) + "): " + e.what());
    }
    const detail::Reader rd{text};
    if (root.is_object() && root.contains("sgflow_version") && root.contains("config")) root = root.at("config");
    rd.only_keys(root, "", {"domain", "initial", "T", "h", "tol", "snapshot_every", "snapshot_times", "sep_floor",
                            "diagnostics_tol", "output"});
    RunConfig c;
    if (!root.contains("domain")) rd.fail("domain", "missing");
    c.domain = parse_domain(root.at("domain"), rd);
    const Domain dom = c.domain.build();
    if (!root.contains("initial")) rd.fail("initial", "missing");
    c.initial = parse_initial(root.at("initial"), rd, base, dom);

    c.T = rd.number(root, "T", "T");
    if (!(c.T > 0.0)) rd.fail("T", "must be positive");
    c.h = rd.number(root, "h", "h");
    if (!(c.h > 0.0)) rd.fail("h", "must be positive");
    if (c.h > c.T) rd.fail("h", "must not exceed T");
    c.tol = rd.number_or(root, "tol", "tol", c.tol);
    if (!(c.tol > 0.0)) rd.fail("tol", "must be positive");
    if (root.contains("snapshot_every")) {
        const long long k = rd.integer(root, "snapshot_every", "snapshot_every");
        if (k < 0) rd.fail("snapshot_every", "must be >= 0");
        c.snapshot_every = static_cast<int>(k);
    }
    if (root.contains("snapshot_times")) {
        c.snapshot_times = rd.numbers(root.at("snapshot_times"), "snapshot_times");
        for (double t : c.snapshot_times)
            if (t < 0.0 || t > c.T) rd.fail("snapshot_times", "times must lie in [0, T]");
    }
    c.sep_floor = rd.number_or(root, "sep_floor", "sep_floor", 0.0);
    if (c.sep_floor < 0.0) rd.fail("sep_floor", "must be >= 0");
    c.diagnostics_tol = rd.number_or(root, "diagnostics_tol", "diagnostics_tol", 0.0);
    if (c.diagnostics_tol < 0.0) rd.fail("diagnostics_tol", "must be >= 0");
    if (root.contains("output")) c.output = rd.string(root, "output", "output");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("", 0, "cannot open config " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), fs::path(path).parent_path().empty() ? fs::path(".") : fs::path(path).parent_path());
}

inline json to_json(Point2 p) { return json::array({p.x, p.y}); }

inline json to_json(const DomainSpec& d) {
    json j{{"type", d.type}};
    if (d.type == "square") {
        j["a"] = d.a;
        j["b"] = d.b;
    } else if (d.type == "disk") {
        j["area"] = d.area;
        j["sides"] = d.sides;
        j["center"] = to_json(d.center);
    } else {
        j["vertices"] = json::array();
        for (auto p : d.vertices) j["vertices"].push_back(to_json(p));
    }
    return j;
}

/// Complete config echo, defaults filled in; parse_config(to_json(c)) == c.
inline json to_json(const RunConfig& c) {
    json init;
    const auto& s = c.initial;
    init["rng_seed"] = s.rng_seed;
    switch (s.source) {
        case InitialSpec::Source::Density: {
            json d{{"type", s.density_type}};
            if (s.density_type == "gaussian") {
                d["center"] = to_json(s.center);
                d["sigma"] = s.sigma;
            }
            if (s.density_type == "grid") d["csv"] = fs::absolute(s.density_csv).string();
            init["density"] = d;
            init["n"] = s.n;
            init["lloyd_iterations"] = s.lloyd_iterations;
            if (s.well_prepare) init["well_prepare"] = {{"axis", s.well_prepare->first}, {"scale", s.well_prepare->second}};
            break;
        }
        case InitialSpec::Source::SeedsCsv:
            init["seeds_csv"] = fs::absolute(s.seeds_csv).string();
            break;
        case InitialSpec::Source::Explicit: {
            init["seeds"] = json::array();
            for (auto p : s.seeds) init["seeds"].push_back(to_json(p));
            init["masses"] = s.masses;
            if (!s.weights.empty()) init["weights"] = s.weights;
            break;
        }
    }
    return json{{"domain", to_json(c.domain)}, {"initial", init},       {"T", c.T},
                {"h", c.h},                    {"tol", c.tol},          {"snapshot_every", c.snapshot_every},
                {"snapshot_times", c.snapshot_times}, {"sep_floor", c.sep_floor},
                {"diagnostics_tol", c.diagnostics_tol}, {"output", c.output}};
}

struct InitialData {
    DiscreteMeasure measure;
    WeightVector weights;
};

inline DensitySpec density_of(const InitialSpec& s) {
    if (s.density_type == "gaussian") return DensitySpec::gaussian(s.center, s.sigma);
    if (s.density_type == "grid") return DensitySpec::from_grid(load_grid_csv(s.density_csv));
    return DensitySpec::uniform();
}

inline InitialData make_initial(const RunConfig& c, const Domain& dom) {
    InitialData out;
    const auto& s = c.initial;
    if (s.source == InitialSpec::Source::Density) {
        out.measure = lloyd_quantize(density_of(s), dom, s.n, s.lloyd_iterations, s.rng_seed);
        if (s.well_prepare) out.measure = well_prepare(out.measure, s.well_prepare->first, s.well_prepare->second);
        out.weights = WeightVector(out.measure.size());
    } else {
        out.measure = {s.seeds, s.masses};
        out.weights = s.weights.empty() ? WeightVector(s.seeds.size()) : WeightVector(s.weights);
    }
    return out;
}

inline SimulationOptions simulation_options(const RunConfig& c) {
    SimulationOptions o;
    o.T = c.T;
    o.h = c.h;
    o.tol = c.tol;
    o.snapshot_every = c.snapshot_every;
    o.snapshot_times = c.snapshot_times;
    o.sep_floor = c.sep_floor;
    o.diagnostics_tol = c.diagnostics_tol;
    return o;
}

// ---------------------------------------------------------------- SVG

struct SvgStyle {
    int width_px = 800;
    bool draw_centroids = true;
    bool draw_seeds = true;
};

namespace detail {

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string path_d(const ConvexPolygon& p) {
    std::string d;
    for (std::size_t k = 0; k < p.size(); ++k)
        d += (k ? " L " : "M ") + num(p[k].x) + ' ' + num(p[k].y);
    return d + " Z";
}

// blue (small cells) to yellow (large cells)
inline std::string ramp(double s) {
    s = std::clamp(s, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(33 + s * (253 - 33)));
    const int g = static_cast<int>(std::lround(102 + s * (231 - 102)));
    const int b = static_cast<int>(std::lround(172 + s * (37 - 172)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace detail

inline std::string render_svg(const Domain& domain, const LaguerreDiagram& d, const DiscreteMeasure& nu,
                              const SvgStyle& style = {}) {
    const Point2 lo = domain.bbox_min(), hi = domain.bbox_max();
    const double mx = 0.05 * (hi.x - lo.x), my = 0.05 * (hi.y - lo.y);
    const double x0 = lo.x - mx, y1 = hi.y + my;
    const double w = hi.x - lo.x + 2 * mx, h = hi.y - lo.y + 2 * my;
    const int height_px = static_cast<int>(std::lround(style.width_px * h / w));

    double amin = std::numeric_limits<double>::infinity(), amax = 0.0;
    for (double a : d.areas)
        if (a > 0.0) {
            amin = std::min(amin, a);
            amax = std::max(amax, a);
        }
    const double span = amax > amin ? amax - amin : 1.0;
    const double n = static_cast<double>(std::max<std::size_t>(1, nu.size()));
    const double r_seed = 0.12 * std::sqrt(domain.area() / n);
    const double r_cent = 0.22 * std::sqrt(domain.area() / n);

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width_px << "\" height=\"" << height_px
      << "\" viewBox=\"" << detail::num(x0) << ' ' << detail::num(-y1) << ' ' << detail::num(w) << ' '
      << detail::num(h) << "\">\n"
      << "<g transform=\"scale(1,-1)\" stroke-linejoin=\"round\">\n";
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.cells[i].empty()) continue;
        o << "<path class=\"cell\" data-index=\"" << i << "\" d=\"" << detail::path_d(d.cells[i]) << "\" fill=\""
          << detail::ramp((d.areas[i] - amin) / span)
          << "\" stroke=\"black\" stroke-width=\"0.6\" vector-effect=\"non-scaling-stroke\"/>\n";
    }
    o << "<path class=\"domain\" d=\"" << detail::path_d(domain.polygon())
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\"/>\n";
    if (style.draw_centroids)
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (d.cells[i].empty()) continue;
            o << "<circle class=\"centroid\" cx=\"" << detail::num(d.centroids[i].x) << "\" cy=\""
              << detail::num(d.centroids[i].y) << "\" r=\"" << detail::num(r_cent)
              << "\" fill=\"none\" stroke=\"black\" stroke-width=\"0.6\" vector-effect=\"non-scaling-stroke\"/>\n";
        }
    if (style.draw_seeds)
        for (std::size_t i = 0; i < nu.size(); ++i)
            o << "<circle class=\"seed\" cx=\"" << detail::num(nu.seeds[i].x) << "\" cy=\""
              << detail::num(nu.seeds[i].y) << "\" r=\"" << detail::num(r_seed) << "\" fill=\"black\"/>\n";
    o << "</g>\n</svg>\n";
    return o.str();
}

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p);
    if (!f) throw Error("cannot write " + p.string());
    f << s;
}

// ---------------------------------------------------------------- run

inline std::string snapshot_name(const char* stem, std::size_t k, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, k, ext);
    return buf;
}

inline fs::path output_dir(const RunConfig& c) {
    if (const char* env = std::getenv("SGFLOW_OUTPUT_DIR"); env && *env) return env;
    return c.output;
}

inline json library_versions() {
    return {{"sgflow", SGFLOW_VERSION},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

/// Exit codes: 0 success, 3 simulation stopped early (partial artifacts kept).
inline int run(const RunConfig& cfg, std::ostream& log = std::cerr) {
    const Domain dom = cfg.domain.build();
    const auto t_start = std::chrono::steady_clock::now();
    const InitialData init = make_initial(cfg, dom);

    const fs::path dir = output_dir(cfg);
    fs::create_directories(dir);
    json manifest{{"sgflow_version", SGFLOW_VERSION},
                  {"versions", library_versions()},
                  {"config", to_json(cfg)},
                  {"rng_seed", cfg.initial.rng_seed},
                  {"n", init.measure.size()},
                  {"status", "running"}};
    const auto write_manifest = [&] { write_text(dir / "run_manifest.json", manifest.dump(2) + "\n"); };
    write_manifest();

    std::ofstream diag(dir / "diagnostics.csv");
    if (!diag) throw Error("cannot write diagnostics.csv");
    diag << kDiagnosticsHeader << '\n';
    std::size_t snap = 0;
    manifest["snapshots"] = json::array();
    const auto observer = [&](const SimulationState& s, bool is_snapshot) {
        diag << diagnostics_row(s.diagnostics) << '\n';
        if (!is_snapshot) return;
        const auto csv = snapshot_name("seeds", snap, "csv");
        const auto svg = snapshot_name("snapshot", snap, "svg");
        write_seeds_csv((dir / csv).string(), s.measure, s.warm_weights);
        write_text(dir / svg, render_svg(dom, build_diagram(dom, s.measure, s.warm_weights), s.measure));
        manifest["snapshots"].push_back({{"index", snap}, {"t", s.t}, {"seeds", csv}, {"svg", svg}});
        diag.flush();
        log << "snapshot " << snap << " t=" << s.t << " cost=" << fmt17(s.diagnostics.transport_cost) << '\n';
        ++snap;
    };
    const auto traj = simulate(dom, init.measure, init.weights, simulation_options(cfg), observer);
    diag.close();

    manifest["steps"] = traj.steps;
    manifest["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (traj.ok) {
        manifest["status"] = "ok";
    } else {
        manifest["status"] = "failed";
        manifest["error"] = traj.error;
        manifest["error_kind"] = traj.error_kind;
        log << "simulation stopped: " << traj.error << '\n';
    }
    write_manifest();
    return traj.ok ? 0 : 3;
}

/// Renders a seeds CSV; the domain comes from the run manifest next to it
/// unless a config is given.
inline void render_file(const std::string& seeds_csv, const std::string& out_svg,
                        const std::optional<std::string>& config_path = std::nullopt) {
    DomainSpec ds;
    if (config_path) {
        ds = load_config(*config_path).domain;
    } else {
        const fs::path manifest = fs::path(seeds_csv).parent_path() / "run_manifest.json";
        std::ifstream f(manifest);
        if (!f) throw ConfigError("", 0, "no run_manifest.json next to " + seeds_csv + "; pass --config");
        std::stringstream ss;
        ss << f.rdbuf();
        const auto text = ss.str();
        const json j = json::parse(text);
        ds = parse_domain(j.at("config").at("domain"), detail::Reader{text});
    }
    const Domain dom = ds.build();
    const auto t = read_seeds_csv(seeds_csv);
    write_text(out_svg, render_svg(dom, build_diagram(dom, t.measure, t.weights), t.measure));
}

}  // namespace sgflow
