#pragma once

// Quantization of a density on a convex support into a discrete measure
// (Lloyd's algorithm) and the distinct-coordinate perturbation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sgflow/errors.hpp"
#include "sgflow/geom2d.hpp"
#include "sgflow/laguerre.hpp"

namespace sgflow {

/// Samples on a rectangular lattice, bilinearly interpolated; zero outside.
struct GridTable {
    std::vector<double> xs;      // strictly increasing
    std::vector<double> ys;      // strictly increasing
    std::vector<double> values;  // values[iy * xs.size() + ix]

    double at(std::size_t ix, std::size_t iy) const { return values[iy * xs.size() + ix]; }

    double operator()(Point2 p) const {
        if (xs.size() < 2 || ys.size() < 2) return 0.0;
        if (p.x < xs.front() || p.x > xs.back() || p.y < ys.front() || p.y > ys.back()) return 0.0;
        const auto ix = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(std::upper_bound(xs.begin(), xs.end(), p.x) - xs.begin() - 1, 0,
                                       static_cast<std::ptrdiff_t>(xs.size()) - 2));
        const auto iy = static_cast<std::size_t>(
            std::clamp<std::ptrdiff_t>(std::upper_bound(ys.begin(), ys.end(), p.y) - ys.begin() - 1, 0,
                                       static_cast<std::ptrdiff_t>(ys.size()) - 2));
        const double tx = (p.x - xs[ix]) / (xs[ix + 1] - xs[ix]);
        const double ty = (p.y - ys[iy]) / (ys[iy + 1] - ys[iy]);
        return (1 - tx) * (1 - ty) * at(ix, iy) + tx * (1 - ty) * at(ix + 1, iy) +
               (1 - tx) * ty * at(ix, iy + 1) + tx * ty * at(ix + 1, iy + 1);
    }

    double max_value() const { return *std::max_element(values.begin(), values.end()); }
};

/// Parses rows of `x,y,value` (an optional non-numeric header line is
/// skipped). The rows must cover a complete rectangular lattice.
inline GridTable parse_grid_csv(std::istream& in) {
    struct Row { double x, y, v; };
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        Row r{};
        if (!(ss >> r.x >> r.y >> r.v)) {
            if (rows.empty() && line_no == 1) continue;
            throw ConfigError("density.csv", line_no, "malformed density row");
        }
        if (!(r.v >= 0.0)) throw ConfigError("density.csv", line_no, "density values must be >= 0");
        rows.push_back(r);
    }
    GridTable t;
    for (const auto& r : rows) { t.xs.push_back(r.x); t.ys.push_back(r.y); }
    std::sort(t.xs.begin(), t.xs.end());
    t.xs.erase(std::unique(t.xs.begin(), t.xs.end()), t.xs.end());
    std::sort(t.ys.begin(), t.ys.end());
    t.ys.erase(std::unique(t.ys.begin(), t.ys.end()), t.ys.end());
    if (t.xs.size() < 2 || t.ys.size() < 2 || rows.size() != t.xs.size() * t.ys.size())
        throw ConfigError("density.csv", 0, "density samples do not form a complete lattice");
    t.values.assign(rows.size(), std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) {
        const auto ix = static_cast<std::size_t>(std::lower_bound(t.xs.begin(), t.xs.end(), r.x) - t.xs.begin());
        const auto iy = static_cast<std::size_t>(std::lower_bound(t.ys.begin(), t.ys.end(), r.y) - t.ys.begin());
        t.values[iy * t.xs.size() + ix] = r.v;
    }
    for (double v : t.values)
        if (std::isnan(v)) throw ConfigError("density.csv", 0, "duplicate lattice point in density");
    return t;
}

inline GridTable load_grid_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("density.csv", 0, "cannot open density file " + path);
    return parse_grid_csv(f);
}

struct DensitySpec {
    enum class Kind { Uniform, Gaussian, Grid };
    Kind kind = Kind::Uniform;
    /// Gaussian: exp(-|x - center|² / (2 sigma²))
    Point2 center;
    double sigma = 1.0;
    GridTable grid;

    static DensitySpec uniform() { return {}; }
    static DensitySpec gaussian(Point2 c, double s) {
        DensitySpec d;
        d.kind = Kind::Gaussian;
        d.center = c;
        d.sigma = s;
        return d;
    }
    static DensitySpec from_grid(GridTable t) {
        DensitySpec d;
        d.kind = Kind::Grid;
        d.grid = std::move(t);
        return d;
    }

    double operator()(Point2 p) const {
        switch (kind) {
            case Kind::Uniform: return 1.0;
            case Kind::Gaussian: return std::exp(-norm2(p - center) / (2.0 * sigma * sigma));
            case Kind::Grid: return grid(p);
        }
        return 0.0;
    }

    /// Upper bound used for rejection sampling.
    double upper_bound() const {
        switch (kind) {
            case Kind::Uniform: return 1.0;
            case Kind::Gaussian: return 1.0;
            case Kind::Grid: return grid.max_value();
        }
        return 1.0;
    }
};

struct DensityMoments {
    double mass = 0.0;
    Point2 weighted_centroid;
    /// ∫ ρ |x - ref|² dx
    double second_moment = 0.0;
};

namespace detail {

// Symmetric degree-6 rule on the reference triangle (12 points).
struct TrianglePoint { double a, b, c, w; };
inline constexpr std::array<TrianglePoint, 12> kTriangleRule6 = {{
    {0.501426509658179, 0.249286745170910, 0.249286745170910, 0.116786275726379},
    {0.249286745170910, 0.501426509658179, 0.249286745170910, 0.116786275726379},
    {0.249286745170910, 0.249286745170910, 0.501426509658179, 0.116786275726379},
    {0.873821971016996, 0.063089014491502, 0.063089014491502, 0.050844906370207},
    {0.063089014491502, 0.873821971016996, 0.063089014491502, 0.050844906370207},
    {0.063089014491502, 0.063089014491502, 0.873821971016996, 0.050844906370207},
    {0.053145049844817, 0.310352451033784, 0.636502499121399, 0.082851075618374},
    {0.310352451033784, 0.053145049844817, 0.636502499121399, 0.082851075618374},
    {0.636502499121399, 0.053145049844817, 0.310352451033784, 0.082851075618374},
    {0.053145049844817, 0.636502499121399, 0.310352451033784, 0.082851075618374},
    {0.310352451033784, 0.636502499121399, 0.053145049844817, 0.082851075618374},
    {0.636502499121399, 0.310352451033784, 0.053145049844817, 0.082851075618374},
}};

}  // namespace detail

/// Mass, density-weighted centroid and second moment (about `ref`) of a
/// cell. Uniform densities are integrated exactly; other densities use a
/// fan triangulation with the degree-6 rule. Empty cells give mass 0.
inline DensityMoments density_cell_moments(const DensitySpec& rho, const ConvexPolygon& cell,
                                           Point2 ref = {}) {
    DensityMoments out;
    if (cell.empty()) return out;
    if (rho.kind == DensitySpec::Kind::Uniform) {
        const auto m = polygon_moments(cell, ref);
        out.mass = m.area;
        out.weighted_centroid = m.centroid;
        out.second_moment = m.second_moment;
        return out;
    }
    double mass = 0.0, mx = 0.0, my = 0.0, m2 = 0.0;
    const Point2 o = cell[0];
    for (std::size_t k = 1; k + 1 < cell.size(); ++k) {
        const Point2 b = cell[k];
        const Point2 c = cell[k + 1];
        const double area = 0.5 * cross(b - o, c - o);
        for (const auto& q : detail::kTriangleRule6) {
            const Point2 x = q.a * o + q.b * b + q.c * c;
            const double f = q.w * area * rho(x);
            mass += f;
            mx += f * (x.x - ref.x);
            my += f * (x.y - ref.y);
            m2 += f * norm2(x - ref);
        }
    }
    out.mass = mass;
    out.second_moment = m2;
    out.weighted_centroid = mass > 0.0 ? ref + Point2{mx / mass, my / mass} : ref;
    return out;
}

/// Per-operation random streams derived from one user seed.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

inline Point2 sample_density(const DensitySpec& rho, const Domain& support, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(support.bbox_min().x, support.bbox_max().x);
    std::uniform_real_distribution<double> uy(support.bbox_min().y, support.bbox_max().y);
    std::uniform_real_distribution<double> uv(0.0, rho.upper_bound());
    for (long tries = 0; tries < 100000000L; ++tries) {
        const Point2 p{ux(rng), uy(rng)};
        if (!support.polygon().contains(p)) continue;
        if (uv(rng) < rho(p)) return p;
    }
    throw Error("rejection sampling failed: density has no mass on the support");
}

struct LloydOptions {
    int iterations = 100;
    /// Stop early once every seed moves less than this in one iteration (0 disables).
    double displacement_tol = 0.0;
    std::uint64_t rng_seed = 0;
};

struct LloydResult {
    DiscreteMeasure measure;
    /// Σ_i ∫_{V_i} ρ |x - z_i|² at the start of every iteration, then at the end.
    std::vector<double> energy_history;
    int iterations = 0;
    double last_displacement = 0.0;
    int reseeded = 0;
};

/// Lloyd quantization of `rho` on `support` with n seeds. Output masses are
/// the density masses of the final Voronoi cells, rescaled to sum to area(Ω).
inline LloydResult lloyd_quantize_detailed(const DensitySpec& rho, const Domain& support,
                                           std::size_t n, const LloydOptions& opt) {
    if (n == 0) throw Error("lloyd_quantize: n must be >= 1");
    auto init_rng = make_stream(opt.rng_seed, 0);
    auto reseed_rng = make_stream(opt.rng_seed, 1);
    const double min_gap = 1e-9 * support.diameter();

    std::vector<Point2> z;
    z.reserve(n);
    while (z.size() < n) {
        const Point2 p = sample_density(rho, support, init_rng);
        const bool clash = std::any_of(z.begin(), z.end(), [&](Point2 q) { return distance(p, q) < min_gap; });
        if (!clash) z.push_back(p);
    }

    LloydResult res;
    const std::vector<double> zero(n, 0.0);
    std::vector<DensityMoments> mom(n);
    const auto measure_cells = [&](const LaguerreDiagram& d) {
        double e = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mom[i] = density_cell_moments(rho, d.cells[i], z[i]);
            e += mom[i].second_moment;
        }
        return e;
    };

    for (int it = 0; it < opt.iterations; ++it) {
        const auto d = build_diagram(support, z, zero);
        res.energy_history.push_back(measure_cells(d));
        double disp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Point2 next = mom[i].weighted_centroid;
            if (!(mom[i].mass > 0.0)) {
                next = sample_density(rho, support, reseed_rng);
                ++res.reseeded;
            }
            disp = std::max(disp, distance(next, z[i]));
            z[i] = next;
        }
        res.iterations = it + 1;
        res.last_displacement = disp;
        if (opt.displacement_tol > 0.0 && disp < opt.displacement_tol) break;
    }

    const auto d = build_diagram(support, z, zero);
    res.energy_history.push_back(measure_cells(d));
    res.measure.seeds = z;
    res.measure.masses.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(mom[i].mass > 0.0))
            throw Error("lloyd_quantize: final Voronoi cell " + std::to_string(i) + " carries no mass");
        res.measure.masses[i] = mom[i].mass;
        total += mom[i].mass;
    }
    const double scale = support.area() / total;
    double partial = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        res.measure.masses[i] *= scale;
        partial += res.measure.masses[i];
    }
    res.measure.masses[n - 1] = support.area() - partial;
    return res;
}

inline DiscreteMeasure lloyd_quantize(const DensitySpec& rho, const Domain& support, std::size_t n,
                                      int iterations, std::uint64_t rng_seed) {
    LloydOptions opt;
    opt.iterations = iterations;
    opt.rng_seed = rng_seed;
    return lloyd_quantize_detailed(rho, support, n, opt).measure;
}

/// Perturbs seeds along `axis` (0 = x, 1 = y) so that their coordinates are
/// pairwise distinct. No seed moves by min(scale, 1/N) or more; masses are
/// untouched. Already-distinct input is returned unchanged.
inline DiscreteMeasure well_prepare(const DiscreteMeasure& nu, int axis, double scale) {
    if (!(scale > 0.0)) throw Error("well_prepare: scale must be positive");
    if (axis != 0 && axis != 1) throw Error("well_prepare: axis must be 0 or 1");
    const std::size_t n = nu.size();
    DiscreteMeasure out = nu;
    if (n < 2) return out;
    const auto coord = [axis](Point2& p) -> double& { return axis == 0 ? p.x : p.y; };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return coord(out.seeds[a]) < coord(out.seeds[b]);
    });

    double extent = 0.0;
    for (const auto& p : nu.seeds) extent = std::max(extent, std::abs(axis == 0 ? p.x : p.y));
    // separation that is still resolvable after arithmetic on the coordinates
    const double tiny = 1e-12 * std::max(1.0, extent);
    const double bound = std::min(scale, 1.0 / static_cast<double>(n));
    const double step = bound / (2.0 * static_cast<double>(n));

    // cumulative pushes along the sorted order; each seed moves at most (n-1)·step < bound/2
    double prev = coord(out.seeds[order[0]]);
    for (std::size_t k = 1; k < n; ++k) {
        double& c = coord(out.seeds[order[k]]);
        if (c < prev + tiny) c = prev + std::max(step, tiny);
        prev = c;
    }
    return out;
}

}  // namespace sgflow
