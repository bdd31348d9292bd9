#pragma once

// Laguerre (power) diagrams of weighted seeds, clipped to a convex domain.
//
// Cell i is the domain cut by the power bisectors
//     2 x·(z_j - z_i) <= |z_j|² - |z_i|² + w_i - w_j,   j != i.
// Each cell is built independently by clipping against nearby seeds visited
// in growing rings of a uniform grid; the visit stops once no unvisited seed
// can reach the cell (power-distance bound).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sgflow/errors.hpp"
#include "sgflow/geom2d.hpp"

namespace sgflow {

/// α = Σ m_i δ_{z_i}
struct DiscreteMeasure {
    std::vector<Point2> seeds;
    std::vector<double> masses;

    std::size_t size() const { return seeds.size(); }
    double total_mass() const {
        double s = 0.0;
        for (double m : masses) s += m;
        return s;
    }
    double min_mass() const { return *std::min_element(masses.begin(), masses.end()); }

    /// Throws Error unless N >= 1, sizes agree, masses are positive and sum
    /// to `domain_area` within `rel_tol`.
    void validate(double domain_area, double rel_tol = 1e-10) const {
        if (seeds.empty()) throw Error("discrete measure needs at least one seed");
        if (seeds.size() != masses.size()) throw Error("seed and mass counts differ");
        for (auto p : seeds)
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("non-finite seed");
        for (double m : masses)
            if (!(m > 0.0)) throw Error("masses must be positive");
        if (std::abs(total_mass() - domain_area) > rel_tol * domain_area)
            throw Error("total mass must equal the domain area");
    }
};

/// Kantorovich weights. Optimal weights are normalized so the last entry is 0.
struct WeightVector {
    std::vector<double> values;

    WeightVector() = default;
    explicit WeightVector(std::size_t n, double v = 0.0) : values(n, v) {}
    explicit WeightVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    /// Shift so that the last entry is exactly zero (cells are unchanged).
    void normalize() {
        if (values.empty()) return;
        const double last = values.back();
        for (double& w : values) w -= last;
        values.back() = 0.0;
    }
};

struct DualEdge {
    std::size_t i = 0;  // i < j
    std::size_t j = 0;
    double interface_length = 0.0;
    double seed_distance = 0.0;
};

struct LaguerreDiagram {
    std::vector<ConvexPolygon> cells;
    std::vector<double> areas;
    std::vector<Point2> centroids;
    /// ∫_{C_i} |x - z_i|² dx
    std::vector<double> second_moments;
    /// sorted by (i, j)
    std::vector<DualEdge> adjacency;

    std::size_t size() const { return cells.size(); }
    double min_area() const { return *std::min_element(areas.begin(), areas.end()); }
};

struct DiagramOptions {
    /// Cells below this fraction of the domain area are treated as empty.
    double sliver_area_rel = 1e-14;
    /// Vertex merge and short-interface threshold, relative to diam(Ω).
    double length_rel = 1e-12;
    /// Seeds closer than this fraction of diam(Ω) are rejected.
    double coincidence_rel = 1e-12;
    /// Disable to clip every cell against every other seed (brute force).
    bool use_grid = true;
};

namespace detail {

struct SeedGrid {
    Point2 origin;
    double cell = 1.0;
    long nx = 1;
    long ny = 1;
    std::vector<std::size_t> start;  // CSR offsets, size nx*ny+1
    std::vector<std::size_t> items;

    SeedGrid(std::span<const Point2> seeds, double min_cell) {
        Point2 lo = seeds[0], hi = seeds[0];
        for (auto p : seeds) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
        const double n = static_cast<double>(seeds.size());
        // keep the aspect ratio bounded so collinear seeds do not produce
        // thousands of empty rings
        const double span = std::max({hi.x - lo.x, hi.y - lo.y, min_cell});
        const double ex = std::max(hi.x - lo.x, 1e-3 * span);
        const double ey = std::max(hi.y - lo.y, 1e-3 * span);
        cell = std::max(std::sqrt(ex * ey / n), min_cell);
        nx = std::clamp(static_cast<long>(std::ceil(ex / cell)), 1L, 4096L);
        ny = std::clamp(static_cast<long>(std::ceil(ey / cell)), 1L, 4096L);
        cell = std::max(ex / static_cast<double>(nx), ey / static_cast<double>(ny));
        origin = lo;

        std::vector<std::size_t> count(static_cast<std::size_t>(nx * ny) + 1, 0);
        std::vector<long> slot(seeds.size());
        for (std::size_t i = 0; i < seeds.size(); ++i) {
            slot[i] = index(cx(seeds[i]), cy(seeds[i]));
            ++count[static_cast<std::size_t>(slot[i]) + 1];
        }
        for (std::size_t k = 1; k < count.size(); ++k) count[k] += count[k - 1];
        start = count;
        items.resize(seeds.size());
        for (std::size_t i = 0; i < seeds.size(); ++i)
            items[count[static_cast<std::size_t>(slot[i])]++] = i;
    }

    long cx(Point2 p) const {
        return std::clamp(static_cast<long>((p.x - origin.x) / cell), 0L, nx - 1);
    }
    long cy(Point2 p) const {
        return std::clamp(static_cast<long>((p.y - origin.y) / cell), 0L, ny - 1);
    }
    long index(long ix, long iy) const { return iy * nx + ix; }

    template <class F>
    void for_each_in(long ix, long iy, F&& f) const {
        if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return;
        const auto k = static_cast<std::size_t>(index(ix, iy));
        for (std::size_t a = start[k]; a < start[k + 1]; ++a) f(items[a]);
    }

    /// Visits every grid cell at Chebyshev distance exactly r from (ix, iy).
    template <class F>
    void for_each_in_ring(long ix, long iy, long r, F&& f) const {
        if (r == 0) { for_each_in(ix, iy, f); return; }
        for (long dx = -r; dx <= r; ++dx) {
            for_each_in(ix + dx, iy - r, f);
            for_each_in(ix + dx, iy + r, f);
        }
        for (long dy = -r + 1; dy <= r - 1; ++dy) {
            for_each_in(ix - r, iy + dy, f);
            for_each_in(ix + r, iy + dy, f);
        }
    }
    long max_ring() const { return std::max(nx, ny); }
};

inline HalfPlane power_halfplane(Point2 zi, Point2 zj, double wi, double wj) {
    const Point2 d = zj - zi;
    const double len = norm(d);
    const Point2 n{d.x / len, d.y / len};
    const double c = dot(n, 0.5 * (zi + zj)) + (wi - wj) / (2.0 * len);
    return {n, c};
}

inline void check_coincident(std::span<const Point2> seeds, const SeedGrid& grid,
                             double threshold) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        const long ix = grid.cx(seeds[i]);
        const long iy = grid.cy(seeds[i]);
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx)
                grid.for_each_in(ix + dx, iy + dy, [&](std::size_t j) {
                    if (j > i && distance(seeds[i], seeds[j]) < threshold)
                        throw CoincidentSeeds(i, j,
                                              "coincident seeds " + std::to_string(i) + " and " +
                                                  std::to_string(j));
                });
    }
}

}  // namespace detail

/// Power diagram of (seeds, weights) restricted to the domain, with moments
/// and the dual graph. Throws CoincidentSeeds for (near-)duplicate seeds.
inline LaguerreDiagram build_diagram(const Domain& domain, std::span<const Point2> seeds,
                                     std::span<const double> weights,
                                     const DiagramOptions& opt = {}) {
    const std::size_t n = seeds.size();
    if (n == 0) throw Error("build_diagram: no seeds");
    if (weights.size() != n) throw Error("build_diagram: weight/seed size mismatch");

    const double diam = domain.diameter();
    const double merge_tol = opt.length_rel * diam;
    const double sliver = opt.sliver_area_rel * domain.area();
    const detail::SeedGrid grid(seeds, std::max(1e-9 * diam, 1e-300));
    detail::check_coincident(seeds, grid, opt.coincidence_rel * diam);

    const double w_max = *std::max_element(weights.begin(), weights.end());

    LaguerreDiagram out;
    out.cells.resize(n);
    out.areas.assign(n, 0.0);
    out.centroids.assign(n, Point2{});
    out.second_moments.assign(n, 0.0);

    const auto build_cell = [&](std::size_t i) {
        const Point2 zi = seeds[i];
        const double wi = weights[i];
        ConvexPolygon cell = domain.polygon();
        const auto clip_by = [&](std::size_t j) {
            if (j == i || cell.empty()) return;
            cell = clip_halfplane(cell, detail::power_halfplane(zi, seeds[j], wi, weights[j]),
                                  static_cast<int>(j), merge_tol);
        };
        if (!opt.use_grid) {
            for (std::size_t j = 0; j < n; ++j) clip_by(j);
        } else {
            const long ix = grid.cx(zi);
            const long iy = grid.cy(zi);
            for (long r = 0; r <= grid.max_ring() && !cell.empty(); ++r) {
                grid.for_each_in_ring(ix, iy, r, clip_by);
                if (cell.empty()) break;
                double reach = 0.0;
                for (auto v : cell.vertices()) reach = std::max(reach, distance(v, zi));
                // Seeds outside the visited block are at least r·cell away; such
                // a seed j cannot cut the cell once
                //     (d - R)² - w_max >= R² - w_i  <=  d >= R + sqrt(R² + w_max - w_i).
                const double bound =
                    reach + std::sqrt(std::max(0.0, reach * reach + w_max - wi));
                if (static_cast<double>(r) * grid.cell >= bound) break;
            }
        }
        if (!cell.empty() && cell.area() < sliver) cell.clear();
        if (!cell.empty()) {
            const auto m = polygon_moments(cell, zi);
            out.areas[i] = m.area;
            out.centroids[i] = m.centroid;
            out.second_moments[i] = m.second_moment;
        } else {
            out.centroids[i] = zi;
        }
        out.cells[i] = std::move(cell);
    };

#if defined(_OPENMP)
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < static_cast<long>(n); ++i) build_cell(static_cast<std::size_t>(i));
#else
    for (std::size_t i = 0; i < n; ++i) build_cell(i);
#endif

    // Each interface is seen from both sides; lengths agree up to rounding
    // and are averaged.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<double, int>> seen;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& cell = out.cells[i];
        const auto labels = cell.labels();
        for (std::size_t k = 0; k < cell.size(); ++k) {
            if (labels[k] < 0) continue;
            const auto j = static_cast<std::size_t>(labels[k]);
            const double len = distance(cell.edge_start(k), cell.edge_end(k));
            auto& e = seen[{std::min(i, j), std::max(i, j)}];
            e.first += len;
            e.second += 1;
        }
    }
    out.adjacency.reserve(seen.size());
    for (const auto& [key, acc] : seen) {
        const double len = acc.first / acc.second;
        if (len < merge_tol) continue;
        out.adjacency.push_back({key.first, key.second, len, distance(seeds[key.first], seeds[key.second])});
    }
    return out;
}

inline LaguerreDiagram build_diagram(const Domain& domain, const DiscreteMeasure& measure,
                                     const WeightVector& w, const DiagramOptions& opt = {}) {
    return build_diagram(domain, measure.seeds, w.values, opt);
}

/// Stored interface length between cells i and j, if they share one.
inline std::optional<double> cell_boundary_with(const LaguerreDiagram& d, std::size_t i,
                                                std::size_t j) {
    if (i >= d.size() || j >= d.size() || i == j)
        throw IndexOutOfRange("cell_boundary_with: invalid index pair");
    const std::size_t a = std::min(i, j);
    const std::size_t b = std::max(i, j);
    const auto it = std::lower_bound(d.adjacency.begin(), d.adjacency.end(), std::pair{a, b},
                                     [](const DualEdge& e, const std::pair<std::size_t, std::size_t>& k) {
                                         return std::pair{e.i, e.j} < k;
                                     });
    if (it != d.adjacency.end() && it->i == a && it->j == b) return it->interface_length;
    return std::nullopt;
}

/// Index of the seed minimizing the power distance |x - z_i|² - w_i.
inline std::size_t power_nearest(std::span<const Point2> seeds, std::span<const double> weights,
                                 Point2 x) {
    std::size_t best = 0;
    double best_d = norm2(x - seeds[0]) - weights[0];
    for (std::size_t i = 1; i < seeds.size(); ++i) {
        const double d = norm2(x - seeds[i]) - weights[i];
        if (d < best_d) { best_d = d; best = i; }
    }
    return best;
}

}  // namespace sgflow
