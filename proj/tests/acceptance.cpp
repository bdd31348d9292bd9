// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Reference values are computed here, independently of the
// library's own oracle helpers.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sgflow/dynamics.hpp"
#include "sgflow/geom2d.hpp"
#include "sgflow/laguerre.hpp"
#include "sgflow/quantize.hpp"
#include "sgflow/sdot.hpp"

using namespace sgflow;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s < limit_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("[%s] %d %-28s %s (%.1fs, limit %.0fs)\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s,
                limit_s);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, double x0, double x1) {
    std::uniform_real_distribution<double> u(x0, x1), um(0.2, 1.8);
    DiscreteMeasure nu;
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        nu.seeds.push_back({u(rng), u(rng)});
        nu.masses.push_back(um(rng));
        total += nu.masses.back();
    }
    const double area = (x1 - x0) * (x1 - x0);
    for (double& m : nu.masses) m *= area / total;
    return nu;
}

WeightVector random_weights(std::mt19937_64& rng, std::size_t n, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    WeightVector w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = u(rng);
    return w;
}

double g_of(const Domain& om, const DiscreteMeasure& nu, const WeightVector& w) {
    return kantorovich_value(build_diagram(om, nu, w), nu, w);
}

double max_dev(const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double d = 0;
    for (double x : v) d = std::max(d, std::abs(x - mean));
    return d;
}

struct GaussRun {
    std::vector<double> cost;
    std::vector<Point2> final_seeds;
    bool ok = false;
    std::string error;
};

GaussRun gaussian_run(std::size_t n, int lloyd, double h, double tol) {
    const Domain box(make_rectangle(-1, -1, 1, 1));
    // exp(-|x|²)
    const auto nu = lloyd_quantize(DensitySpec::gaussian({0, 0}, std::sqrt(0.5)), box, n, lloyd, 20240607);
    SimulationOptions o;
    o.T = 5.0;
    o.h = h;
    o.tol = tol;
    const auto tr = simulate(box, nu, o);
    GaussRun r;
    r.ok = tr.ok;
    r.error = tr.error;
    for (const auto& d : tr.diagnostics) r.cost.push_back(d.transport_cost);
    if (!tr.states.empty()) r.final_seeds = tr.states.back().measure.seeds;
    return r;
}

GaussRun coarse_run;

// exact ∫|x - r|² over a polygon via signed triangles fanned from vertex 0
double second_moment_oracle(std::span<const Point2> v, Point2 r) {
    double s = 0;
    const Point2 a = v[0] - r;
    for (std::size_t k = 1; k + 1 < v.size(); ++k) {
        const Point2 b = v[k] - r, c = v[k + 1] - r;
        const double area = 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
        s += area / 6.0 * (norm2(a) + norm2(b) + norm2(c) + dot(a, b) + dot(b, c) + dot(c, a));
    }
    return s;
}

}  // namespace

int main() {
    const Domain unit(make_rectangle(0, 0, 1, 1));

    criterion(1, "gradient vs central FD", 10, [&] {
        std::mt19937_64 rng(101);
        const double step = 1e-6;
        double worst = 0;
        for (int t = 0; t < 20; ++t) {
            const auto nu = random_measure(rng, 10, 0, 1);
            const auto w = random_weights(rng, 10, 0.02);
            const auto s = kantorovich_eval(unit, nu, w);
            double num = 0, den = 0;
            for (std::size_t i = 0; i < 10; ++i) {
                WeightVector a = w, b = w;
                a[i] += step;
                b[i] -= step;
                const double fd = (g_of(unit, nu, a) - g_of(unit, nu, b)) / (2 * step);
                const double analytic = nu.masses[i] - s.diagram.areas[i];
                num += (fd - analytic) * (fd - analytic);
                den += analytic * analytic;
            }
            worst = std::max(worst, std::sqrt(num / den));
        }
        return Outcome{worst < 1e-6, fmt("max relative error %.3e (< 1e-6)", worst)};
    });

    criterion(2, "Hessian vs FD + structure", 30, [&] {
        std::mt19937_64 rng(202);
        const double step = 1e-6;
        double worst = 0, sym = 0, rows = 0, kernel = 0, gap = 1e300, reduced_min = 1e300;
        for (int t = 0; t < 20; ++t) {
            const std::size_t n = 12;
            // the kernel is span{1} only when every cell is nonempty
            DiscreteMeasure nu;
            WeightVector w;
            do {
                nu = random_measure(rng, n, 0, 1);
                w = random_weights(rng, n, 0.02);
            } while (build_diagram(unit, nu, w).min_area() <= 0.0);
            const Eigen::MatrixXd L(kantorovich_eval(unit, nu, w).hessian);
            const double scale = L.cwiseAbs().maxCoeff();
            for (std::size_t j = 0; j < n; ++j) {
                WeightVector a = w, b = w;
                a[j] += step;
                b[j] -= step;
                const auto da = build_diagram(unit, nu, a), db = build_diagram(unit, nu, b);
                for (std::size_t i = 0; i < n; ++i) {
                    // gradient is m - area, so its derivative is -L
                    const double dgrad = -(da.areas[i] - db.areas[i]) / (2 * step);
                    worst = std::max(worst, std::abs(dgrad + L(Eigen::Index(i), Eigen::Index(j))) / scale);
                }
            }
            sym = std::max(sym, (L - L.transpose()).cwiseAbs().maxCoeff() / scale);
            rows = std::max(rows, L.rowwise().sum().cwiseAbs().maxCoeff() / scale);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> full(L);
            const auto ev = full.eigenvalues();
            kernel = std::max(kernel, std::abs(ev[0]) / ev[Eigen::Index(n) - 1]);
            gap = std::min(gap, ev[1] / ev[Eigen::Index(n) - 1]);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> red(L.topLeftCorner(n - 1, n - 1));
            reduced_min = std::min(reduced_min, red.eigenvalues()[0]);
        }
        const bool ok = worst < 1e-4 && sym < 1e-14 && rows < 1e-12 && kernel < 1e-12 && gap > 1e-8 && reduced_min > 0;
        return Outcome{ok, fmt("entry rel err %.2e (< 1e-4); |lambda0|/lambda_max %.1e, lambda1/lambda_max %.1e", worst,
                               kernel, gap)};
    });

    criterion(3, "solver contract (50 instances)", 120, [&] {
        std::mt19937_64 rng(303);
        std::uniform_int_distribution<std::size_t> un(2, 200);
        double worst = 0;
        int iters = 0;
        for (int t = 0; t < 50; ++t) {
            const auto nu = random_measure(rng, un(rng), 0, 1);
            const auto s = solve_weights(unit, nu, WeightVector(nu.size()), 1e-3);
            double err = 0;
            for (std::size_t i = 0; i < nu.size(); ++i) err = std::max(err, std::abs(nu.masses[i] - s.diagram.areas[i]));
            worst = std::max(worst, err / (1e-2 * 0.1 * nu.min_mass()));
            iters = std::max(iters, s.report.iterations);
        }
        return Outcome{worst < 1 && iters <= 100,
                       fmt("max err/bound %.3f (< 1), max Newton iterations %.0f (<= 100)", worst, iters)};
    });

    criterion(4, "single mass exact solution", 60, [&] {
        const Domain box(make_rectangle(-1, -1, 1, 1));
        const auto sup_error = [&](double h, double* final_err) {
            SimulationOptions o;
            o.T = 5;
            o.h = h;
            double sup = 0;
            const auto ref = [](double t) { return Point2{std::cos(t), std::sin(t)}; };
            const auto tr = simulate(box, {{{1, 0}}, {4.0}}, o, [&](const SimulationState& s, bool) {
                sup = std::max(sup, distance(s.measure.seeds[0], ref(s.t)));
            });
            if (!tr.ok) throw Error(tr.error);
            *final_err = distance(tr.states.back().measure.seeds[0], ref(5.0));
            return sup;
        };
        double f = 0, f1 = 0, f2 = 0;
        const double sup = sup_error(0.001, &f);
        // order study where truncation error dominates roundoff
        sup_error(0.01, &f1);
        sup_error(0.005, &f2);
        const double ratio = f1 / f2;
        return Outcome{sup < 1e-8 && ratio >= 12 && ratio <= 20,
                       fmt("sup error %.2e at h=1e-3 (< 1e-8); halving 0.01->0.005 ratio %.2f (in [12,20])", sup, ratio)};
    });

    criterion(5, "two-mass disk oracle", 120, [&] {
        const Domain disk(make_regular_polygon(256, 1.0));
        const double R = 1 / std::sqrt(std::numbers::pi);
        const double r = 4 * R / (3 * std::numbers::pi);  // half-disk centroid
        const double m = 0.5, Z0 = 0.6;
        const double omega = 1 - (r / (1 - m)) / Z0;
        SimulationOptions o;
        o.T = 2 * std::numbers::pi / omega;
        o.h = 0.01;
        o.tol = 1e-8;
        std::vector<double> ts, phase;
        double drift = 0, last = 0, acc = 0;
        const auto tr = simulate(disk, {{{0.3, 0}, {-0.3, 0}}, {m, m}}, o, [&](const SimulationState& s, bool) {
            const Point2 Z = s.measure.seeds[0] - s.measure.seeds[1];
            drift = std::max(drift, std::abs(std::hypot(Z.x, Z.y) - Z0));
            const double a = std::atan2(Z.y, Z.x);
            if (!ts.empty()) acc += std::remainder(a - last, 2 * std::numbers::pi);
            last = a;
            ts.push_back(s.t);
            phase.push_back(acc);
        });
        if (!tr.ok) throw Error(tr.error);
        Eigen::MatrixXd A(ts.size(), 2);
        Eigen::VectorXd b(ts.size());
        for (std::size_t k = 0; k < ts.size(); ++k) {
            A(Eigen::Index(k), 0) = ts[k];
            A(Eigen::Index(k), 1) = 1;
            b[Eigen::Index(k)] = phase[k];
        }
        const double fit = A.colPivHouseholderQr().solve(b)[0];
        return Outcome{std::abs(fit - omega) < 1e-3 && drift < 1e-6,
                       fmt("omega fit %.6f vs %.6f (diff < 1e-3); |Z| drift %.2e (< 1e-6)", fit, omega, drift)};
    });

    criterion(6, "CVT equilibrium", 60, [&] {
        LloydOptions lo;
        lo.iterations = 500000;
        lo.displacement_tol = 1e-10;
        lo.rng_seed = 606;
        const auto cvt = lloyd_quantize_detailed(DensitySpec::uniform(), unit, 50, lo);
        if (!(cvt.last_displacement < 1e-10)) return Outcome{false, "Lloyd did not reach displacement 1e-10"};
        DynamicsOptions dyn;
        dyn.solve_tol = 1e-12;
        const auto f = vector_field(unit, cvt.measure, WeightVector(50), dyn);
        double wmax = 0;
        for (auto v : f.velocities) wmax = std::max({wmax, std::abs(v.x), std::abs(v.y)});
        SimulationOptions o;
        o.T = 1.0;
        o.h = 0.01;
        o.tol = 1e-10;
        const auto tr = simulate(unit, cvt.measure, o);
        if (!tr.ok || tr.steps != 100) throw Error("equilibrium run failed: " + tr.error);
        double moved = 0;
        for (std::size_t i = 0; i < 50; ++i)
            moved = std::max(moved, distance(tr.states.back().measure.seeds[i], cvt.measure.seeds[i]));
        return Outcome{wmax < 1e-8 && moved < 1e-6,
                       fmt("|W|_inf %.2e (< 1e-8), max move over 100 steps %.2e (< 1e-6), Lloyd its %.0f", wmax, moved,
                           cvt.iterations)};
    });

    criterion(7, "conservation, N=200 desk run", 300, [&] {
        coarse_run = gaussian_run(200, 200, 0.01, 0.1);
        if (!coarse_run.ok) throw Error(coarse_run.error);
        const double d = max_dev(coarse_run.cost);
        return Outcome{d < 1e-5, fmt("max |W2^2 - mean| %.3e over %.0f samples (< 1e-5)", d, double(coarse_run.cost.size()))};
    });

    criterion(8, "refinement consistency", 600, [&] {
        if (coarse_run.final_seeds.empty()) return Outcome{false, "criterion 7 run unavailable"};
        const auto fine = gaussian_run(200, 200, 0.005, 0.05);
        if (!fine.ok) throw Error(fine.error);
        double d = 0;
        for (std::size_t i = 0; i < fine.final_seeds.size(); ++i)
            d = std::max({d, std::abs(fine.final_seeds[i].x - coarse_run.final_seeds[i].x),
                          std::abs(fine.final_seeds[i].y - coarse_run.final_seeds[i].y)});
        return Outcome{d < 1e-3, fmt("max coordinate difference %.3e (< 1e-3)", d)};
    });

    criterion(9, "geometry property suite", 60, [&] {
        std::mt19937_64 rng(909);
        std::uniform_real_distribution<double> u(0, 1);
        double part = 0, shift = 0, pax = 0;
        long mismatches = 0;
        for (int t = 0; t < 50; ++t) {
            const std::size_t n = 2 + static_cast<std::size_t>(u(rng) * 63);
            const auto nu = random_measure(rng, n, 0, 1);
            const auto w = random_weights(rng, n, 0.01);
            const auto d = build_diagram(unit, nu, w);
            double total = 0;
            for (double a : d.areas) total += a;
            part = std::max(part, std::abs(total - 1.0));

            WeightVector ws = w;
            for (std::size_t i = 0; i < n; ++i) ws[i] += 0.37;
            const auto ds = build_diagram(unit, nu, ws);
            for (std::size_t i = 0; i < n; ++i) {
                if (ds.cells[i].size() != d.cells[i].size()) {
                    shift = 1.0;
                    continue;
                }
                for (auto p : d.cells[i].vertices()) {
                    double nearest = 1e300;
                    for (auto q : ds.cells[i].vertices()) nearest = std::min(nearest, distance(p, q));
                    shift = std::max(shift, nearest);
                }
            }

            // zero weights: each sample lies in the cell of its nearest seed
            const auto v = build_diagram(unit, nu, WeightVector(n));
            for (int k = 0; k < 200; ++k) {
                const Point2 x{u(rng), u(rng)};
                std::size_t best = 0;
                for (std::size_t i = 1; i < n; ++i)
                    if (distance(x, nu.seeds[i]) < distance(x, nu.seeds[best])) best = i;
                std::size_t second = best == 0 ? 1 : 0;
                for (std::size_t i = 0; i < n; ++i)
                    if (i != best && distance(x, nu.seeds[i]) < distance(x, nu.seeds[second])) second = i;
                if (distance(x, nu.seeds[second]) - distance(x, nu.seeds[best]) < 1e-9) continue;
                mismatches += !v.cells[best].contains(x, 1e-12);
            }

            for (std::size_t i = 0; i < n; ++i) {
                if (d.cells[i].empty()) continue;
                const Point2 ref{u(rng) * 3 - 1, u(rng) * 3 - 1};
                const auto at = polygon_moments(d.cells[i], ref);
                const auto verts = d.cells[i].vertices();
                const double expect =
                    second_moment_oracle(verts, at.centroid) + at.area * norm2(ref - at.centroid);
                pax = std::max(pax, std::abs(at.second_moment - expect) / expect);
            }
        }
        const bool ok = part < 1e-9 && shift < 1e-10 && mismatches == 0 && pax < 1e-10;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "area partition %.1e, shift vertex gap %.1e, Voronoi mismatches %ld, parallel-axis rel %.1e",
                      part, shift, mismatches, pax);
        return Outcome{ok, buf};
    });

    if (const char* full = std::getenv("SGFLOW_ACCEPTANCE_FULL"); full && std::string(full) == "1") {
        criterion(10, "conservation, N=2000 full run", 1800, [&] {
            const auto g = gaussian_run(2000, 1000, 0.01, 0.1);
            if (!g.ok) throw Error(g.error);
            const double d = max_dev(g.cost);
            return Outcome{d < 7.5e-7, fmt("max |W2^2 - mean| %.3e (< 7.5e-7)", d)};
        });
    } else {
        std::printf("[SKIP] 10 conservation, N=2000 full run     set SGFLOW_ACCEPTANCE_FULL=1 to enable\n");
    }

    std::printf("%s: %d failure(s)\n", failures ? "FAILED" : "ALL PASSED", failures);
    return failures ? 1 : 0;
}
