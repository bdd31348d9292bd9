#pragma once

// Self-check suite behind `sgflow verify`: finite-difference checks of the
// Kantorovich derivatives and the closed-form trajectory oracles.

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sgflow/dynamics.hpp"
#include "sgflow/quantize.hpp"
#include "sgflow/sdot.hpp"

namespace sgflow::verify {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double threshold = 0.0;
    bool passed = false;
    double seconds = 0.0;
    std::string detail;
};

struct VerifyOptions {
    double single_mass_h = 0.001;
    /// Base step of the order study (halved once).
    double order_h = 0.01;
    double fd_step = 1e-6;
    std::uint64_t rng_seed = 2024;
    bool include_long = false;
    bool include_full_scale = false;
};

namespace detail {

inline CheckResult timed(const std::string& name, const std::function<void(CheckResult&)>& body) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

inline DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t n, const Domain& om) {
    std::uniform_real_distribution<double> ux(om.bbox_min().x, om.bbox_max().x);
    std::uniform_real_distribution<double> uy(om.bbox_min().y, om.bbox_max().y);
    std::uniform_real_distribution<double> um(0.5, 1.5);
    DiscreteMeasure nu;
    double total = 0.0;
    while (nu.size() < n) {
        const Point2 p{ux(rng), uy(rng)};
        if (!om.polygon().contains(p)) continue;
        nu.seeds.push_back(p);
        nu.masses.push_back(um(rng));
        total += nu.masses.back();
    }
    for (double& m : nu.masses) m *= om.area() / total;
    return nu;
}

inline double g_at(const Domain& om, const DiscreteMeasure& nu, const WeightVector& w) {
    return kantorovich_value(build_diagram(om, nu, w), nu, w);
}

inline WeightVector random_weights(std::mt19937_64& rng, std::size_t n, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    WeightVector w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = u(rng);
    return w;
}

}  // namespace detail

/// Analytic gradient m - area against central differences of g (20 configs, N = 10).
inline CheckResult gradient_check(const VerifyOptions& o) {
    return detail::timed("gradient_fd", [&](CheckResult& r) {
        const Domain om(make_rectangle(0, 0, 1, 1));
        std::mt19937_64 rng(o.rng_seed);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const auto nu = detail::random_measure(rng, 10, om);
            const auto w = detail::random_weights(rng, 10, 0.01);
            const auto s = kantorovich_eval(om, nu, w);
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < 10; ++i) {
                WeightVector wp = w, wm = w;
                wp[i] += o.fd_step;
                wm[i] -= o.fd_step;
                const double fd = (detail::g_at(om, nu, wp) - detail::g_at(om, nu, wm)) / (2 * o.fd_step);
                num += (fd - s.gradient[i]) * (fd - s.gradient[i]);
                den += s.gradient[i] * s.gradient[i];
            }
            worst = std::max(worst, std::sqrt(num / den));
        }
        r.measured = worst;
        r.threshold = 1e-6;
        r.passed = worst < r.threshold;
        r.detail = "max relative error over 20 configurations";
    });
}

/// Laplacian entries against central differences of the gradient, plus structure.
inline CheckResult hessian_check(const VerifyOptions& o) {
    return detail::timed("hessian_fd", [&](CheckResult& r) {
        const Domain om(make_rectangle(0, 0, 1, 1));
        std::mt19937_64 rng(o.rng_seed + 1);
        double worst = 0.0;
        bool structure = true;
        const double step = 1e-6;
        for (int trial = 0; trial < 20; ++trial) {
            const std::size_t n = 10;
            // an empty cell would add a second kernel direction
            DiscreteMeasure nu;
            WeightVector w;
            do {
                nu = detail::random_measure(rng, n, om);
                w = detail::random_weights(rng, n, 0.01);
            } while (build_diagram(om, nu, w).min_area() <= 0.0);
            const auto s = kantorovich_eval(om, nu, w);
            const Eigen::MatrixXd L(s.hessian);
            Eigen::MatrixXd fd(n, n);
            for (std::size_t j = 0; j < n; ++j) {
                WeightVector wp = w, wm = w;
                wp[j] += step;
                wm[j] -= step;
                const auto dp = build_diagram(om, nu, wp);
                const auto dm = build_diagram(om, nu, wm);
                // ∂(m_i - area_i)/∂w_j = -L_ij
                for (std::size_t i = 0; i < n; ++i)
                    fd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        (dp.areas[i] - dm.areas[i]) / (2 * step);
            }
            const double scale = L.cwiseAbs().maxCoeff();
            worst = std::max(worst, (fd - L).cwiseAbs().maxCoeff() / scale);
            structure &= (L - L.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * scale;
            structure &= L.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L);
            const auto ev = es.eigenvalues();
            structure &= std::abs(ev[0]) <= 1e-12 * ev[n - 1] && ev[1] > 1e-8 * ev[n - 1];
        }
        r.measured = worst;
        r.threshold = 1e-4;
        r.passed = worst < r.threshold && structure;
        r.detail = structure ? "symmetric, zero row sums, one-dimensional kernel"
                             : "structural check failed";
    });
}

/// 50 random instances must reach max|m - area| < 1e-3 · min m in <= 100 iterations.
inline CheckResult solver_check(const VerifyOptions& o) {
    return detail::timed("solver_contract", [&](CheckResult& r) {
        const Domain om(make_rectangle(0, 0, 1, 1));
        std::mt19937_64 rng(o.rng_seed + 2);
        std::uniform_int_distribution<std::size_t> un(2, 200);
        double worst = 0.0;
        int max_it = 0;
        for (int trial = 0; trial < 50; ++trial) {
            const auto nu = detail::random_measure(rng, un(rng), om);
            const auto s = solve_weights(om, nu, WeightVector(nu.size()), 1e-3);
            worst = std::max(worst, s.report.final_area_error / (1e-3 * nu.min_mass()));
            max_it = std::max(max_it, s.report.iterations);
        }
        r.measured = worst;
        r.threshold = 1.0;
        r.passed = worst < 1.0 && max_it <= 100;
        r.detail = "area error / bound; max Newton iterations " + std::to_string(max_it);
    });
}

inline double single_mass_sup_error(double T, double h, double* final_error = nullptr) {
    const Domain om(make_rectangle(-1, -1, 1, 1));
    SimulationOptions so;
    so.T = T;
    so.h = h;
    double sup = 0.0;
    const Point2 zbar{1, 0};
    const auto tr = simulate(om, {{zbar}, {4.0}}, so, [&](const SimulationState& s, bool) {
        sup = std::max(sup, distance(s.measure.seeds[0], single_mass_exact(zbar, om.centroid(), s.t)));
    });
    if (!tr.ok) throw Error(tr.error);
    if (final_error)
        *final_error = distance(tr.states.back().measure.seeds[0], single_mass_exact(zbar, om.centroid(), T));
    return sup;
}

inline CheckResult single_mass_check(const VerifyOptions& o) {
    return detail::timed("single_mass", [&](CheckResult& r) {
        r.measured = single_mass_sup_error(5.0, o.single_mass_h);
        r.threshold = 1e-8;
        r.passed = r.measured < r.threshold;
        r.detail = "sup-norm trajectory error, T=5, h=" + std::to_string(o.single_mass_h);
    });
}

inline CheckResult single_mass_order_check(const VerifyOptions& o) {
    return detail::timed("single_mass_order", [&](CheckResult& r) {
        double e1 = 0.0, e2 = 0.0;
        single_mass_sup_error(5.0, o.order_h, &e1);
        single_mass_sup_error(5.0, 0.5 * o.order_h, &e2);
        r.measured = e1 / e2;
        r.threshold = 12.0;
        r.passed = r.measured >= 12.0 && r.measured <= 20.0;
        r.detail = "final-error ratio under halving from h=" + std::to_string(o.order_h) + ", accepted [12, 20]";
    });
}

struct TwoMassRun {
    double omega_fit = 0.0;
    double omega_exact = 0.0;
    double separation_drift = 0.0;
};

/// m = 1/2, z̄ = (±0.3, 0) on a 256-gon of unit area, one period.
inline TwoMassRun two_mass_run(double h = 0.01) {
    const Domain disk(make_regular_polygon(256, 1.0));
    const Point2 a{0.3, 0.0}, b{-0.3, 0.0};
    const double Z0 = distance(a, b);
    const auto p = oracle_params(0.5, Z0);
    SimulationOptions so;
    so.T = 2 * std::numbers::pi / p.omega;
    so.h = h;
    so.tol = 1e-8;
    std::vector<double> ts, th;
    double drift = 0.0, prev = 0.0, unwrap = 0.0;
    const auto tr = simulate(disk, {{a, b}, {0.5, 0.5}}, so, [&](const SimulationState& s, bool) {
        const Point2 Z = s.measure.seeds[0] - s.measure.seeds[1];
        drift = std::max(drift, std::abs(norm(Z) - Z0));
        const double ang = std::atan2(Z.y, Z.x);
        if (!ts.empty()) {
            double d = ang - prev;
            while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
            while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
            unwrap += d;
        } else {
            unwrap = ang;
        }
        prev = ang;
        ts.push_back(s.t);
        th.push_back(unwrap);
    });
    if (!tr.ok) throw Error(tr.error);
    // least-squares slope of the unwrapped phase
    double mt = 0, mth = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) { mt += ts[k]; mth += th[k]; }
    mt /= static_cast<double>(ts.size());
    mth /= static_cast<double>(ts.size());
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < ts.size(); ++k) {
        sxy += (ts[k] - mt) * (th[k] - mth);
        sxx += (ts[k] - mt) * (ts[k] - mt);
    }
    return {sxy / sxx, p.omega, drift};
}

inline std::vector<CheckResult> two_mass_checks() {
    TwoMassRun run;
    const auto freq = detail::timed("two_mass_frequency", [&](CheckResult& r) {
        run = two_mass_run();
        r.measured = std::abs(run.omega_fit - run.omega_exact);
        r.threshold = 1e-3;
        r.passed = r.measured < r.threshold;
        r.detail = "fitted " + std::to_string(run.omega_fit) + " vs " + std::to_string(run.omega_exact);
    });
    CheckResult sep;
    sep.name = "two_mass_separation";
    sep.measured = run.separation_drift;
    sep.threshold = 1e-6;
    sep.passed = freq.detail.rfind("exception", 0) != 0 && sep.measured < sep.threshold;
    sep.detail = "max | |Z(t)| - |Z(0)| | over one period";
    return {freq, sep};
}

/// Lloyd-converged CVT (uniform, N = 50) must be a fixed point of the flow.
inline CheckResult equilibrium_check(const VerifyOptions& o) {
    return detail::timed("equilibrium", [&](CheckResult& r) {
        const Domain sq(make_rectangle(0, 0, 1, 1));
        LloydOptions lo;
        lo.iterations = 200000;
        lo.displacement_tol = 1e-10;
        lo.rng_seed = o.rng_seed;
        const auto cvt = lloyd_quantize_detailed(DensitySpec::uniform(), sq, 50, lo);
        DynamicsOptions dyn;
        dyn.solve_tol = 1e-12;
        const auto f = vector_field(sq, cvt.measure, WeightVector(50), dyn);
        double wmax = 0.0;
        for (auto v : f.velocities) wmax = std::max({wmax, std::abs(v.x), std::abs(v.y)});
        SimulationOptions so;
        so.T = 1.0;
        so.h = 0.01;
        so.tol = 1e-10;
        const auto tr = simulate(sq, cvt.measure, so);
        if (!tr.ok) throw Error(tr.error);
        double moved = 0.0;
        for (std::size_t i = 0; i < 50; ++i)
            moved = std::max(moved, distance(tr.states.back().measure.seeds[i], cvt.measure.seeds[i]));
        r.measured = wmax;
        r.threshold = 1e-8;
        r.passed = cvt.last_displacement < 1e-10 && wmax < 1e-8 && moved < 1e-6;
        r.detail = "|W|_inf; max move after 100 steps " + std::to_string(moved);
    });
}

struct GaussianRun {
    std::vector<double> transport_cost;
    std::vector<Point2> final_seeds;
};

inline GaussianRun gaussian_run(std::size_t n, int lloyd_iterations, double h, double tol, std::uint64_t seed) {
    const Domain box(make_rectangle(-1, -1, 1, 1));
    const auto nu = lloyd_quantize(DensitySpec::gaussian({0, 0}, 1 / std::sqrt(2.0)), box, n, lloyd_iterations, seed);
    SimulationOptions so;
    so.T = 5.0;
    so.h = h;
    so.tol = tol;
    const auto tr = simulate(box, nu, so);
    if (!tr.ok) throw Error(tr.error);
    GaussianRun g;
    for (const auto& d : tr.diagnostics) g.transport_cost.push_back(d.transport_cost);
    g.final_seeds = tr.states.back().measure.seeds;
    return g;
}

inline std::vector<CheckResult> conservation_checks(const VerifyOptions& o) {
    GaussianRun coarse;
    std::vector<CheckResult> out;
    out.push_back(detail::timed("conservation_desk", [&](CheckResult& r) {
        coarse = gaussian_run(200, 200, 0.01, 0.1, o.rng_seed);
        r.measured = max_deviation_from_mean(coarse.transport_cost);
        r.threshold = 1e-5;
        r.passed = r.measured < r.threshold;
        r.detail = "N=200, T=5, h=0.01, tol=0.1";
    }));
    out.push_back(detail::timed("refinement", [&](CheckResult& r) {
        if (coarse.final_seeds.empty()) throw Error("coarse run unavailable");
        const auto fine = gaussian_run(200, 200, 0.005, 0.05, o.rng_seed);
        double d = 0.0;
        for (std::size_t i = 0; i < fine.final_seeds.size(); ++i)
            d = std::max({d, std::abs(fine.final_seeds[i].x - coarse.final_seeds[i].x),
                          std::abs(fine.final_seeds[i].y - coarse.final_seeds[i].y)});
        r.measured = d;
        r.threshold = 1e-3;
        r.passed = d < r.threshold;
        r.detail = "h=0.005, tol=0.05 against h=0.01, tol=0.1";
    }));
    return out;
}

inline CheckResult full_scale_check(const VerifyOptions& o) {
    return detail::timed("conservation_full", [&](CheckResult& r) {
        const auto g = gaussian_run(2000, 1000, 0.01, 0.1, o.rng_seed);
        r.measured = max_deviation_from_mean(g.transport_cost);
        r.threshold = 7.5e-7;
        r.passed = r.measured < r.threshold;
        r.detail = "N=2000, 1000 Lloyd iterations, T=5, h=0.01, tol=0.1";
    });
}

inline std::vector<CheckResult> run_all(const VerifyOptions& o) {
    std::vector<CheckResult> out;
    out.push_back(gradient_check(o));
    out.push_back(hessian_check(o));
    out.push_back(solver_check(o));
    out.push_back(single_mass_check(o));
    out.push_back(single_mass_order_check(o));
    for (auto& c : two_mass_checks()) out.push_back(std::move(c));
    out.push_back(equilibrium_check(o));
    if (o.include_long)
        for (auto& c : conservation_checks(o)) out.push_back(std::move(c));
    if (o.include_full_scale) out.push_back(full_scale_check(o));
    return out;
}

}  // namespace sgflow::verify
