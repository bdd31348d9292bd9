#pragma once

// Planar semi-geostrophic particle dynamics: the vector field
// W(z) = J(z - x(z)), fixed-step RK4 with warm-started weights,
// conservation diagnostics and closed-form reference solutions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <typeinfo>
#include <vector>

#include "sgflow/errors.hpp"
#include "sgflow/geom2d.hpp"
#include "sgflow/laguerre.hpp"
#include "sgflow/sdot.hpp"

namespace sgflow {

/// J v for J = ((0,-1),(1,0)).
constexpr Point2 apply_J(Point2 v) { return {-v.y, v.x}; }

/// e^{θJ} v
inline Point2 rotate(Point2 v, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Smallest pairwise seed distance (infinity for N < 2).
inline double min_separation(std::span<const Point2> z) {
    const std::size_t n = z.size();
    double best = std::numeric_limits<double>::infinity();
    if (n < 2) return best;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return z[a].x < z[b].x; });
    for (std::size_t a = 0; a < n; ++a) {
        const Point2 p = z[order[a]];
        for (std::size_t b = a + 1; b < n; ++b) {
            const Point2 q = z[order[b]];
            if (q.x - p.x >= best) break;
            best = std::min(best, distance(p, q));
        }
    }
    return best;
}

struct Diagnostics {
    double t = 0.0;
    double transport_cost = 0.0;
    double energy = 0.0;
    double min_separation = 0.0;
    double max_area_error = 0.0;
};

struct SimulationState {
    double t = 0.0;
    DiscreteMeasure measure;
    WeightVector warm_weights;
    Diagnostics diagnostics;
};

struct DynamicsOptions {
    /// Relative area tolerance handed to the weight solver at every stage.
    double solve_tol = 1e-3;
    /// Tolerance of the diagnostics solve at accepted states (0: same as solve_tol).
    double diagnostics_tol = 0.0;
    /// Minimum admissible seed separation (0: 1e-8 · diameter(Ω)).
    double sep_floor = 0.0;
    SolverOptions solver{};
};

inline double effective_sep_floor(const Domain& domain, const DynamicsOptions& opt) {
    return opt.sep_floor > 0.0 ? opt.sep_floor : 1e-8 * domain.diameter();
}

struct FieldResult {
    std::vector<Point2> velocities;
    WeightVector weights;
    std::vector<Point2> centroids;
    SolveReport report;
};

inline FieldResult vector_field(const Domain& domain, const DiscreteMeasure& nu, const WeightVector& warm,
                                const DynamicsOptions& opt = {}) {
    const double floor = effective_sep_floor(domain, opt);
    const double sep = min_separation(nu.seeds);
    if (sep < floor)
        throw SeparationLoss(sep, "seed separation " + std::to_string(sep) + " fell below floor " +
                                      std::to_string(floor));
    auto c = optimal_centroids(domain, nu, warm, opt.solve_tol, opt.solver);
    FieldResult f;
    f.velocities.resize(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i) f.velocities[i] = apply_J(nu.seeds[i] - c.centroids[i]);
    f.weights = std::move(c.weights);
    f.centroids = std::move(c.centroids);
    f.report = c.report;
    return f;
}

struct DiagnosticsResult {
    Diagnostics values;
    WeightVector weights;
    LaguerreDiagram diagram;
};

/// Transport cost, energy, separation and area error at solved weights.
inline DiagnosticsResult conserved_diagnostics(const Domain& domain, const DiscreteMeasure& nu,
                                               const WeightVector& warm, double tol,
                                               const SolverOptions& opt = {}) {
    auto s = solve_weights(domain, nu, warm, tol, opt);
    DiagnosticsResult r;
    r.values.transport_cost = transport_cost(s.diagram, nu);
    r.values.energy = discrete_energy(s.diagram, nu);
    r.values.min_separation = min_separation(nu.seeds);
    r.values.max_area_error = s.report.final_area_error;
    r.weights = std::move(s.weights);
    r.diagram = std::move(s.diagram);
    return r;
}

inline std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const SeparationLoss*>(&e)) return "SeparationLoss";
    if (dynamic_cast<const NonConvergence*>(&e)) return "NonConvergence";
    if (dynamic_cast<const SingularHessian*>(&e)) return "SingularHessian";
    if (dynamic_cast<const CoincidentSeeds*>(&e)) return "CoincidentSeeds";
    if (dynamic_cast<const DegenerateCell*>(&e)) return "DegenerateCell";
    return "Error";
}

struct StepOutcome {
    SimulationState state;
    bool ok = true;
    std::string error;
    std::string error_kind;
};

/// One classical RK4 step. On failure the input state is returned unchanged.
inline StepOutcome rk4_step(const Domain& domain, const SimulationState& s, double h,
                            const DynamicsOptions& opt = {}) {
    if (!(h > 0.0)) throw Error("rk4_step: h must be positive");
    StepOutcome out;
    try {
        const auto& z0 = s.measure.seeds;
        const std::size_t n = z0.size();
        DiscreteMeasure stage = s.measure;
        const auto shifted = [&](const std::vector<Point2>& k, double a) {
            for (std::size_t i = 0; i < n; ++i) stage.seeds[i] = z0[i] + a * k[i];
        };
        auto f1 = vector_field(domain, stage, s.warm_weights, opt);
        shifted(f1.velocities, 0.5 * h);
        auto f2 = vector_field(domain, stage, f1.weights, opt);
        shifted(f2.velocities, 0.5 * h);
        auto f3 = vector_field(domain, stage, f2.weights, opt);
        shifted(f3.velocities, h);
        auto f4 = vector_field(domain, stage, f3.weights, opt);

        SimulationState next;
        next.t = s.t + h;
        next.measure = s.measure;
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 k = f1.velocities[i] + 2.0 * f2.velocities[i] + 2.0 * f3.velocities[i] + f4.velocities[i];
            next.measure.seeds[i] = z0[i] + (h / 6.0) * k;
        }
        const double floor = effective_sep_floor(domain, opt);
        const double sep = min_separation(next.measure.seeds);
        if (sep < floor) throw SeparationLoss(sep, "seed separation fell below floor after step");
        const double dtol = opt.diagnostics_tol > 0.0 ? opt.diagnostics_tol : opt.solve_tol;
        auto diag = conserved_diagnostics(domain, next.measure, f4.weights, dtol, opt.solver);
        next.diagnostics = diag.values;
        next.diagnostics.t = next.t;
        next.warm_weights = std::move(diag.weights);
        out.state = std::move(next);
    } catch (const Error& e) {
        out.state = s;
        out.ok = false;
        out.error = e.what();
        out.error_kind = error_kind(e);
    }
    return out;
}

struct SimulationOptions {
    double T = 1.0;
    double h = 0.01;
    /// Record every k-th step (0: only the schedule below plus initial and final).
    int snapshot_every = 0;
    /// Additional snapshot times; each is mapped to the nearest step.
    std::vector<double> snapshot_times;
    /// Accuracy parameter ε: every weight solve stops once
    /// max_i |m_i - area_i| < 1e-2 · ε · min_j m_j.
    double tol = 0.1;
    /// Relative solver tolerance at accepted states (0: same as the stages).
    double diagnostics_tol = 0.0;
    double sep_floor = 0.0;
    SolverOptions solver{};

    DynamicsOptions dynamics() const { return {1e-2 * tol, diagnostics_tol, sep_floor, solver}; }
};

struct Trajectory {
    std::vector<SimulationState> states;
    std::vector<Diagnostics> diagnostics;
    bool ok = true;
    std::string error;
    std::string error_kind;
    int steps = 0;
};

/// Called with every accepted state and whether it was selected as a snapshot.
using StepObserver = std::function<void(const SimulationState&, bool snapshot)>;

/// Number of fixed steps and the size of the last one; the final step is
/// shortened to land exactly on T.
inline std::pair<int, double> step_schedule(double T, double h) {
    const double ratio = T / h;
    int k = static_cast<int>(std::llround(ratio));
    if (std::abs(ratio - k) <= 1e-9 * std::max(1.0, ratio)) return {std::max(k, 1), h};
    k = static_cast<int>(std::ceil(ratio));
    return {k, T - (k - 1) * h};
}

inline Trajectory simulate(const Domain& domain, const DiscreteMeasure& initial, const WeightVector& warm,
                           const SimulationOptions& opt, const StepObserver& observer = {}) {
    if (!(opt.T > 0.0)) throw Error("simulate: T must be positive");
    if (!(opt.h > 0.0) || opt.h > opt.T) throw Error("simulate: need 0 < h <= T");
    if (opt.snapshot_every < 0) throw Error("simulate: snapshot_every must be >= 0");
    if (!(opt.tol > 0.0)) throw Error("simulate: tol must be positive");
    initial.validate(domain.area(), 1e-9);

    const auto [steps, h_last] = step_schedule(opt.T, opt.h);
    std::vector<char> snap(static_cast<std::size_t>(steps) + 1, 0);
    snap.front() = snap.back() = 1;
    if (opt.snapshot_every > 0)
        for (int k = 0; k <= steps; k += opt.snapshot_every) snap[static_cast<std::size_t>(k)] = 1;
    for (double ts : opt.snapshot_times) {
        if (ts < 0.0 || ts > opt.T * (1 + 1e-12)) throw Error("simulate: snapshot time outside [0, T]");
        const auto k = std::min<long long>(std::llround(ts / opt.h), steps);
        snap[static_cast<std::size_t>(k)] = 1;
    }

    Trajectory traj;
    const DynamicsOptions dyn = opt.dynamics();
    SimulationState s;
    s.measure = initial;
    WeightVector w0 = warm.size() == initial.size() ? warm : WeightVector(initial.size());
    try {
        const double floor = effective_sep_floor(domain, dyn);
        const double sep = min_separation(initial.seeds);
        if (sep < floor) throw SeparationLoss(sep, "initial seeds violate the separation floor");
        const double dtol = dyn.diagnostics_tol > 0.0 ? dyn.diagnostics_tol : dyn.solve_tol;
        auto d = conserved_diagnostics(domain, initial, w0, dtol, dyn.solver);
        s.diagnostics = d.values;
        s.warm_weights = std::move(d.weights);
    } catch (const Error& e) {
        traj.ok = false;
        traj.error = e.what();
        traj.error_kind = error_kind(e);
        return traj;
    }
    traj.diagnostics.push_back(s.diagnostics);
    traj.states.push_back(s);
    if (observer) observer(s, true);

    for (int k = 1; k <= steps; ++k) {
        const double hk = k == steps ? h_last : opt.h;
        auto r = rk4_step(domain, s, hk, dyn);
        if (!r.ok) {
            traj.ok = false;
            traj.error = "step " + std::to_string(k) + ": " + r.error;
            traj.error_kind = r.error_kind;
            // last accepted state closes the partial trajectory
            if (traj.states.back().t != s.t) traj.states.push_back(s);
            return traj;
        }
        s = std::move(r.state);
        // uniform grid in time, free of accumulated rounding
        s.t = k == steps ? opt.T : k * opt.h;
        s.diagnostics.t = s.t;
        traj.steps = k;
        traj.diagnostics.push_back(s.diagnostics);
        const bool is_snap = snap[static_cast<std::size_t>(k)] != 0;
        if (is_snap) traj.states.push_back(s);
        if (observer) observer(s, is_snap);
    }
    return traj;
}

inline Trajectory simulate(const Domain& domain, const DiscreteMeasure& initial, const SimulationOptions& opt,
                           const StepObserver& observer = {}) {
    return simulate(domain, initial, WeightVector(initial.size()), opt, observer);
}

/// Maximum deviation of a series from its mean.
inline double max_deviation_from_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double dev = 0.0;
    for (double x : v) dev = std::max(dev, std::abs(x - mean));
    return dev;
}

// ---- closed-form reference solutions ----

/// A single seed rotates rigidly about the domain centroid.
inline Point2 single_mass_exact(Point2 zbar, Point2 domain_centroid, double t) {
    return rotate(zbar - domain_centroid, t) + domain_centroid;
}

/// Distance from the disk center to the centroid of the circular segment of
/// area m (0 < m <= half the disk area) in a disk of radius R.
inline double segment_centroid_distance(double m, double R = 1.0 / std::sqrt(std::numbers::pi)) {
    const double half = 0.5 * std::numbers::pi * R * R;
    if (!(m > 0.0) || m > half * (1 + 1e-15)) throw DegenerateMass("segment area must lie in (0, half disk]");
    const auto area = [R](double d) { return R * R * std::acos(d / R) - d * std::sqrt(R * R - d * d); };
    double lo = 0.0, hi = R;  // area decreases in d
    for (int it = 0; it < 200 && hi - lo > 1e-15 * R; ++it) {
        const double mid = 0.5 * (lo + hi);
        (area(mid) > m ? lo : hi) = mid;
    }
    const double d = std::min(0.5 * (lo + hi), R);
    return 2.0 * std::pow(R * R - d * d, 1.5) / (3.0 * m);
}

struct OracleParams {
    double r_of_m = 0.0;
    double q_of_m = 0.0;
    double omega = 0.0;
};

inline OracleParams oracle_params(double m, double Z0) {
    if (!(m > 0.0) || m > 0.5) throw DegenerateMass("two-mass oracle needs m in (0, 1/2]");
    if (!(Z0 > 0.0)) throw Error("two-mass oracle needs distinct seeds");
    OracleParams p;
    p.r_of_m = segment_centroid_distance(m);
    p.q_of_m = p.r_of_m / (1.0 - m);
    p.omega = 1.0 - p.q_of_m / Z0;
    return p;
}

/// Two seeds in the unit-area disk centred at the origin; seed 1 carries mass m.
inline std::pair<Point2, Point2> two_mass_oracle(Point2 zbar1, Point2 zbar2, double m, double t) {
    const Point2 Z = zbar1 - zbar2;
    const double Z0 = norm(Z);
    const auto p = oracle_params(m, Z0);
    const Point2 u = (1.0 / Z0) * Z;
    const Point2 bend = rotate(u, p.omega * t) - rotate(u, t);
    const Point2 z1 = rotate(zbar1, t) - (p.r_of_m / (p.omega - 1.0)) * bend;
    const Point2 z2 = rotate(zbar2, t) + (m * p.r_of_m / ((1.0 - m) * (p.omega - 1.0))) * bend;
    return {z1, z2};
}

}  // namespace sgflow
