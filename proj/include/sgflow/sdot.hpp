#pragma once

// Semi-discrete optimal transport between the uniform measure on a convex
// domain and a discrete measure: Kantorovich functional, its derivatives,
// and the damped Newton solver for the optimal weights.

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include "sgflow/errors.hpp"
#include "sgflow/geom2d.hpp"
#include "sgflow/laguerre.hpp"

namespace sgflow {

using SparseMatrix = Eigen::SparseMatrix<double>;

struct KantorovichState {
    double g_value = 0.0;
    /// m_i - area(C_i)
    std::vector<double> gradient;
    /// Weighted graph Laplacian D_w(areas); equals -D²g.
    SparseMatrix hessian;
    LaguerreDiagram diagram;
};

struct SolveReport {
    int iterations = 0;
    /// max_i |m_i - area_i|
    double final_area_error = 0.0;
    bool converged = false;
    int damping_backtracks = 0;
};

class NonConvergence : public Error {
public:
    NonConvergence(SolveReport r, const std::string& msg) : Error(msg), report(r) {}
    SolveReport report;
};

/// Laplacian with edge weights interface_length / (2 · seed_distance).
inline SparseMatrix laguerre_laplacian(const LaguerreDiagram& d) {
    const auto n = static_cast<Eigen::Index>(d.size());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * d.adjacency.size() + d.size());
    std::vector<double> diag(d.size(), 0.0);
    for (const auto& e : d.adjacency) {
        const double h = e.interface_length / (2.0 * e.seed_distance);
        const auto i = static_cast<Eigen::Index>(e.i);
        const auto j = static_cast<Eigen::Index>(e.j);
        t.emplace_back(i, j, -h);
        t.emplace_back(j, i, -h);
        diag[e.i] += h;
        diag[e.j] += h;
    }
    for (std::size_t i = 0; i < d.size(); ++i)
        t.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), diag[i]);
    SparseMatrix L(n, n);
    L.setFromTriplets(t.begin(), t.end());
    return L;
}

inline double kantorovich_value(const LaguerreDiagram& d, const DiscreteMeasure& nu,
                                const WeightVector& w) {
    double g = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
        g += d.second_moments[i] + (nu.masses[i] - d.areas[i]) * w[i];
    return g;
}

inline KantorovichState kantorovich_eval(const Domain& domain, const DiscreteMeasure& nu,
                                         const WeightVector& w,
                                         const DiagramOptions& opt = {}) {
    KantorovichState s;
    s.diagram = build_diagram(domain, nu, w, opt);
    s.g_value = kantorovich_value(s.diagram, nu, w);
    s.gradient.resize(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i) s.gradient[i] = nu.masses[i] - s.diagram.areas[i];
    s.hessian = laguerre_laplacian(s.diagram);
    return s;
}

inline double max_area_error(const LaguerreDiagram& d, const DiscreteMeasure& nu) {
    double e = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) e = std::max(e, std::abs(nu.masses[i] - d.areas[i]));
    return e;
}

enum class LinearSolver { Auto, Cholesky, ConjugateGradient };
enum class SolverMethod { DampedNewton, QuasiNewton };

struct SolverOptions {
    SolverMethod method = SolverMethod::DampedNewton;
    int max_iterations = 100;
    int max_backtracks = 50;
    LinearSolver linear_solver = LinearSolver::Auto;
    /// Auto switches from Cholesky to CG above this reduced size.
    Eigen::Index cholesky_limit = 500;
    double cg_tolerance = 1e-12;
    /// L-BFGS memory and iteration cap for the quasi-Newton mode.
    int lbfgs_memory = 10;
    int quasi_newton_max_iterations = 5000;
    DiagramOptions diagram{};
};

struct SolveResult {
    WeightVector weights;
    SolveReport report;
    /// Diagram at the returned weights.
    LaguerreDiagram diagram;
};

namespace detail {

inline Eigen::VectorXd solve_reduced(const SparseMatrix& L, const Eigen::VectorXd& rhs,
                                     const SolverOptions& opt) {
    const Eigen::Index r = L.rows() - 1;
    SparseMatrix red = L.topLeftCorner(r, r);
    const auto use_cg = [&] {
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg;
        cg.setTolerance(opt.cg_tolerance);
        cg.setMaxIterations(std::max<Eigen::Index>(10 * r, 1000));
        cg.compute(red);
        Eigen::VectorXd x = cg.solve(rhs);
        if (cg.info() != Eigen::Success || !x.allFinite())
            throw SingularHessian("reduced Laplacian: conjugate gradient failed");
        return x;
    };
    const bool cholesky = opt.linear_solver == LinearSolver::Cholesky ||
                          (opt.linear_solver == LinearSolver::Auto && r <= opt.cholesky_limit);
    if (!cholesky) return use_cg();

    Eigen::SimplicialLDLT<SparseMatrix> ldlt(red);
    if (ldlt.info() != Eigen::Success) throw SingularHessian("reduced Laplacian is singular");
    const auto& dvec = ldlt.vectorD();
    const double dmax = dvec.cwiseAbs().maxCoeff();
    if (!(dvec.minCoeff() > 1e-14 * dmax))
        throw SingularHessian("reduced Laplacian is singular (dual graph disconnected)");
    Eigen::VectorXd x = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !x.allFinite()) return use_cg();
    return x;
}

inline double residual_norm(const LaguerreDiagram& d, const DiscreteMeasure& nu) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = nu.masses[i] - d.areas[i];
        s += r * r;
    }
    return std::sqrt(s);
}

inline bool has_empty_cell(const LaguerreDiagram& d) {
    return std::any_of(d.areas.begin(), d.areas.end(), [](double a) { return a <= 0.0; });
}

/// L-BFGS ascent on g over the first N-1 weights. Stops at the area
/// tolerance, or as soon as every cell is nonempty when `until_nonempty`.
inline SolveResult lbfgs_ascent(const Domain& domain, const DiscreteMeasure& nu, WeightVector w,
                                double abs_tol, const SolverOptions& opt, bool until_nonempty) {
    const std::size_t n = nu.size();
    const std::size_t r = n - 1;
    SolveResult res;
    LaguerreDiagram d = build_diagram(domain, nu, w, opt.diagram);
    double g = kantorovich_value(d, nu, w);
    std::vector<double> grad(r);
    const auto fill_grad = [&](const LaguerreDiagram& dd, std::vector<double>& out) {
        for (std::size_t i = 0; i < r; ++i) out[i] = nu.masses[i] - dd.areas[i];
    };
    fill_grad(d, grad);
    std::deque<std::pair<std::vector<double>, std::vector<double>>> mem;  // (s, y) of -g
    double step_scale = 1.0 / std::max(1.0, static_cast<double>(n));

    for (int it = 0; it < opt.quasi_newton_max_iterations; ++it) {
        res.report.final_area_error = max_area_error(d, nu);
        const bool done = until_nonempty ? !has_empty_cell(d)
                                         : res.report.final_area_error < abs_tol;
        if (done) { res.report.converged = true; break; }
        res.report.iterations = it + 1;

        // two-loop recursion on the minimization of -g (gradient -grad)
        std::vector<double> q(r);
        for (std::size_t i = 0; i < r; ++i) q[i] = -grad[i];
        std::vector<double> alpha(mem.size());
        for (std::size_t k = mem.size(); k-- > 0;) {
            const auto& [s, y] = mem[k];
            double sy = 0.0, sq = 0.0;
            for (std::size_t i = 0; i < r; ++i) { sy += s[i] * y[i]; sq += s[i] * q[i]; }
            alpha[k] = sq / sy;
            for (std::size_t i = 0; i < r; ++i) q[i] -= alpha[k] * y[i];
        }
        double gamma = step_scale;
        if (!mem.empty()) {
            const auto& [s, y] = mem.back();
            double sy = 0.0, yy = 0.0;
            for (std::size_t i = 0; i < r; ++i) { sy += s[i] * y[i]; yy += y[i] * y[i]; }
            gamma = sy / yy;
        }
        for (double& v : q) v *= gamma;
        for (std::size_t k = 0; k < mem.size(); ++k) {
            const auto& [s, y] = mem[k];
            double sy = 0.0, yq = 0.0;
            for (std::size_t i = 0; i < r; ++i) { sy += s[i] * y[i]; yq += y[i] * q[i]; }
            const double beta = yq / sy;
            for (std::size_t i = 0; i < r; ++i) q[i] += s[i] * (alpha[k] - beta);
        }
        // ascent direction p = -q
        double slope = 0.0;
        for (std::size_t i = 0; i < r; ++i) slope += -q[i] * grad[i];
        if (!(slope > 0.0)) {
            mem.clear();
            for (std::size_t i = 0; i < r; ++i) q[i] = -step_scale * grad[i];
            slope = 0.0;
            for (std::size_t i = 0; i < r; ++i) slope += -q[i] * grad[i];
        }

        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < opt.max_backtracks; ++bt) {
            WeightVector wt = w;
            for (std::size_t i = 0; i < r; ++i) wt[i] = w[i] - t * q[i];
            LaguerreDiagram dt = build_diagram(domain, nu, wt, opt.diagram);
            const double gt = kantorovich_value(dt, nu, wt);
            // g itself is only known to rounding; near the optimum the
            // Armijo gain drops below that level
            const double noise = 16.0 * std::numeric_limits<double>::epsilon() * std::abs(g);
            if (gt >= g + 1e-4 * t * slope - noise) {
                std::vector<double> gradt(r);
                fill_grad(dt, gradt);
                std::vector<double> s(r), y(r);
                double sy = 0.0;
                for (std::size_t i = 0; i < r; ++i) {
                    s[i] = wt[i] - w[i];
                    y[i] = -(gradt[i] - grad[i]);
                    sy += s[i] * y[i];
                }
                if (sy > 1e-300) {
                    mem.emplace_back(std::move(s), std::move(y));
                    if (static_cast<int>(mem.size()) > opt.lbfgs_memory) mem.pop_front();
                }
                w = std::move(wt);
                d = std::move(dt);
                g = gt;
                grad = std::move(gradt);
                accepted = true;
                break;
            }
            t *= 0.5;
            ++res.report.damping_backtracks;
        }
        if (!accepted) break;
    }
    res.report.final_area_error = max_area_error(d, nu);
    if (!until_nonempty) res.report.converged = res.report.final_area_error < abs_tol;
    res.weights = std::move(w);
    res.diagram = std::move(d);
    return res;
}

}  // namespace detail

/// Optimal weights with w[N-1] = 0 such that
/// max_i |m_i - area(C_i)| < tol · min_j m_j.
/// Throws NonConvergence or SingularHessian.
inline SolveResult solve_weights(const Domain& domain, const DiscreteMeasure& nu,
                                 const WeightVector& w0, double tol,
                                 const SolverOptions& opt = {}) {
    const std::size_t n = nu.size();
    if (n == 0) throw Error("solve_weights: empty measure");
    if (w0.size() != n) throw Error("solve_weights: initial weights have wrong size");
    if (!(tol > 0.0)) throw Error("solve_weights: tolerance must be positive");
    const double abs_tol = tol * nu.min_mass();

    SolveResult res;
    WeightVector w = w0;
    w.normalize();
    if (n == 1) {
        res.weights = w;
        res.diagram = build_diagram(domain, nu, w, opt.diagram);
        res.report.final_area_error = max_area_error(res.diagram, nu);
        res.report.converged = true;
        return res;
    }

    LaguerreDiagram d = build_diagram(domain, nu, w, opt.diagram);
    if (detail::has_empty_cell(d)) {
        // re-inflate: each seed owns its projection onto the domain
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 p = project_onto(domain.polygon(), nu.seeds[i]);
            w[i] = norm2(nu.seeds[i] - p);
        }
        w.normalize();
        d = build_diagram(domain, nu, w, opt.diagram);
    }

    if (opt.method == SolverMethod::QuasiNewton) {
        res = detail::lbfgs_ascent(domain, nu, w, abs_tol, opt, false);
        res.weights.normalize();
        if (!res.report.converged)
            throw NonConvergence(res.report, "quasi-Newton weight solve did not converge");
        return res;
    }

    if (detail::has_empty_cell(d)) {
        auto pre = detail::lbfgs_ascent(domain, nu, w, abs_tol, opt, true);
        res.report.damping_backtracks += pre.report.damping_backtracks;
        if (detail::has_empty_cell(pre.diagram))
            throw NonConvergence(res.report, "could not find weights with nonempty cells");
        w = std::move(pre.weights);
        d = std::move(pre.diagram);
    }

    const double eps0 = 0.5 * std::min(nu.min_mass(), d.min_area());
    double err = max_area_error(d, nu);
    double rnorm = detail::residual_norm(d, nu);
    int it = 0;
    while (!(err < abs_tol)) {
        if (it >= opt.max_iterations) {
            res.report.iterations = it;
            res.report.final_area_error = err;
            throw NonConvergence(res.report, "damped Newton: iteration cap reached");
        }
        ++it;
        const SparseMatrix L = laguerre_laplacian(d);
        Eigen::VectorXd rhs(static_cast<Eigen::Index>(n - 1));
        for (std::size_t i = 0; i + 1 < n; ++i)
            rhs[static_cast<Eigen::Index>(i)] = nu.masses[i] - d.areas[i];
        const Eigen::VectorXd step = detail::solve_reduced(L, rhs, opt);

        double tau = 1.0;
        int backtracks = 0;
        for (;;) {
            WeightVector wt = w;
            for (std::size_t i = 0; i + 1 < n; ++i) wt[i] += tau * step[static_cast<Eigen::Index>(i)];
            LaguerreDiagram dt = build_diagram(domain, nu, wt, opt.diagram);
            const double rt = detail::residual_norm(dt, nu);
            if (dt.min_area() >= eps0 && rt <= (1.0 - 0.5 * tau) * rnorm) {
                w = std::move(wt);
                d = std::move(dt);
                rnorm = rt;
                break;
            }
            tau *= 0.5;
            ++res.report.damping_backtracks;
            if (++backtracks > opt.max_backtracks) {
                res.report.iterations = it;
                res.report.final_area_error = err;
                throw NonConvergence(res.report, "damped Newton: line search failed");
            }
        }
        err = max_area_error(d, nu);
    }
    res.report.iterations = it;
    res.report.final_area_error = err;
    res.report.converged = true;
    res.weights = std::move(w);
    res.diagram = std::move(d);
    return res;
}

struct CentroidResult {
    std::vector<Point2> centroids;
    WeightVector weights;
    SolveReport report;
    LaguerreDiagram diagram;
};

/// Centroids of the area-constrained Laguerre cells, plus the solved weights.
inline CentroidResult optimal_centroids(const Domain& domain, const DiscreteMeasure& nu,
                                        const WeightVector& warm, double tol,
                                        const SolverOptions& opt = {}) {
    auto s = solve_weights(domain, nu, warm, tol, opt);
    CentroidResult r;
    r.centroids = s.diagram.centroids;
    r.weights = std::move(s.weights);
    r.report = s.report;
    r.diagram = std::move(s.diagram);
    return r;
}

/// Σ_i ∫_{C_i} |x - z_i|² dx; equals W₂² when the diagram is optimal.
inline double transport_cost(const LaguerreDiagram& d, const DiscreteMeasure& nu) {
    if (d.size() != nu.size()) throw Error("transport_cost: diagram/measure size mismatch");
    double c = 0.0;
    for (double s : d.second_moments) c += s;
    return c;
}

/// Planar geostrophic energy: half the transport cost.
inline double discrete_energy(const LaguerreDiagram& d, const DiscreteMeasure& nu) {
    return 0.5 * transport_cost(d, nu);
}

}  // namespace sgflow
