#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sgflow/dynamics.hpp"
#include "sgflow/quantize.hpp"

using namespace sgflow;

namespace {

const Domain& big_square() {
    static const Domain d(make_rectangle(-1, -1, 1, 1));
    return d;
}

const Domain& unit_disk() {
    static const Domain d(make_regular_polygon(256, 1.0));
    return d;
}

DiscreteMeasure single(Point2 z, double area) { return {{z}, {area}}; }

SimulationOptions sim(double T, double h, double tol = 0.1) {
    SimulationOptions o;
    o.T = T;
    o.h = h;
    o.tol = tol;
    return o;
}

double single_mass_final_error(double T, double h) {
    const auto tr = simulate(big_square(), single({1, 0}, 4.0), sim(T, h));
    EXPECT_TRUE(tr.ok) << tr.error;
    return distance(tr.states.back().measure.seeds[0], single_mass_exact({1, 0}, {0, 0}, T));
}

}  // namespace

TEST(RotationJ, SkewAndIsometric) {
    const Point2 v{0.3, -1.7};
    EXPECT_EQ(dot(v, apply_J(v)), 0.0);
    EXPECT_EQ(apply_J(apply_J(v)), -v);
    EXPECT_DOUBLE_EQ(norm(apply_J(v)), norm(v));
    const Point2 r = rotate({1, 0}, std::numbers::pi / 2);
    EXPECT_NEAR(r.x, 0.0, 1e-16);
    EXPECT_NEAR(r.y, 1.0, 1e-16);
}

TEST(VectorField, SingleMassVelocity) {
    const auto f = vector_field(big_square(), single({1, 0}, 4.0), WeightVector(1));
    EXPECT_NEAR(f.velocities[0].x, 0.0, 1e-15);
    EXPECT_NEAR(f.velocities[0].y, 1.0, 1e-15);
}

TEST(VectorField, SymmetricPairIsEquilibrium) {
    const Domain sq(make_rectangle(0, 0, 1, 1));
    const DiscreteMeasure nu{{{0.25, 0.5}, {0.75, 0.5}}, {0.5, 0.5}};
    DynamicsOptions opt;
    opt.solve_tol = 1e-12;
    const auto f = vector_field(sq, nu, WeightVector(2), opt);
    for (auto v : f.velocities) EXPECT_LT(norm(v), 1e-10);
}

TEST(VectorField, SeparationFloor) {
    const Domain sq(make_rectangle(0, 0, 1, 1));
    const DiscreteMeasure nu{{{0.5, 0.5}, {0.5, 0.5 + 1e-10}}, {0.5, 0.5}};
    EXPECT_THROW(vector_field(sq, nu, WeightVector(2)), SeparationLoss);
}

TEST(Rk4, SingleMassOneStep) {
    SimulationState s;
    s.measure = single({1, 0}, 4.0);
    s.warm_weights = WeightVector(1);
    const double h = 0.01;
    const auto r = rk4_step(big_square(), s, h);
    ASSERT_TRUE(r.ok);
    EXPECT_DOUBLE_EQ(r.state.t, h);
    EXPECT_LT(distance(r.state.measure.seeds[0], {std::cos(h), std::sin(h)}), 1e-10);
    EXPECT_EQ(r.state.measure.masses, s.measure.masses);
}

TEST(Rk4, FailedStepLeavesStateUntouched) {
    const Domain sq(make_rectangle(0, 0, 1, 1));
    SimulationState s;
    s.t = 0.7;
    s.measure = {{{0.5, 0.5}, {0.5, 0.5 + 1e-10}}, {0.5, 0.5}};
    s.warm_weights = WeightVector(2);
    const auto r = rk4_step(sq, s, 0.01);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.error_kind, "SeparationLoss");
    EXPECT_EQ(r.state.t, 0.7);
    EXPECT_EQ(r.state.measure.seeds, s.measure.seeds);
}

TEST(Simulate, SingleMassLongRun) {
    const auto tr = simulate(big_square(), single({1, 0}, 4.0), sim(5.0, 0.001));
    ASSERT_TRUE(tr.ok);
    EXPECT_EQ(tr.steps, 5000);
    EXPECT_DOUBLE_EQ(tr.states.back().t, 5.0);
    EXPECT_LT(distance(tr.states.back().measure.seeds[0], {std::cos(5.0), std::sin(5.0)}), 1e-9);
    std::vector<double> cost;
    for (const auto& d : tr.diagnostics) cost.push_back(d.transport_cost);
    EXPECT_LT(max_deviation_from_mean(cost), 1e-9);
}

TEST(Simulate, SingleMassFourthOrder) {
    // at a larger step so truncation error dominates roundoff
    const double e1 = single_mass_final_error(1.0, 0.1);
    const double e2 = single_mass_final_error(1.0, 0.05);
    const double order = std::log2(e1 / e2);
    EXPECT_GE(order, 3.8);
    EXPECT_LE(order, 4.2);
}

TEST(Simulate, SnapshotSchedule) {
    auto o = sim(5.0, 0.01);
    o.snapshot_times = {0, 0.5, 1, 3, 4, 5};
    const auto tr = simulate(big_square(), single({0.5, 0.2}, 4.0), o);
    ASSERT_TRUE(tr.ok);
    ASSERT_EQ(tr.states.size(), 6u);
    const double expect[] = {0, 0.5, 1, 3, 4, 5};
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(tr.states[k].t, expect[k], 1e-12);
    EXPECT_EQ(tr.diagnostics.size(), 501u);

    auto every = sim(1.0, 0.1);
    every.snapshot_every = 3;
    const auto t2 = simulate(big_square(), single({0.5, 0.2}, 4.0), every);
    // steps 0,3,6,9 and the final step 10
    EXPECT_EQ(t2.states.size(), 5u);
}

TEST(Simulate, ShortLastStepLandsOnT) {
    const auto tr = simulate(big_square(), single({1, 0}, 4.0), sim(0.25, 0.1));
    ASSERT_TRUE(tr.ok);
    EXPECT_EQ(tr.steps, 3);
    EXPECT_EQ(tr.states.back().t, 0.25);
    EXPECT_LT(distance(tr.states.back().measure.seeds[0], {std::cos(0.25), std::sin(0.25)}), 1e-5);
}

TEST(Simulate, RejectsBadArguments) {
    EXPECT_THROW(simulate(big_square(), single({1, 0}, 4.0), sim(-1.0, 0.1)), Error);
    EXPECT_THROW(simulate(big_square(), single({1, 0}, 4.0), sim(1.0, 2.0)), Error);
    EXPECT_THROW(simulate(big_square(), single({1, 0}, 3.0), sim(1.0, 0.1)), Error);
}

TEST(Simulate, SeparationLossGivesPartialTrajectory) {
    const Domain sq(make_rectangle(0, 0, 1, 1));
    const DiscreteMeasure nu{{{0.4, 0.5}, {0.6, 0.5}}, {0.5, 0.5}};
    auto o = sim(1.0, 0.1);
    o.sep_floor = 10.0;
    const auto tr = simulate(sq, nu, o);
    EXPECT_FALSE(tr.ok);
    EXPECT_EQ(tr.error_kind, "SeparationLoss");
    EXPECT_TRUE(tr.states.empty());
}

TEST(Simulate, CvtIsStationary) {
    const Domain sq(make_rectangle(0, 0, 1, 1));
    LloydOptions lo;
    lo.iterations = 20000;
    lo.displacement_tol = 1e-12;
    lo.rng_seed = 4;
    const auto cvt = lloyd_quantize_detailed(DensitySpec::uniform(), sq, 12, lo);
    ASSERT_LT(cvt.last_displacement, 1e-10);
    auto o = sim(0.5, 0.05, 1e-9);
    const auto tr = simulate(sq, cvt.measure, o);
    ASSERT_TRUE(tr.ok) << tr.error;
    for (std::size_t i = 0; i < 12; ++i)
        EXPECT_LT(distance(tr.states.back().measure.seeds[i], cvt.measure.seeds[i]), 1e-8);
    std::vector<double> cost;
    for (const auto& d : tr.diagnostics) cost.push_back(d.transport_cost);
    EXPECT_LT(max_deviation_from_mean(cost), 1e-12);
}

TEST(Oracle, HalfDiskCentroid) {
    const double R = 1 / std::sqrt(std::numbers::pi);
    const double r = segment_centroid_distance(0.5);
    EXPECT_NEAR(r, 4 * R / (3 * std::numbers::pi), 1e-14);
    EXPECT_NEAR(r, 0.2394, 5e-5);
    // half of a fine polygon
    const auto poly = make_regular_polygon(4096, 1.0);
    const auto half = clip_halfplane(poly, {{-1, 0}, 0.0});
    EXPECT_NEAR(polygon_moments(half, {}).centroid.x, r, 1e-6);
}

TEST(Oracle, SegmentCentroidAgainstPolygon) {
    const auto poly = make_regular_polygon(4096, 1.0);
    for (double c : {0.05, 0.2, 0.4}) {
        const auto seg = clip_halfplane(poly, {{-1, 0}, -c});
        const auto m = polygon_moments(seg, {});
        EXPECT_NEAR(segment_centroid_distance(m.area), m.centroid.x, 1e-6) << c;
    }
    EXPECT_THROW(segment_centroid_distance(0.0), DegenerateMass);
    EXPECT_THROW(segment_centroid_distance(0.6), DegenerateMass);
}

TEST(Oracle, TwoMassConservesSeparation) {
    EXPECT_THROW(two_mass_oracle({0.3, 0}, {-0.3, 0}, 0.6, 1.0), DegenerateMass);
    EXPECT_THROW(two_mass_oracle({0.3, 0}, {-0.3, 0}, 0.0, 1.0), DegenerateMass);
    for (double t : {0.0, 0.7, 3.0, 10.0}) {
        const auto [z1, z2] = two_mass_oracle({0.3, 0}, {-0.1, 0.2}, 0.3, t);
        EXPECT_NEAR(distance(z1, z2), distance({0.3, 0}, {-0.1, 0.2}), 1e-14);
        // mass centroid 0.3 z1 + 0.7 z2 rotates about the origin
        const Point2 c0 = 0.3 * Point2{0.3, 0} + 0.7 * Point2{-0.1, 0.2};
        const Point2 c = 0.3 * z1 + 0.7 * z2;
        EXPECT_NEAR(distance(c, rotate(c0, t)), 0.0, 1e-14);
    }
}

TEST(Oracle, SimulationTracksTwoMassSolution) {
    for (double m : {0.5, 0.3}) {
        const Point2 a{0.3, 0.05}, b{-0.25, -0.1};
        DiscreteMeasure nu{{a, b}, {m, 1 - m}};
        const auto tr = simulate(unit_disk(), nu, [&] {
            auto o = sim(2.0, 0.01, 1e-8);
            o.snapshot_every = 50;
            return o;
        }());
        ASSERT_TRUE(tr.ok) << tr.error;
        for (const auto& s : tr.states) {
            const auto [z1, z2] = two_mass_oracle(a, b, m, s.t);
            EXPECT_LT(distance(s.measure.seeds[0], z1), 1e-4) << "m=" << m << " t=" << s.t;
            EXPECT_LT(distance(s.measure.seeds[1], z2), 1e-4) << "m=" << m << " t=" << s.t;
        }
    }
}

TEST(Invariants, SkewSymmetryAndAprioriBound) {
    const auto& dom = big_square();
    const auto nu0 = lloyd_quantize(DensitySpec::gaussian({0, 0}, 1 / std::sqrt(2.0)), dom, 40, 30, 17);
    const double R = dom.circumradius_about({0, 0});
    const DynamicsOptions dyn = sim(1, 0.05).dynamics();
    double worst_skew = 0, worst_bound = -1;
    const auto tr = simulate(dom, nu0, sim(1.0, 0.05), [&](const SimulationState& s, bool) {
        const auto f = vector_field(dom, s.measure, s.warm_weights, dyn);
        double acc = 0, scale = 0;
        for (std::size_t i = 0; i < s.measure.size(); ++i) {
            const Point2 d = s.measure.seeds[i] - f.centroids[i];
            acc += s.measure.masses[i] * dot(d, f.velocities[i]);
            scale += s.measure.masses[i] * norm2(d);
        }
        worst_skew = std::max(worst_skew, std::abs(acc) / std::max(scale, 1e-300));
        for (std::size_t i = 0; i < s.measure.size(); ++i)
            worst_bound = std::max(worst_bound, norm(s.measure.seeds[i]) - (norm(nu0.seeds[i]) + R * s.t));
    });
    ASSERT_TRUE(tr.ok) << tr.error;
    EXPECT_LT(worst_skew, 1e-10);
    EXPECT_LT(worst_bound, 1e-6);
}

TEST(Invariants, DriftShrinksUnderRefinement) {
    const auto& dom = big_square();
    const auto nu0 = lloyd_quantize(DensitySpec::gaussian({0, 0}, 1 / std::sqrt(2.0)), dom, 30, 30, 2);
    const auto drift = [&](double h, double tol) {
        const auto tr = simulate(dom, nu0, sim(1.0, h, tol));
        EXPECT_TRUE(tr.ok) << tr.error;
        std::vector<double> c;
        for (const auto& d : tr.diagnostics) c.push_back(d.transport_cost);
        return max_deviation_from_mean(c);
    };
    const double coarse = drift(0.1, 1.0);
    const double fine = drift(0.05, 0.5);
    EXPECT_LT(fine, coarse);
}
