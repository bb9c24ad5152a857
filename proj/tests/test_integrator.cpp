#include <gtest/gtest.h>

#include <cmath>

#include "polykin/integrator.hpp"

using namespace polykin;

namespace {

GridSpec grid(int n, double vmax, int internal = 6, double imax = 12.0) {
    GridSpec g;
    g.velocity = {n, vmax};
    g.internal = InternalGrid::make_uniform(internal, imax);
    return g;
}

SpeciesTable mixed() { return SpeciesTable({1.0, 1.5}, {2.0, 5.0}, 1); }

DistributionGrid drifting_pair(const SpeciesTable& t, const GridSpec& g) {
    DistributionGrid f(t, g);
    f.values(0) = maxwellian(f, 0, 1.0, {0.4, 0, 0}, 0.7);
    f.values(1) = maxwellian(f, 1, 0.8, {-0.3, 0, 0}, 1.3);
    return f;
}

QuadratureRule mc(int samples) {
    QuadratureRule r;
    r.samples = samples;
    return r;
}

double l1_diff(const DistributionGrid& a, const DistributionGrid& b) {
    double s = 0.0;
    for (int k = 0; k < a.species(); ++k) {
        const int nk = a.internal_count(k);
        for (std::size_t i = 0; i < a.values(k).size(); ++i)
            s += std::abs(a.values(k)[i] - b.values(k)[i]) * a.node_volume(k, static_cast<int>(i % nk));
    }
    return s;
}

}  // namespace

TEST(Psi, SmallArgumentLimitAndValues) {
    EXPECT_EQ(psi(0.0), 1.0);
    EXPECT_NEAR(psi(1e-9), 1.0, 1e-9);
    EXPECT_NEAR(psi(1.0), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(psi(1e-7), -std::expm1(-1e-7) / 1e-7, 1e-15);
}

TEST(ExponentialStep, ZeroStateIsAbsorbing) {
    auto t = mixed();
    auto g = grid(6, 3.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    DistributionGrid zero(t, g);
    TimeStepConfig cfg;
    auto next = exponential_step(op, zero, cfg);
    for (int a = 0; a < 2; ++a)
        for (double x : next.values(a)) ASSERT_EQ(x, 0.0);
}

TEST(ExponentialStep, EquilibriumIsFixedPoint) {
    auto t = mixed();
    auto g = grid(10, 4.5, 8, 14.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(8));
    DistributionGrid f(t, g);
    for (int a = 0; a < 2; ++a) f.values(a) = maxwellian(f, a, 1.0, {0.2, 0, 0}, 1.1);
    TimeStepConfig cfg;
    cfg.dt = 0.002;
    auto next = exponential_step(op, f, cfg);
    EXPECT_LE(l1_diff(next, f) / l1_norm(f), 1e-12 * cfg.dt);
}

TEST(ExponentialStep, PureLossDecaysExactly) {
    auto t = mixed();
    auto g = grid(4, 2.0, 3, 6.0);
    DistributionGrid f = drifting_pair(t, g);
    OperatorOutput out;
    for (int a = 0; a < 2; ++a) {
        out.rate.emplace_back(f.species_size(a), 2.5);
        out.gain.emplace_back(f.species_size(a), 0.0);
    }
    auto next = detail::mild_update(f, out, 0.3);
    for (int a = 0; a < 2; ++a)
        for (std::size_t i = 0; i < f.values(a).size(); ++i)
            ASSERT_NEAR(next.values(a)[i], f.values(a)[i] * std::exp(-0.75), 1e-15 * f.values(a)[i]);
}

TEST(ExponentialStep, RejectsBadConfigurations) {
    auto t = mixed();
    auto g = grid(4, 2.0, 3, 6.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    auto f = drifting_pair(t, g);
    TimeStepConfig cfg;
    cfg.dt = -1.0;
    EXPECT_THROW(exponential_step(op, f, cfg), std::invalid_argument);
    cfg.dt = 0.01;
    cfg.truncation = 4;
    EXPECT_THROW(exponential_step(op, f, cfg), std::invalid_argument);
    cfg.truncation = 0;
    cfg.dt = 10.0;
    EXPECT_THROW(exponential_step(op, f, cfg), std::runtime_error);
    f.values(0)[0] = std::nan("");
    cfg.dt = 0.01;
    EXPECT_THROW(exponential_step(op, f, cfg), std::runtime_error);
}

TEST(Picard, ConvergesWithinFiveIterationsForSmallStep) {
    auto t = mixed();
    auto g = grid(8, 4.5, 6, 14.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(16));
    auto f = drifting_pair(t, g);
    TimeStepConfig cfg;
    cfg.dt = 0.001;
    cfg.scheme = TimeStepConfig::Scheme::Picard;
    StepReport rep;
    exponential_step(op, f, cfg, 1, &rep);
    EXPECT_LE(rep.picard_iterations, 5);
    EXPECT_LE(rep.picard_residual, 1e-10);
}

TEST(Picard, ReportsNonConvergence) {
    auto t = mixed();
    auto g = grid(6, 4.0, 4, 12.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(8));
    TimeStepConfig cfg;
    cfg.dt = 0.01;
    cfg.scheme = TimeStepConfig::Scheme::Picard;
    cfg.picard_max_iterations = 1;
    EXPECT_THROW(exponential_step(op, drifting_pair(t, g), cfg), std::runtime_error);
}

TEST(Trajectory, ZeroStepRunHasOnlyInitialPoint) {
    auto t = mixed();
    auto g = grid(4, 2.0, 3, 6.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    TimeStepConfig cfg;
    cfg.dt = 0.0;
    auto tr = picard_solve(op, drifting_pair(t, g), cfg);
    ASSERT_EQ(tr.points.size(), 1u);
    EXPECT_EQ(tr.points[0].time, 0.0);
}

TEST(Trajectory, FloorHoldsOverTenTruncatedSteps) {
    auto t = mixed();
    auto g = grid(8, 4.0, 6, 12.0);
    const int n = 6;
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0), n), g, mc(8));
    auto f0 = build_initial(drifting_pair(t, g), n);
    TimeStepConfig cfg;
    cfg.dt = 0.005;
    cfg.steps = 10;
    cfg.truncation = n;
    auto tr = picard_solve(op, f0, cfg);
    EXPECT_GE(tr.floor.amplitude, (1.0 - 1e-12) / n);
    EXPECT_GE(min_floor_ratio(tr), 1.0);
    // c grows at most linearly: the per-step increment is bounded by dt times
    // the largest rate over the smallest floor exponent.
    EXPECT_LT(tr.floor.rate, 0.5 + 10 * 0.5);
}

TEST(Trajectory, ConservationOverHundredStepsWithProjection) {
    auto t = mixed();
    auto g = grid(6, 4.0, 4, 12.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    TimeStepConfig cfg;
    cfg.dt = 0.005;
    cfg.steps = 100;
    auto tr = picard_solve(op, drifting_pair(t, g), cfg);
    EXPECT_LE(invariant_drift(tr, t), 1e-10);
    for (std::size_t k = 1; k < tr.points.size(); ++k) EXPECT_GT(tr.points[k].time, tr.points[k - 1].time);
}

TEST(Trajectory, ProjectionOffDriftsByQuadratureDefect) {
    auto t = mixed();
    auto g = grid(6, 4.0, 4, 12.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    TimeStepConfig cfg;
    cfg.dt = 0.005;
    cfg.steps = 5;
    cfg.project = false;
    auto tr = picard_solve(op, drifting_pair(t, g), cfg);
    EXPECT_GT(invariant_drift(tr, t), 1e-10);
    EXPECT_LT(invariant_drift(tr, t), 5e-2);
}

TEST(Trajectory, EntropyNonincreasingAndIdentityWithinTolerance) {
    auto t = mixed();
    auto g = grid(10, 4.5, 8, 14.0);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(16));
    TimeStepConfig cfg;
    cfg.dt = 0.002;
    cfg.steps = 6;
    auto tr = picard_solve(op, drifting_pair(t, g), cfg);
    EXPECT_LE(entropy_excess(tr), 0.0);
    for (std::size_t k = 1; k < tr.points.size(); ++k) {
        const auto& prev = tr.points[k - 1];
        double e = 0.0;
        for (double x : prev.dissipation) e += x;
        const double lhs = tr.points[k].entropy - prev.entropy + 0.25 * cfg.dt * e;
        const double tol = tr.points[k].entropy_step_bound + 0.75 * cfg.dt * prev.dissipation_sigma;
        EXPECT_LE(lhs, tol) << "step " << k;
    }
}

TEST(Trajectory, TwoTemperatureRelaxationIsMonotone) {
    SpeciesTable t({1.0, 1.0}, {2.0, 2.0}, 2);
    auto g = grid(10, 4.5);
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(32));
    DistributionGrid f(t, g);
    f.values(0) = maxwellian(f, 0, 1.0, {0, 0, 0}, 0.6);
    f.values(1) = maxwellian(f, 1, 0.5, {0, 0, 0}, 1.4);
    TimeStepConfig cfg;
    cfg.dt = 0.005;
    cfg.steps = 30;
    auto tr = picard_solve(op, f, cfg);
    auto temps = [](const TrajectoryPoint& p) {
        return std::pair{kinetic_temperature(p.moments.species[0]), kinetic_temperature(p.moments.species[1])};
    };
    const auto [a0, b0] = temps(tr.points.front());
    const double common = (tr.points.front().moments.species[0].number * a0 + tr.points.front().moments.species[1].number * b0) /
                          tr.points.front().moments.total.number;
    double gap = std::abs(a0 - b0);
    for (std::size_t k = 1; k < tr.points.size(); ++k) {
        const auto [a, b] = temps(tr.points[k]);
        EXPECT_LT(a, common);
        EXPECT_GT(b, common);
        EXPECT_LT(std::abs(a - b), gap) << "step " << k;
        gap = std::abs(a - b);
    }
    EXPECT_LT(gap, 0.8 * std::abs(a0 - b0));
}

TEST(Trajectory, RichardsonRatioOfFirstOrderScheme) {
    SpeciesTable t({1.0, 2.0}, {2.0, 2.0}, 2);
    auto g = grid(6, 3.5);
    QuadratureRule r;
    r.kind = QuadratureRule::Kind::Deterministic;
    r.polar_nodes = 3;
    r.azimuth_nodes = 6;
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, r);
    auto f0 = drifting_pair(SpeciesTable({1.0, 2.0}, {2.0, 2.0}, 2), g);
    const double horizon = 0.03;
    auto run = [&](int steps) {
        TimeStepConfig cfg;
        cfg.dt = horizon / steps;
        cfg.steps = steps;
        return picard_solve(op, f0, cfg).final_state;
    };
    const auto coarse = run(4), mid = run(8), fine = run(16);
    const double ratio = l1_diff(coarse, mid) / l1_diff(mid, fine);
    EXPECT_GE(ratio, 1.8);
    EXPECT_LE(ratio, 2.2);
}

TEST(Trajectory, TransportKeepsMassAndUniformState) {
    auto t = mixed();
    GridSpec g = grid(6, 3.0, 4, 10.0);
    g.spatial = {1, 4, 2.0};
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant(1.0)), g, mc(4));
    auto f = drifting_pair(t, g);
    TimeStepConfig cfg;
    cfg.dt = 0.005;
    cfg.steps = 3;
    cfg.transport = true;
    auto tr = picard_solve(op, f, cfg);
    EXPECT_LE(invariant_drift(tr, t), 1e-10);
    // A spatially uniform state stays uniform under free streaming.
    DistributionGrid u = f;
    free_stream(u, 0.37);
    EXPECT_LE(l1_diff(u, f), 1e-13 * l1_norm(f));
}
