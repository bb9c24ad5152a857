#include <gtest/gtest.h>

#include <cmath>

#include "polykin/diagnostics.hpp"

using namespace polykin;

namespace {

SpeciesTable four_types() { return SpeciesTable({1.0, 2.5, 0.7, 1.9}, {2.0, 2.0, 4.0, 5.5}, 2); }

GridSpec small_grid(int n, double vmax, int internal, double imax) {
    GridSpec g;
    g.velocity = {n, vmax};
    g.internal = InternalGrid::make_uniform(internal, imax);
    return g;
}

}  // namespace

TEST(OracleSeed, DeterministicAndNameDependent) {
    EXPECT_EQ(oracle_seed(42, "jacobian"), oracle_seed(42, "jacobian"));
    EXPECT_NE(oracle_seed(42, "jacobian"), oracle_seed(42, "measure"));
    EXPECT_NE(oracle_seed(42, "jacobian"), oracle_seed(43, "jacobian"));
}

TEST(FrameChecks, ConservationAndInvolution) {
    auto t = four_types();
    auto c = frame_conservation_check(t, 20000, 1);
    EXPECT_TRUE(c.pass) << c.statistic;
    EXPECT_EQ(c.samples, 20000u);
    auto i = involution_check(t, 5000, 2);
    EXPECT_TRUE(i.pass) << i.statistic;
}

TEST(KernelIdentitySuite, AllIdentitiesHold) {
    auto t = four_types();
    auto reports = kernel_identity_suite(t, {CrossSectionModel::constant(1.3), CrossSectionModel::power_law(0.8, 0.6)},
                                         {0, 3, 16}, 2000, 5);
    int support = 0, micro = 0;
    for (const auto& r : reports) {
        EXPECT_TRUE(r.pass) << r.name << " " << r.statistic;
        support += r.name.rfind("support", 0) == 0;
        micro += r.name.rfind("microreversibility", 0) == 0;
    }
    EXPECT_EQ(support, 4);
    EXPECT_EQ(micro, 2);
}

TEST(MeasureInvariance, ConstantFunctionGivesZeroDifference) {
    auto t = four_types();
    auto r = measure_invariance_mc(t, 2, 3, CrossSectionModel::constant(), TestFunctional::One, MeasureSwap::PrePost, 1000, 3);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(MeasureInvariance, PairEnergyIsExactPerSample) {
    auto t = four_types();
    for (auto [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{3, 1}, std::pair{2, 3}}) {
        auto r = measure_invariance_mc(t, a, b, CrossSectionModel::power_law(1.0, 0.5), TestFunctional::PairEnergy,
                                       MeasureSwap::PrePost, 5000, 4);
        EXPECT_LE(std::abs(r.statistic), 1e-12 * r.scale) << a << b;
    }
}

TEST(MeasureInvariance, NonInvariantFunctionalWithinThreeSigma) {
    auto t = four_types();
    for (auto [a, b] : {std::pair{0, 2}, std::pair{2, 3}})
        for (auto swap : {MeasureSwap::PrePost, MeasureSwap::Partner, MeasureSwap::Combined}) {
            auto r = measure_invariance_mc(t, a, b, CrossSectionModel::power_law(1.0, 0.5), TestFunctional::FirstEnergy,
                                           swap, 200000, 6);
            EXPECT_TRUE(r.pass) << r.name << " " << r.statistic << " +- " << r.sigma;
            EXPECT_LE(r.sigma, 0.01 * r.scale);
        }
}

TEST(MeasureInvariance, ReproducibleGivenSeed) {
    auto t = four_types();
    auto run = [&](std::uint64_t seed) {
        return measure_invariance_mc(t, 2, 3, CrossSectionModel::constant(), TestFunctional::FirstEnergy,
                                     MeasureSwap::PrePost, 20000, seed)
            .statistic;
    };
    EXPECT_EQ(run(8), run(8));
    EXPECT_NE(run(8), run(9));
}

TEST(MeasureInvariance, EmptySupportIsReported) {
    auto t = four_types();
    EXPECT_THROW(measure_invariance_mc(t, 0, 1, CrossSectionModel::constant(), TestFunctional::One, MeasureSwap::PrePost,
                                       1000, 1, 1),
                 std::runtime_error);
}

TEST(JacobianCheck, AgreesWithinThreeSigma) {
    auto t = four_types();
    auto r = jacobian_check(t, 2, 3, 200000, 10);
    EXPECT_TRUE(r.pass) << r.statistic << " +- " << r.sigma;
    EXPECT_LE(r.sigma, 0.01 * r.scale);
    // Both estimates target (2 pi)^3 / 2.
    EXPECT_NEAR(r.scale, std::pow(2.0 * std::numbers::pi, 3) / 2.0, 4.0 * r.sigma);
}

TEST(JacobianCheck, DoublingSamplesShrinksSigma) {
    auto t = four_types();
    const double s1 = jacobian_check(t, 2, 2, 100000, 12).sigma;
    const double s2 = jacobian_check(t, 2, 2, 200000, 12).sigma;
    EXPECT_GT(s1 / s2, 1.2);
    EXPECT_LT(s1 / s2, 1.7);
}

TEST(JacobianCheck, RequiresTwoPolyatomicPartners) {
    auto t = four_types();
    EXPECT_THROW(jacobian_check(t, 0, 2, 100, 1), std::invalid_argument);
}

TEST(DecayHypothesis, ConstantCrossSectionRatioDecreases) {
    auto t = four_types();
    for (auto [a, b] : {std::pair{0, 1}, std::pair{2, 3}}) {
        auto r = hypothesis_decay_check(make_pair_kernel(t, a, b, CrossSectionModel::constant()), 1.0, 3);
        EXPECT_TRUE(r.pass) << r.name;
        EXPECT_LT(r.statistic, r.scale);
    }
}

TEST(DecayHypothesis, TruncatedKernelVanishesBeyondSupport) {
    auto t = four_types();
    auto r = hypothesis_decay_check(make_pair_kernel(t, 0, 1, CrossSectionModel::constant(), 2), 1.0, 3);
    EXPECT_EQ(r.statistic, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(DecayHypothesis, LinearPowerLawIsBoundedNotDecaying) {
    auto t = four_types();
    auto r = hypothesis_decay_check(make_pair_kernel(t, 0, 1, CrossSectionModel::power_law(1.0, 1.0)), 1.0, 3);
    EXPECT_FALSE(r.pass);
    EXPECT_LT(r.tolerance, 2.0 * r.scale);
}

TEST(ConservationLedger, EmptyTrajectoryGivesEmptyLedger) {
    Trajectory tr;
    EXPECT_TRUE(conservation_ledger(tr, four_types()).empty());
}

TEST(ConservationLedger, FlagsDriftOnlyWithProjection) {
    SpeciesTable t({1.0}, {2.0}, 1);
    GridSpec g = small_grid(6, 3.0, 2, 4.0);
    auto f = equilibrium_mixture(t, g);
    Trajectory tr;
    TrajectoryPoint p0;
    p0.moments = moments(f);
    p0.invariants = total_invariants(f);
    TrajectoryPoint p1 = p0;
    p1.invariants[0] *= 1.0 + 1e-6;
    tr.points = {p0, p1};
    auto on = conservation_ledger(tr, t, 1e-10, true);
    ASSERT_EQ(on.size(), 5u);
    EXPECT_FALSE(on[0].pass);
    EXPECT_NEAR(on[0].statistic, 1e-6, 1e-12);
    for (std::size_t m = 1; m < on.size(); ++m) EXPECT_TRUE(on[m].pass);
    auto off = conservation_ledger(tr, t, 1e-10, false);
    EXPECT_TRUE(off[0].pass);
    EXPECT_EQ(off[0].statistic, on[0].statistic);
}

TEST(TruncationConvergence, GapsShrinkInTransitionLayers) {
    auto t = four_types();
    auto r = truncation_convergence(t, CrossSectionModel::power_law(1.0, 0.5), 20, 7);
    EXPECT_TRUE(r.pass) << r.statistic;
    EXPECT_LT(r.statistic, 1.0);
}

TEST(InitialDataConvergence, ConvergesAndKeepsFloor) {
    SpeciesTable t({1.0, 1.5}, {2.0, 5.0}, 1);
    auto raw = random_state(t, small_grid(8, 4.0, 6, 10.0), 3);
    auto reps = initial_data_convergence(raw);
    ASSERT_EQ(reps.size(), 2u);
    EXPECT_TRUE(reps[0].pass) << reps[0].statistic;
    EXPECT_TRUE(reps[1].pass) << reps[1].statistic;
    EXPECT_GE(reps[1].statistic, 1.0);
}

TEST(OperatorOracles, EntropyAndWeakForm) {
    SpeciesTable t({1.0, 1.5}, {2.0, 5.0}, 1);
    GridSpec g = small_grid(8, 4.0, 6, 10.0);
    QuadratureRule rule;
    rule.samples = 16;
    CollisionOperator op(CollisionModel::uniform(t, CrossSectionModel::constant()), g, rule);
    std::vector<DistributionGrid> states{random_state(t, g, 1), random_state(t, g, 2)};
    auto h = h_theorem_random(op, states);
    EXPECT_TRUE(h.pass) << h.statistic;
    auto strict = h_theorem_strict(op, temperature_mixture(t, g, {0.7, 1.4}), "two temperatures");
    EXPECT_TRUE(strict.pass) << strict.statistic << " " << strict.sigma;
    auto eq = h_theorem_equilibrium(op, equilibrium_mixture(t, g));
    EXPECT_TRUE(eq.pass) << eq.statistic << " " << eq.tolerance;
    for (const auto& r : weak_form_check(op, states, true, 1e-12)) EXPECT_TRUE(r.pass) << r.name;
    for (const auto& r : weak_form_check(op, states, false, 0.1)) EXPECT_TRUE(r.pass) << r.name << " " << r.statistic;
    auto ark = arkeryd_check(op, states, {2.0, 10.0});
    EXPECT_TRUE(ark.pass) << ark.statistic;
    EXPECT_LT(equilibrium_residual(op, equilibrium_mixture(t, g)), 1e-10);
}
