#include <gtest/gtest.h>

#include "polykin/species.hpp"

using namespace polykin;

TEST(ReducedMass, EqualUnitMasses) {
    SpeciesTable t({1.0, 1.0}, {2.0, 2.0}, 2);
    auto r = reduced_mass(t, 0, 1);
    EXPECT_DOUBLE_EQ(r.mu, 0.5);
    EXPECT_DOUBLE_EQ(r.weight_a, 0.5);
    EXPECT_DOUBLE_EQ(r.weight_b, 0.5);
}

TEST(ReducedMass, EqualMassesOfTwo) {
    SpeciesTable t({2.0, 2.0}, {2.0, 2.0}, 2);
    EXPECT_DOUBLE_EQ(reduced_mass(t, 0, 1).mu, 1.0);
}

TEST(ReducedMass, UnequalMasses) {
    SpeciesTable t({1.0, 3.0}, {2.0, 2.0}, 2);
    auto r = reduced_mass(t, 0, 1);
    EXPECT_DOUBLE_EQ(r.mu, 0.75);
    EXPECT_DOUBLE_EQ(r.weight_a, 0.25);
    EXPECT_DOUBLE_EQ(r.weight_b, 0.75);
}

TEST(ReducedMass, SymmetricInPair) {
    SpeciesTable t({1.3, 2.9, 0.4}, {2.0, 5.0, 3.5}, 1);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) EXPECT_EQ(reduced_mass(t, a, b).mu, reduced_mass(t, b, a).mu);
}

TEST(ReducedMass, IndexOutOfRange) {
    SpeciesTable t({1.0}, {2.0}, 1);
    EXPECT_THROW(reduced_mass(t, 0, 1), std::out_of_range);
    EXPECT_THROW(reduced_mass(t, -1, 0), std::out_of_range);
}

TEST(SpeciesTable, RejectsDofBelowTwo) {
    try {
        SpeciesTable t({1.0, 1.0}, {2.0, 1.5}, 1);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("dof below 2"), std::string::npos);
    }
}

TEST(SpeciesTable, RejectsMonatomicCountAboveSpeciesCount) {
    auto p = SpeciesTable::check({1.0, 1.0}, {2.0, 2.0}, 3);
    ASSERT_FALSE(p.empty());
    EXPECT_EQ(p.front(), "monatomic count exceeds species count");
}

TEST(SpeciesTable, ReportsEveryProblem) {
    auto p = SpeciesTable::check({-1.0, 1.0}, {3.0, 1.0}, 1);
    EXPECT_EQ(p.size(), 3u);  // mass, monatomic dof, dof below 2
}

TEST(SpeciesTable, PracticalLimits) {
    std::vector<double> m(17, 1.0), d(17, 2.0);
    EXPECT_FALSE(SpeciesTable::check(m, d, 17).empty());
    EXPECT_FALSE(SpeciesTable::check({1.0}, {65.0}, 0).empty());
}

TEST(InvariantBasis, SingleMonatomic) {
    SpeciesTable t({2.0}, {2.0}, 1);
    auto basis = collision_invariant_basis(t);
    ASSERT_EQ(basis.size(), 5u);
    Microstate z{0, {1.0, -2.0, 3.0}, 0.0};
    EXPECT_DOUBLE_EQ(basis[0](t, z), 1.0);
    EXPECT_DOUBLE_EQ(basis[1](t, z), 2.0);
    EXPECT_DOUBLE_EQ(basis[2](t, z), -4.0);
    EXPECT_DOUBLE_EQ(basis[3](t, z), 6.0);
    EXPECT_DOUBLE_EQ(basis[4](t, z), 2.0 * 14.0);
}

TEST(InvariantBasis, MixedPairEnergyCountsInternal) {
    SpeciesTable t({1.0, 2.0}, {2.0, 4.0}, 1);
    auto basis = collision_invariant_basis(t);
    ASSERT_EQ(basis.size(), 6u);
    Microstate poly{1, {1.0, 0.0, 0.0}, 0.7};
    EXPECT_DOUBLE_EQ(basis[5](t, poly), 2.0 * 1.0 + 2.0 * 0.7);
    Microstate mono{0, {1.0, 0.0, 0.0}, 0.7};
    EXPECT_DOUBLE_EQ(basis[5](t, mono), 1.0);
    EXPECT_DOUBLE_EQ(basis[0](t, poly), 0.0);
    EXPECT_DOUBLE_EQ(basis[1](t, poly), 1.0);
}

TEST(InvariantBasis, EnergyVanishesAtRest) {
    SpeciesTable t({1.0, 2.0}, {2.0, 4.0}, 1);
    Microstate z{1, {0.0, 0.0, 0.0}, 0.0};
    EXPECT_EQ(collision_invariant_basis(t).back()(t, z), 0.0);
}
