#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "polykin/geometry.hpp"
#include "polykin/quadrature.hpp"

using namespace polykin;

namespace {

SpeciesTable four_types() { return SpeciesTable({1.0, 2.5, 0.7, 1.9}, {2.0, 2.0, 4.0, 5.5}, 2); }

struct RandomFrame {
    int a, b;
    Vec3 xi, xs;
    double I, Is;
    CollisionParams p;
};

RandomFrame draw(Rng& rng, int a, int b) {
    std::normal_distribution<double> n(0.0, 1.5);
    RandomFrame r{a, b, {n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)}, 3.0 * open01(rng), 3.0 * open01(rng), {}};
    r.p.kinetic_share = open01(rng);
    r.p.split = open01(rng);
    r.p.direction = sample_sphere(rng);
    return r;
}

}  // namespace

TEST(TotalEnergy, MonatomicPair) {
    SpeciesTable t({1.0, 1.0}, {2.0, 2.0}, 2);
    EXPECT_DOUBLE_EQ(total_energy(t, 0, 1, {1, 0, 0}, {-1, 0, 0}, 0, 0), 1.0);
}

TEST(TotalEnergy, PolyatomicPairAddsInternal) {
    SpeciesTable t({1.0, 1.0}, {4.0, 4.0}, 0);
    EXPECT_DOUBLE_EQ(total_energy(t, 0, 1, {1, 0, 0}, {-1, 0, 0}, 0.5, 0.5), 2.0);
    EXPECT_EQ(total_energy(t, 0, 1, {0, 0, 0}, {0, 0, 0}, 0, 0), 0.0);
}

TEST(TotalEnergy, RejectsNegativeInternal) {
    SpeciesTable t({1.0, 1.0}, {4.0, 4.0}, 0);
    EXPECT_THROW(total_energy(t, 0, 1, {0, 0, 0}, {1, 0, 0}, -0.1, 0), std::invalid_argument);
}

TEST(PostCollision, WorkedPolyatomicExample) {
    SpeciesTable t({1.0, 1.0}, {4.0, 4.0}, 0);
    auto f = post_collision(t, 0, 1, {1, 0, 0}, {0, 0, 0}, 0.5, 0.5, {0.5, 0.5, {0, 1, 0}});
    const double s = std::sqrt(2.5);
    EXPECT_NEAR(f.energy, 1.25, 1e-15);
    EXPECT_NEAR(f.relative_speed_post, s, 1e-15);
    EXPECT_NEAR(f.internal_post, 0.3125, 1e-15);
    EXPECT_NEAR(f.internal_star_post, 0.3125, 1e-15);
    EXPECT_NEAR(f.xi_post[0], 0.5, 1e-15);
    EXPECT_NEAR(f.xi_post[1], 0.5 * s, 1e-15);
    EXPECT_NEAR(f.xi_post[2], 0.0, 1e-15);
    EXPECT_NEAR(f.xi_star_post[1], -0.5 * s, 1e-15);
    EXPECT_NEAR(internal_energy_gap(f), -0.375, 1e-15);
    auto d = dual_parameters(f);
    EXPECT_NEAR(d.kinetic_share, 0.2, 1e-15);
    EXPECT_NEAR(d.split, 0.5, 1e-15);
}

TEST(PostCollision, IdentityParametersReturnPreState) {
    SpeciesTable t({1.0, 2.0}, {4.0, 3.0}, 0);
    Vec3 xi{0.3, -0.2, 1.1}, xs{-0.5, 0.4, 0.2};
    auto f0 = post_collision(t, 0, 1, xi, xs, 0.8, 0.3, {0.5, 0.5, {1, 0, 0}});
    auto d = dual_parameters(f0);
    auto f = post_collision(t, 0, 1, xi, xs, 0.8, 0.3, d);
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(f.xi_post[k], xi[k], 1e-14);
        EXPECT_NEAR(f.xi_star_post[k], xs[k], 1e-14);
    }
    EXPECT_NEAR(f.internal_post, 0.8, 1e-14);
    EXPECT_NEAR(f.internal_star_post, 0.3, 1e-14);
    EXPECT_NEAR(internal_energy_gap(f), 0.0, 1e-14);
}

TEST(PostCollision, MonatomicPairHasNoGap) {
    SpeciesTable t({1.0, 2.0}, {2.0, 2.0}, 2);
    auto f = post_collision(t, 0, 1, {1, 2, 3}, {0, 0, 1}, 0, 0, {0.3, 0.9, {0, 0, 1}});
    EXPECT_EQ(internal_energy_gap(f), 0.0);
    EXPECT_DOUBLE_EQ(f.relative_speed_post, f.relative_speed);
}

TEST(PostCollision, MixedPairGivesRemainderToPolyatomicPartner) {
    SpeciesTable t({1.0, 2.0}, {2.0, 4.0}, 1);
    auto f = post_collision(t, 0, 1, {1, 0, 0}, {0, 0, 0}, 0.0, 0.6, {0.25, 0.9, {0, 0, 1}});
    EXPECT_NEAR(f.internal_star_post, 0.75 * f.energy, 1e-15);
    EXPECT_EQ(f.internal_post, 0.0);
    auto g = post_collision(t, 1, 0, {1, 0, 0}, {0, 0, 0}, 0.6, 0.0, {0.25, 0.9, {0, 0, 1}});
    EXPECT_NEAR(g.internal_post, 0.75 * g.energy, 1e-15);
    EXPECT_EQ(g.internal_star_post, 0.0);
}

TEST(PostCollision, RejectsBadParameters) {
    SpeciesTable t({1.0, 1.0}, {4.0, 4.0}, 0);
    EXPECT_THROW(post_collision(t, 0, 1, {1, 0, 0}, {}, 0.1, 0.1, {1.2, 0.5, {1, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(post_collision(t, 0, 1, {1, 0, 0}, {}, 0.1, 0.1, {0.5, -0.1, {1, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(post_collision(t, 0, 1, {1, 0, 0}, {}, 0.1, 0.1, {0.5, 0.5, {1, 1e-4, 0}}), std::invalid_argument);
}

TEST(DualParameters, DegenerateRelativeVelocity) {
    SpeciesTable t({1.0, 1.0}, {4.0, 4.0}, 0);
    auto f = post_collision(t, 0, 1, {1, 0, 0}, {1, 0, 0}, 0.5, 0.5, {0.4, 0.5, {0, 1, 0}});
    EXPECT_THROW(dual_parameters(f), std::domain_error);
}

TEST(PostCollision, ConservationOverRandomFrames) {
    auto t = four_types();
    Rng rng(17);
    const int pairs[4][2] = {{0, 1}, {0, 2}, {2, 1}, {2, 3}};
    for (int trial = 0; trial < 20000; ++trial) {
        const auto& pr = pairs[trial % 4];
        auto r = draw(rng, pr[0], pr[1]);
        auto f = post_collision(t, r.a, r.b, r.xi, r.xs, r.I, r.Is, r.p);
        const double ma = t.mass(r.a), mb = t.mass(r.b);
        double scale = 0.0;
        for (int k = 0; k < 3; ++k) scale = std::max({scale, std::abs(ma * r.xi[k]), std::abs(mb * r.xs[k])});
        for (int k = 0; k < 3; ++k) {
            const double before = ma * r.xi[k] + mb * r.xs[k];
            const double after = ma * f.xi_post[k] + mb * f.xi_star_post[k];
            ASSERT_LE(std::abs(before - after), 1e-12 * scale);
        }
        const double e_before = 0.5 * ma * norm2(r.xi) + 0.5 * mb * norm2(r.xs) + f.internal + f.internal_star;
        const double e_after = 0.5 * ma * norm2(f.xi_post) + 0.5 * mb * norm2(f.xi_star_post) + f.internal_post +
                               f.internal_star_post;
        ASSERT_LE(std::abs(e_before - e_after), 1e-12 * e_before);
        const double split_sum = f.internal_post + f.internal_star_post + 0.5 * f.mu * f.relative_speed_post * f.relative_speed_post;
        ASSERT_LE(std::abs(split_sum - f.energy), 1e-12 * f.energy);
        const double gap = internal_energy_gap(f);
        ASSERT_NEAR(f.relative_speed_post * f.relative_speed_post + 2.0 * gap / f.mu,
                    f.relative_speed * f.relative_speed, 1e-11 * (1.0 + f.relative_speed * f.relative_speed));
    }
}

TEST(DualParameters, InvolutionOverRandomFrames) {
    auto t = four_types();
    Rng rng(5);
    const int pairs[4][2] = {{0, 1}, {1, 3}, {3, 0}, {2, 3}};
    for (int trial = 0; trial < 10000; ++trial) {
        const auto& pr = pairs[trial % 4];
        auto r = draw(rng, pr[0], pr[1]);
        auto f = post_collision(t, r.a, r.b, r.xi, r.xs, r.I, r.Is, r.p);
        auto back = reverse_frame(t, f);
        const double vs = 1.0 + norm(r.xi) + norm(r.xs);
        for (int k = 0; k < 3; ++k) {
            ASSERT_NEAR(back.xi_post[k], r.xi[k], 1e-12 * vs);
            ASSERT_NEAR(back.xi_star_post[k], r.xs[k], 1e-12 * vs);
        }
        ASSERT_NEAR(back.internal_post, f.internal, 1e-12 * f.energy);
        ASSERT_NEAR(back.internal_star_post, f.internal_star, 1e-12 * f.energy);
        ASSERT_NEAR(back.energy, f.energy, 1e-12 * f.energy);
    }
}

TEST(MeasureWeight, Endpoints) {
    EXPECT_EQ(measure_weight(0.5, 1.0, 1.0), 0.0);
    EXPECT_EQ(measure_weight(0.5, 1.0, 0.0), 0.0);
}

TEST(MeasureWeight, WorkedValue) {
    // sqrt(2)/0.5^1.5 * 1 * 0.5 * sqrt(0.5) = sqrt(2)
    EXPECT_NEAR(measure_weight(0.5, 1.0, 0.5), std::sqrt(2.0), 1e-15);
}
