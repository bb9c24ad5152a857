#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/beta.hpp>

#include "polykin/quadrature.hpp"

using namespace polykin;

TEST(Quadrature, LegendreIntegratesPolynomialsExactly) {
    auto r = gauss_legendre01(6);
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * std::pow(r.nodes[i], 11);
    EXPECT_NEAR(s, 1.0 / 12.0, 1e-14);
}

TEST(Quadrature, JacobiMassAndMoments) {
    for (auto [p, q] : {std::pair{1.0, 3.0}, std::pair{0.75, 0.0}, std::pair{2.5, 1.25}}) {
        auto r = gauss_jacobi01(8, p, q);
        double m0 = 0.0, m3 = 0.0;
        for (std::size_t i = 0; i < r.nodes.size(); ++i) {
            ASSERT_GT(r.nodes[i], 0.0);
            ASSERT_LT(r.nodes[i], 1.0);
            ASSERT_GT(r.weights[i], 0.0);
            m0 += r.weights[i];
            m3 += r.weights[i] * std::pow(r.nodes[i], 3);
        }
        EXPECT_NEAR(m0, boost::math::beta(p + 1, q + 1), 1e-13);
        EXPECT_NEAR(m3, boost::math::beta(p + 4, q + 1), 1e-13);
    }
}

TEST(Quadrature, SphereRuleClosedUnderReflection) {
    auto s = SphereRule::make(4, 6);
    double total = 0.0;
    for (std::size_t i = 0; i < s.directions.size(); ++i) {
        total += s.weights[i];
        const Vec3 m = -s.directions[i];
        bool found = false;
        for (const auto& d : s.directions) found |= norm(d - m) < 1e-14;
        EXPECT_TRUE(found);
    }
    EXPECT_NEAR(total, 4.0 * std::numbers::pi, 1e-13);
}

TEST(Quadrature, StreamKeysDiffer) {
    EXPECT_NE(stream_key({1, 2, 3}), stream_key({1, 3, 2}));
    EXPECT_EQ(stream_key({7, 8}), stream_key({7, 8}));
}

TEST(Quadrature, BetaSamplerMean) {
    Rng rng(3);
    double s = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) s += sample_beta(rng, 2.0, 4.0);
    EXPECT_NEAR(s / n, 2.0 / 6.0, 5e-3);
}
