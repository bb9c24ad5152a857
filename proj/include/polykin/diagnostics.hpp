#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "polykin/geometry.hpp"
#include "polykin/integrator.hpp"
#include "polykin/kernels.hpp"
#include "polykin/operator.hpp"
#include "polykin/quadrature.hpp"
#include "polykin/state.hpp"

namespace polykin {

// Outcome of one verification oracle. For Monte-Carlo oracles `sigma` is the
// standard error of `statistic`; deterministic oracles leave it at 0.
struct OracleReport {
    std::string name;
    double statistic = 0.0;
    double sigma = 0.0;
    double tolerance = 0.0;
    double scale = 0.0;
    bool pass = false;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
    std::string note;
};

// Per-oracle seed: the master seed folded with a hash of the oracle name.
inline std::uint64_t oracle_seed(std::uint64_t master, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) h = (h ^ c) * 0x100000001b3ULL;
    return stream_key({master, h});
}

namespace detail {

inline Vec3 gaussian_vec(Rng& rng, double sd) {
    std::normal_distribution<double> n(0.0, sd);
    const double x = n(rng), y = n(rng), z = n(rng);
    return {x, y, z};
}

inline CollisionParams random_params(Rng& rng) {
    CollisionParams p;
    p.kinetic_share = open01(rng);
    p.split = open01(rng);
    p.direction = sample_sphere(rng);
    return p;
}

// Parameters on the lattice k / 2^30, where 1 - r is exact, so that the
// partner swap r -> 1 - r adds no rounding of its own.
inline CollisionParams lattice_params(Rng& rng) {
    const double step = std::ldexp(1.0, -30);
    auto draw = [&] { return step * static_cast<double>(1 + rng() % ((std::uint64_t{1} << 30) - 1)); };
    CollisionParams p;
    p.kinetic_share = draw();
    p.split = draw();
    p.direction = sample_sphere(rng);
    return p;
}

inline double relative_gap(double x, double y, double scale) {
    const double s = std::max({std::abs(x), std::abs(y), scale});
    return s > 0.0 ? std::abs(x - y) / s : 0.0;
}

// Frame of the same collision with the partners' roles exchanged.
inline CollisionFrame partner_frame(const SpeciesTable& t, const CollisionFrame& f) {
    CollisionParams p = f.params;
    p.split = 1.0 - p.split;
    p.direction = -p.direction;
    return post_collision(t, f.b, f.a, f.xi_star, f.xi, f.internal_star, f.internal, p);
}

inline std::vector<std::pair<int, int>> ordered_pairs(const SpeciesTable& t) {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < t.count(); ++a)
        for (int b = 0; b < t.count(); ++b) out.emplace_back(a, b);
    return out;
}

inline OracleReport threshold_report(std::string name, double statistic, double tolerance, std::uint64_t samples,
                                     std::uint64_t seed) {
    OracleReport r;
    r.name = std::move(name);
    r.statistic = statistic;
    r.tolerance = tolerance;
    r.pass = std::abs(statistic) <= tolerance;
    r.samples = samples;
    r.seed = seed;
    return r;
}

}  // namespace detail

// Largest relative residual of mass, momentum and energy over random frames
// of every ordered species pair.
inline OracleReport frame_conservation_check(const SpeciesTable& t, std::uint64_t frames, std::uint64_t seed,
                                             double tolerance = 1e-12) {
    Rng rng(seed);
    const auto pairs = detail::ordered_pairs(t);
    const auto basis = collision_invariant_basis(t);
    double worst = 0.0;
    for (std::uint64_t i = 0; i < frames; ++i) {
        const auto [a, b] = pairs[i % pairs.size()];
        const auto f = post_collision(t, a, b, detail::gaussian_vec(rng, 1.5), detail::gaussian_vec(rng, 1.5),
                                      3.0 * open01(rng), 3.0 * open01(rng), detail::random_params(rng));
        const Microstate pre_a{a, f.xi, f.internal}, pre_b{b, f.xi_star, f.internal_star};
        const Microstate post_a{a, f.xi_post, f.internal_post}, post_b{b, f.xi_star_post, f.internal_star_post};
        for (const auto& phi : basis) {
            const double x = phi(t, pre_a), y = phi(t, pre_b), u = phi(t, post_a), v = phi(t, post_b);
            const double scale = std::max({std::abs(x), std::abs(y), std::abs(u), std::abs(v)});
            if (scale > 0.0) worst = std::max(worst, std::abs(x + y - u - v) / scale);
        }
    }
    return detail::threshold_report("collision frame conservation", worst, tolerance, frames, seed);
}

// Rebuilds the pre state from the post state with the dual parameters.
inline OracleReport involution_check(const SpeciesTable& t, std::uint64_t frames, std::uint64_t seed,
                                     double tolerance = 1e-12) {
    Rng rng(seed);
    const auto pairs = detail::ordered_pairs(t);
    double worst = 0.0;
    for (std::uint64_t i = 0; i < frames; ++i) {
        const auto [a, b] = pairs[i % pairs.size()];
        const auto f = post_collision(t, a, b, detail::gaussian_vec(rng, 1.5), detail::gaussian_vec(rng, 1.5),
                                      3.0 * open01(rng), 3.0 * open01(rng), detail::random_params(rng));
        const auto back = reverse_frame(t, f);
        const double vs = 1.0 + norm(f.xi) + norm(f.xi_star);
        worst = std::max(worst, norm(back.xi_post - f.xi) / vs);
        worst = std::max(worst, norm(back.xi_star_post - f.xi_star) / vs);
        worst = std::max(worst, std::abs(back.internal_post - f.internal) / f.energy);
        worst = std::max(worst, std::abs(back.internal_star_post - f.internal_star) / f.energy);
    }
    return detail::threshold_report("dual parameter involution", worst, tolerance, frames, seed);
}

// Microreversibility, partner symmetry, the three swaps of the kernel, and
// (for truncated kernels) vanishing outside the support, on random frames
// cycling through every ordered species pair.
inline std::vector<OracleReport> kernel_identity_suite(const SpeciesTable& t,
                                                       const std::vector<CrossSectionModel>& cross_sections,
                                                       const std::vector<int>& truncations, std::uint64_t samples,
                                                       std::uint64_t seed, double tolerance = 1e-12) {
    std::vector<OracleReport> out;
    const auto pairs = detail::ordered_pairs(t);
    for (std::size_t ci = 0; ci < cross_sections.size(); ++ci)
        for (int n : truncations) {
            const auto& cs = cross_sections[ci];
            const std::uint64_t s = stream_key({seed, ci, static_cast<std::uint64_t>(n)});
            Rng rng(s);
            double micro = 0.0, sym = 0.0, swap_post = 0.0, swap_partner = 0.0, swap_both = 0.0, outside = 0.0;
            for (std::uint64_t i = 0; i < samples; ++i) {
                const auto [a, b] = pairs[i % pairs.size()];
                const auto pk = make_pair_kernel(t, a, b, cs, n);
                const auto rk = make_pair_kernel(t, b, a, cs, n);
                const auto f = post_collision(t, a, b, detail::gaussian_vec(rng, 1.5), detail::gaussian_vec(rng, 1.5),
                                              2.0 * open01(rng), 2.0 * open01(rng), detail::lattice_params(rng));
                const auto p = kernel_point(f);
                const double base = kernel_base(pk, p.speed, p.energy, p.share);
                const double v = kernel_value(pk, p);
                if (n == 0) {
                    const double lhs = std::pow(f.internal_post, pk.exp_a) * std::pow(f.internal_star_post, pk.exp_b) *
                                       f.relative_speed_post * f.relative_speed_post * sigma_inverse(pk, f);
                    const double rhs = std::pow(f.internal, pk.exp_a) * std::pow(f.internal_star, pk.exp_b) *
                                       f.relative_speed * f.relative_speed * sigma(pk, f);
                    micro = std::max(micro, detail::relative_gap(lhs, rhs, 0.0));
                }
                const auto g = detail::partner_frame(t, f);
                sym = std::max(sym, detail::relative_gap(sigma(pk, f), sigma(rk, g), 0.0));
                swap_post = std::max(swap_post, detail::relative_gap(kernel_value(pk, reverse_frame(t, f)), v, base));
                swap_partner = std::max(swap_partner, detail::relative_gap(kernel_value(rk, g), v, base));
                swap_both = std::max(swap_both, detail::relative_gap(kernel_value(rk, reverse_frame(t, g)), v, base));
                if (n > 0) {
                    // Relative speed beyond the band [1/n, n].
                    const double speed = n + 0.5 + 4.0 * open01(rng);
                    const auto far = post_collision(t, a, b, speed * sample_sphere(rng), {0, 0, 0}, 2.0 * open01(rng),
                                                    2.0 * open01(rng), detail::random_params(rng));
                    outside = std::max(outside, std::abs(kernel_value(pk, far)));
                    const double slow = open01(rng) / n;
                    const auto near = post_collision(t, a, b, slow * sample_sphere(rng), {0, 0, 0}, 2.0 * open01(rng),
                                                     2.0 * open01(rng), detail::random_params(rng));
                    outside = std::max(outside, std::abs(kernel_value(pk, near)));
                }
            }
            char label[48];
            if (cs.kind == CrossSectionModel::Kind::Constant) std::snprintf(label, sizeof label, "constant");
            else std::snprintf(label, sizeof label, "power %g", cs.exponent);
            std::string tag = label + (n ? ", n=" + std::to_string(n) : std::string(", untruncated"));
            if (n == 0) out.push_back(detail::threshold_report("microreversibility (" + tag + ")", micro, tolerance, samples, s));
            out.push_back(detail::threshold_report("partner symmetry (" + tag + ")", sym, tolerance, samples, s));
            out.push_back(detail::threshold_report("pre-post swap (" + tag + ")", swap_post, tolerance, samples, s));
            out.push_back(detail::threshold_report("partner swap (" + tag + ")", swap_partner, tolerance, samples, s));
            out.push_back(detail::threshold_report("combined swap (" + tag + ")", swap_both, tolerance, samples, s));
            if (n > 0) {
                auto r = detail::threshold_report("support (" + tag + ")", outside, 0.0, 2 * samples, s);
                r.pass = outside == 0.0;
                out.push_back(r);
            }
        }
    return out;
}

enum class TestFunctional { One, PairEnergy, FirstEnergy };
enum class MeasureSwap { PrePost, Partner, Combined };

namespace detail {

struct PairView {
    int a, b;
    Vec3 xi, xi_star;
    double I, I_star;
};

inline double eval_functional(const SpeciesTable& t, TestFunctional g, const PairView& z) {
    const double ea = 0.5 * t.mass(z.a) * norm2(z.xi) + (t.polyatomic(z.a) ? z.I : 0.0);
    switch (g) {
        case TestFunctional::One: return 1.0;
        case TestFunctional::FirstEnergy: return ea;
        case TestFunctional::PairEnergy:
            return ea + 0.5 * t.mass(z.b) * norm2(z.xi_star) + (t.polyatomic(z.b) ? z.I_star : 0.0);
    }
    return 0.0;
}

}  // namespace detail

// Monte-Carlo comparison of the integral of psi g against the collision
// measure before and after one of its symmetries, where psi is the
// collision-invariant envelope exp(-(m_a|xi|^2/2 + I + m_b|xi*|^2/2 + I*)).
// Velocities are drawn from Gaussians and internal energies from Gamma laws
// matching the degeneracy weights, so the sample weight is the kernel times a
// constant. The statistic is the mean paired difference.
inline OracleReport measure_invariance_mc(const SpeciesTable& t, int a, int b, const CrossSectionModel& cs,
                                          TestFunctional g, MeasureSwap swap, std::uint64_t samples,
                                          std::uint64_t seed, int truncation = 0) {
    if (samples < 2) throw std::invalid_argument("at least two samples are needed");
    const auto pk = make_pair_kernel(t, a, b, cs, truncation);
    const auto rk = make_pair_kernel(t, b, a, cs, truncation);
    const double ma = t.mass(a), mb = t.mass(b);
    const bool pa = t.polyatomic(a), pb = t.polyatomic(b);
    const double pi = std::numbers::pi;
    double K = std::pow(2.0 * pi / ma, 1.5) * std::pow(2.0 * pi / mb, 1.5) * 4.0 * pi;
    if (pa) K *= std::tgamma(pk.exp_a + 1.0);
    if (pb) K *= std::tgamma(pk.exp_b + 1.0);
    if (pk.has_share()) K *= boost::math::beta(1.5, pk.share_exp + 1.0);
    if (pk.has_split()) K *= boost::math::beta(pk.exp_a + 1.0, pk.exp_b + 1.0);

    std::gamma_distribution<double> ga(pk.exp_a + 1.0, 1.0), gb(pk.exp_b + 1.0, 1.0);
    Rng rng(seed);
    double sum = 0.0, sum2 = 0.0, base = 0.0, weight_sum = 0.0;
    for (std::uint64_t i = 0; i < samples; ++i) {
        const Vec3 xi = detail::gaussian_vec(rng, 1.0 / std::sqrt(ma));
        const Vec3 xs = detail::gaussian_vec(rng, 1.0 / std::sqrt(mb));
        const double I = pa ? ga(rng) : 0.0, Is = pb ? gb(rng) : 0.0;
        CollisionParams p;
        p.kinetic_share = pk.has_share() ? sample_beta(rng, 1.5, pk.share_exp + 1.0) : 1.0;
        p.split = pk.has_split() ? sample_beta(rng, pk.exp_a + 1.0, pk.exp_b + 1.0) : 0.5;
        p.direction = sample_sphere(rng);
        const auto f = post_collision(t, a, b, xi, xs, I, Is, p);
        const double w = K * kernel_value(pk, f);
        const double before = w * detail::eval_functional(t, g, {a, b, f.xi, f.xi_star, f.internal, f.internal_star});
        double after = 0.0;
        if (swap == MeasureSwap::PrePost) {
            after = w * detail::eval_functional(t, g, {a, b, f.xi_post, f.xi_star_post, f.internal_post, f.internal_star_post});
        } else {
            // Same sample read with the partners exchanged; its weight is the
            // (b, a) kernel on the exchanged frame.
            const auto h = detail::partner_frame(t, f);
            const double wr = K * kernel_value(rk, h);
            if (swap == MeasureSwap::Partner)
                after = wr * detail::eval_functional(t, g, {a, b, h.xi_star, h.xi, h.internal_star, h.internal});
            else
                after = wr * detail::eval_functional(
                                 t, g, {a, b, h.xi_star_post, h.xi_post, h.internal_star_post, h.internal_post});
        }
        const double d = after - before;
        sum += d;
        sum2 += d * d;
        base += before;
        weight_sum += std::abs(w);
    }
    if (!(weight_sum > 0.0)) throw std::runtime_error("zero effective sample size");
    const double N = static_cast<double>(samples);
    OracleReport r;
    const char* swap_name = swap == MeasureSwap::PrePost ? "pre-post" : swap == MeasureSwap::Partner ? "partner" : "combined";
    const char* g_name = g == TestFunctional::One ? "one" : g == TestFunctional::PairEnergy ? "pair energy" : "first energy";
    r.name = std::string("measure invariance ") + family_name(pk.spec.family) + " " + swap_name + " / " + g_name;
    r.statistic = sum / N;
    r.sigma = std::sqrt(std::max(0.0, sum2 / N - r.statistic * r.statistic) / (N - 1.0));
    r.scale = std::abs(base / N);
    r.tolerance = 3.0 * r.sigma + 1e-12 * r.scale;
    r.pass = std::abs(r.statistic) <= r.tolerance && r.sigma <= 0.01 * r.scale;
    r.samples = samples;
    r.seed = seed;
    return r;
}

// Integral of a Gaussian test function of the primed variables, estimated in
// the primed variables directly and through (G, E, R, r, omega) with the
// measure weight. Both partners must be polyatomic.
inline OracleReport jacobian_check(const SpeciesTable& t, int a, int b, std::uint64_t samples, std::uint64_t seed) {
    if (!t.polyatomic(a) || !t.polyatomic(b)) throw std::invalid_argument("both species must be polyatomic");
    if (samples < 2) throw std::invalid_argument("at least two samples are needed");
    const ReducedMass rm = reduced_mass(t, a, b);
    const Vec3 shift{0.3, -0.2, 0.1};
    auto phi = [&](const Vec3& x, const Vec3& y, double I, double Is) {
        return std::exp(-0.5 * norm2(x - shift) - 0.5 * norm2(y) - I - 2.0 * Is);
    };
    const double pi = std::numbers::pi;
    Rng rng(seed);
    double s1 = 0.0, q1 = 0.0, s2 = 0.0, q2 = 0.0;
    std::exponential_distribution<double> expo(1.0);
    // Direct: unit Gaussians for the velocities, unit exponentials for I.
    const double gauss3 = std::pow(2.0 * pi, 1.5);
    for (std::uint64_t i = 0; i < samples; ++i) {
        const Vec3 x = detail::gaussian_vec(rng, 1.0), y = detail::gaussian_vec(rng, 1.0);
        const double I = expo(rng), Is = expo(rng);
        const double dens = std::exp(-0.5 * norm2(x) - 0.5 * norm2(y) - I - Is) / (gauss3 * gauss3);
        const double v = phi(x, y, I, Is) / dens;
        s1 += v;
        q1 += v * v;
    }
    // Mapped: G ~ N(0, 1/2), E ~ Gamma(7/2), R ~ Beta(3/2, 2), r and omega uniform.
    const double sg = std::sqrt(0.5), shape_e = 3.5;
    std::gamma_distribution<double> ge(shape_e, 1.0);
    const double beta_r = boost::math::beta(1.5, 2.0);
    for (std::uint64_t i = 0; i < samples; ++i) {
        const Vec3 G = detail::gaussian_vec(rng, sg);
        const double E = ge(rng);
        const double R = sample_beta(rng, 1.5, 2.0);
        const double r = open01(rng);
        const Vec3 w = sample_sphere(rng);
        const double speed = std::sqrt(2.0 * R * E / rm.mu);
        const Vec3 x = G + (rm.weight_b * speed) * w, y = G - (rm.weight_a * speed) * w;
        const double I = r * (1.0 - R) * E, Is = (1.0 - r) * (1.0 - R) * E;
        const double pG = std::exp(-0.5 * norm2(G) / (sg * sg)) / std::pow(2.0 * pi * sg * sg, 1.5);
        const double pE = std::pow(E, shape_e - 1.0) * std::exp(-E) / std::tgamma(shape_e);
        const double pR = std::sqrt(R) * (1.0 - R) / beta_r;
        const double dens = pG * pE * pR / (4.0 * pi);
        const double v = phi(x, y, I, Is) * measure_weight(rm.mu, E, R) / dens;
        s2 += v;
        q2 += v * v;
    }
    const double N = static_cast<double>(samples);
    const double m1 = s1 / N, m2 = s2 / N;
    const double v1 = std::max(0.0, q1 / N - m1 * m1) / (N - 1.0), v2 = std::max(0.0, q2 / N - m2 * m2) / (N - 1.0);
    OracleReport rep;
    rep.name = "change of variables weight";
    rep.statistic = m2 - m1;
    rep.sigma = std::sqrt(v1 + v2);
    rep.scale = std::abs(m1);
    rep.tolerance = 3.0 * rep.sigma;
    rep.pass = std::abs(rep.statistic) <= rep.tolerance && rep.sigma <= 0.01 * rep.scale;
    rep.samples = 2 * samples;
    rep.seed = seed;
    return rep;
}

// (1 + |xi|^2 + I)^-1 times the window average of the reduced kernel over
// partners with |xi*| <= R (and I* <= R), at |xi| = I = R, 2R, 4R, 8R.
// Passes when the ratio decreases across each octave or has reached 0.
inline OracleReport hypothesis_decay_check(const PairKernel& pk, double R, std::uint64_t seed, int window = 64) {
    if (!(R > 0.0)) throw std::invalid_argument("window radius must be positive");
    const bool pa = pk.table.polyatomic(pk.a), pb = pk.table.polyatomic(pk.b);
    std::vector<double> ratios;
    for (int j = 0; j < 4; ++j) {
        const double s = R * std::ldexp(1.0, j);
        const double I = pa ? s : 0.0;
        Rng rng(stream_key({seed, static_cast<std::uint64_t>(j)}));
        double avg = 0.0;
        for (int i = 0; i < window; ++i) {
            const Vec3 partner = (R * std::cbrt(uniform01(rng))) * sample_sphere(rng);
            const double Is = pb ? R * open01(rng) : 0.0;
            const double speed = norm(Vec3{s, 0.0, 0.0} - partner);
            avg += pk.spec.truncated() ? reduced_a(pk, speed, I, Is, 0.0).value
                                       : reduced_a_closed_form(pk, speed, I + Is);
        }
        ratios.push_back(avg / window / (1.0 + s * s + I));
    }
    OracleReport r;
    r.name = std::string("decay hypothesis ") + family_name(pk.spec.family) +
             (pk.spec.truncated() ? " n=" + std::to_string(pk.spec.truncation) : " untruncated");
    r.statistic = ratios.back();
    r.scale = ratios.front();
    r.pass = true;
    for (std::size_t j = 1; j < ratios.size(); ++j)
        if (!(ratios[j] < ratios[j - 1] || ratios[j] == 0.0)) r.pass = false;
    double peak = 0.0;
    for (double x : ratios) peak = std::max(peak, x);
    r.tolerance = peak;
    r.note = r.pass ? "ratio decreasing" : "ratio not decreasing; bounded by " + std::to_string(peak);
    r.samples = static_cast<std::uint64_t>(4 * window);
    r.seed = seed;
    return r;
}

// Drift of each collision invariant against the first point. With the
// projection off the drift is reported but never fails.
inline std::vector<OracleReport> conservation_ledger(const Trajectory& tr, const SpeciesTable& t, double tolerance = 1e-10,
                                                     bool projection = true) {
    std::vector<OracleReport> out;
    if (tr.points.empty()) return out;
    const auto basis = collision_invariant_basis(t);
    const auto& first = tr.points.front();
    const double momentum_scale = std::sqrt(first.moments.total.mass * 2.0 * first.moments.total.energy());
    for (std::size_t m = 0; m < basis.size(); ++m) {
        const double ref = basis[m].kind == InvariantFunctional::Kind::Momentum ? momentum_scale : std::abs(first.invariants[m]);
        double worst = 0.0;
        for (const auto& p : tr.points)
            if (ref > 0.0) worst = std::max(worst, std::abs(p.invariants[m] - first.invariants[m]) / ref);
        auto r = detail::threshold_report(basis[m].name + " drift", worst, tolerance, tr.points.size() - 1, 0);
        r.scale = ref;
        if (!projection) {
            r.note = r.pass ? "projection off" : "projection off; drift is the quadrature defect";
            r.pass = true;
        }
        out.push_back(r);
    }
    return out;
}

// Sum of two Maxwellians per species with random density, drift and
// temperature; strictly positive on the grid.
inline DistributionGrid random_state(const SpeciesTable& t, const GridSpec& g, std::uint64_t seed) {
    DistributionGrid f(t, g);
    Rng rng(seed);
    for (int a = 0; a < t.count(); ++a) {
        auto& vals = f.values(a);
        std::fill(vals.begin(), vals.end(), 0.0);
        for (int c = 0; c < 2; ++c) {
            const double rho = 0.3 + 0.7 * uniform01(rng);
            const Vec3 u{1.2 * uniform01(rng) - 0.6, 1.2 * uniform01(rng) - 0.6, 1.2 * uniform01(rng) - 0.6};
            const double T = 0.6 + 0.8 * uniform01(rng);
            const auto m = maxwellian(f, a, rho, u, T);
            for (std::size_t i = 0; i < m.size(); ++i) vals[i] += m[i];
        }
    }
    return f;
}

inline DistributionGrid equilibrium_mixture(const SpeciesTable& t, const GridSpec& g, double T = 1.0,
                                            const Vec3& drift = {0, 0, 0}) {
    DistributionGrid f(t, g);
    for (int a = 0; a < t.count(); ++a) f.values(a) = maxwellian(f, a, 1.0, drift, T);
    return f;
}

// Species a at temperature T_a; all at rest with unit density.
inline DistributionGrid temperature_mixture(const SpeciesTable& t, const GridSpec& g, const std::vector<double>& T) {
    if (static_cast<int>(T.size()) != t.count()) throw std::invalid_argument("one temperature per species is needed");
    DistributionGrid f(t, g);
    for (int a = 0; a < t.count(); ++a) f.values(a) = maxwellian(f, a, 1.0, {0, 0, 0}, T[a]);
    return f;
}

// Worst |<Q, phi>| / <Q-, |phi|> over the given states, one report per
// invariant.
inline std::vector<OracleReport> weak_form_check(const CollisionOperator& op, const std::vector<DistributionGrid>& states,
                                                 bool project, double tolerance) {
    const auto basis = collision_invariant_basis(op.model().table);
    std::vector<OracleReport> out(basis.size());
    for (std::size_t m = 0; m < basis.size(); ++m) {
        out[m].name = std::string("weak form ") + (project ? "projected " : "") + basis[m].name;
        out[m].tolerance = tolerance;
        out[m].seed = op.rule().seed;
        out[m].samples = states.size();
    }
    for (const auto& f : states) {
        EvalOptions opt;
        opt.project = project;
        const auto res = op.evaluate(f, opt);
        const auto d = moment_defects(res, f);
        for (std::size_t m = 0; m < d.size(); ++m) {
            const double ratio = d[m].scale > 0.0 ? std::abs(d[m].value) / d[m].scale : 0.0;
            if (ratio >= out[m].statistic) {
                out[m].statistic = ratio;
                out[m].sigma = d[m].scale > 0.0 ? d[m].sigma / d[m].scale : 0.0;
                out[m].scale = d[m].scale;
            }
        }
    }
    for (auto& r : out) r.pass = r.statistic <= r.tolerance;
    return out;
}

// Tolerance on W: three standard errors of the sampled gain plus a round-off
// allowance relative to <Q+ + Q-, |log F|>.
inline double production_tolerance(const EntropyProduction& w) { return 3.0 * w.sigma + 1e-10 * w.scale; }

// Largest W / tolerance over the states; passes when every W is below its
// tolerance.
inline OracleReport h_theorem_random(const CollisionOperator& op, const std::vector<DistributionGrid>& states) {
    OracleReport r;
    r.name = "entropy production on random states";
    r.statistic = -std::numeric_limits<double>::infinity();
    r.tolerance = 1.0;
    r.samples = states.size();
    r.seed = op.rule().seed;
    for (const auto& f : states) {
        const auto w = entropy_production(op.evaluate(f), f);
        const double ratio = w.value / production_tolerance(w);
        if (ratio > r.statistic) {
            r.statistic = ratio;
            r.sigma = w.sigma;
            r.scale = w.scale;
        }
    }
    r.pass = r.statistic <= r.tolerance;
    r.note = "statistic is W in units of its tolerance";
    return r;
}

// W must lie below minus three standard errors.
inline OracleReport h_theorem_strict(const CollisionOperator& op, const DistributionGrid& f, std::string name) {
    const auto w = entropy_production(op.evaluate(f), f);
    OracleReport r;
    r.name = std::move(name);
    r.statistic = w.value;
    r.sigma = w.sigma;
    r.scale = w.scale;
    r.tolerance = 3.0 * w.sigma;
    r.pass = w.value < -r.tolerance;
    r.samples = 1;
    r.seed = op.rule().seed;
    r.note = "requires W below -3 sigma";
    return r;
}

inline OracleReport h_theorem_equilibrium(const CollisionOperator& op, const DistributionGrid& f) {
    const auto w = entropy_production(op.evaluate(f), f);
    OracleReport r;
    r.name = "entropy production at equilibrium";
    r.statistic = w.value;
    r.sigma = w.sigma;
    r.scale = w.scale;
    r.tolerance = production_tolerance(w);
    r.pass = std::abs(w.value) <= r.tolerance;
    r.samples = 1;
    r.seed = op.rule().seed;
    return r;
}

// ||Q(f, f)||_1 / ||Q-||_1 summed over species.
inline double equilibrium_residual(const CollisionOperator& op, const DistributionGrid& f) {
    const auto res = op.evaluate(f);
    double q = 0.0, loss = 0.0;
    for (int a = 0; a < f.species(); ++a) {
        q += integral_abs(f, a, collision_values(res, a));
        loss += integral_abs(f, a, res.loss[a]);
    }
    return loss > 0.0 ? q / loss : 0.0;
}

// Worst nodewise excess of Q+ over e / log K + K Q- beyond the per-node
// tolerance, across states, species and K.
inline OracleReport arkeryd_check(const CollisionOperator& op, const std::vector<DistributionGrid>& states,
                                  const std::vector<double>& Ks) {
    OracleReport r;
    r.name = "gain bounded by dissipation and loss";
    r.statistic = -std::numeric_limits<double>::infinity();
    r.pass = true;
    r.samples = states.size() * Ks.size();
    r.seed = op.rule().seed;
    for (const auto& f : states) {
        const auto res = op.evaluate(f);
        for (int a = 0; a < f.species(); ++a)
            for (double K : Ks) {
                const auto ar = arkeryd_split(res, a, K);
                r.statistic = std::max(r.statistic, ar.max_excess);
                r.scale = std::max(r.scale, ar.max_violation);
                if (!ar.holds) r.pass = false;
            }
    }
    r.note = "statistic is the largest violation beyond the nodewise tolerance";
    return r;
}

// Probes placed inside the cutoff layer of the n = 16 kernel: the relative
// speed band for two monatomic partners, the kinetic share cut otherwise.
// Passes when |B_n - B| strictly decreases over n = 8, 16, 32 at every probe.
inline OracleReport truncation_convergence(const SpeciesTable& t, const CrossSectionModel& cs, int probes,
                                           std::uint64_t seed) {
    Rng rng(seed);
    const auto pairs = detail::ordered_pairs(t);
    const int mid = 16;
    const double layer = ramp_width(mid);
    double worst = 0.0;
    int failures = 0;
    for (int i = 0; i < probes; ++i) {
        const auto [a, b] = pairs[static_cast<std::size_t>(i) % pairs.size()];
        const auto pk = make_pair_kernel(t, a, b, cs);
        CollisionFrame f;
        if (!pk.has_share()) {
            const double speed = 1.0 / mid + layer * (0.2 + 0.6 * open01(rng));
            const Vec3 w = sample_sphere(rng);
            f = post_collision(t, a, b, speed * w, {0, 0, 0}, 0.0, 0.0, {1.0, 0.5, w});
        } else {
            CollisionParams p;
            p.kinetic_share = 0.5 / mid + layer * (0.2 + 0.6 * open01(rng));
            p.split = 0.25 + 0.5 * open01(rng);
            const Vec3 dir = sample_sphere(rng);
            const double speed = 0.9 + 0.6 * open01(rng);
            // Keep the post relative velocity away from grazing incidence.
            Vec3 w = dir;
            const Vec3 other = sample_sphere(rng);
            const double mix = 0.4 * open01(rng);
            w = (1.0 - mix) * dir + mix * other;
            p.direction = (1.0 / norm(w)) * w;
            f = post_collision(t, a, b, speed * dir, {0, 0, 0}, 0.3 + 0.7 * open01(rng), 0.3 + 0.7 * open01(rng), p);
        }
        const double exact = kernel_value(pk, f);
        double prev = std::numeric_limits<double>::infinity();
        for (int n : {8, 16, 32}) {
            const double gap = std::abs(kernel_value(truncate(pk, n), f) - exact);
            const double ratio = std::isinf(prev) ? 0.0 : (prev > 0.0 ? gap / prev : 1.0);
            worst = std::max(worst, ratio);
            if (!(gap < prev)) ++failures;
            prev = gap;
        }
    }
    OracleReport r;
    r.name = "truncated kernel pointwise convergence";
    r.statistic = worst;
    r.tolerance = 1.0;
    r.pass = failures == 0;
    r.samples = static_cast<std::uint64_t>(probes);
    r.seed = seed;
    r.note = "statistic is the largest gap ratio between successive n";
    return r;
}

// Weighted L1 distance of build_initial(raw, n) to raw for n = 8, 16, 32,
// and the floor property of each output.
inline std::vector<OracleReport> initial_data_convergence(const DistributionGrid& raw, const std::vector<int>& ns = {8, 16, 32}) {
    double prev = std::numeric_limits<double>::infinity(), worst_ratio = 0.0, worst_floor = std::numeric_limits<double>::infinity();
    bool decreasing = true;
    const auto& vg = raw.grid().velocity;
    for (int n : ns) {
        const auto out = build_initial(raw, n);
        DistributionGrid diff = out;
        for (int a = 0; a < raw.species(); ++a)
            for (std::size_t i = 0; i < diff.values(a).size(); ++i) diff.values(a)[i] -= raw.values(a)[i];
        const double d = weighted_norm(diff);
        if (!(d < prev)) decreasing = false;
        if (!std::isinf(prev)) worst_ratio = std::max(worst_ratio, prev > 0.0 ? d / prev : 1.0);
        prev = d;
        for (int a = 0; a < raw.species(); ++a) {
            const int nk = raw.internal_count(a);
            for (std::size_t c = 0; c < raw.cells(); ++c)
                for (std::size_t v = 0; v < vg.size(); ++v) {
                    if (norm(vg.velocity(v)) > n) continue;
                    for (int k = 0; k < nk; ++k) {
                        if (raw.table().polyatomic(a)) {
                            const double I = raw.internal_at(a, k);
                            if (I < 1.0 / n || I > n) continue;
                        }
                        const std::size_t i = raw.index(a, c, v, k);
                        worst_floor = std::min(worst_floor, out.values(a)[i] / initial_floor(raw, a, c, v, k, n));
                    }
                }
        }
    }
    OracleReport conv;
    conv.name = "initial data convergence";
    conv.statistic = worst_ratio;
    conv.tolerance = 1.0;
    conv.pass = decreasing;
    conv.samples = ns.size();
    conv.note = "statistic is the largest weighted L1 gap ratio between successive n";
    OracleReport floor;
    floor.name = "initial data floor";
    floor.statistic = worst_floor;
    floor.tolerance = 1.0;
    floor.pass = worst_floor >= 1.0;
    floor.samples = ns.size();
    floor.note = "statistic is min f / floor over the truncated region";
    return {conv, floor};
}

}  // namespace polykin
