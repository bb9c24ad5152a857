#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "polykin/geometry.hpp"
#include "polykin/species.hpp"

namespace polykin {

enum class KernelFamily { B0, B1ab, B1ba, B2 };

inline const char* family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::B0: return "B0";
        case KernelFamily::B1ab: return "B1ab";
        case KernelFamily::B1ba: return "B1ba";
        case KernelFamily::B2: return "B2";
    }
    return "?";
}

inline KernelFamily family_for(const SpeciesTable& table, int a, int b) {
    const bool pa = table.polyatomic(a), pb = table.polyatomic(b);
    if (!pa && !pb) return KernelFamily::B0;
    if (!pa) return KernelFamily::B1ab;
    if (!pb) return KernelFamily::B1ba;
    return KernelFamily::B2;
}

// Amplitude C and exponent lambda on the energy speed v_E = sqrt(2E/mu).
// For two monatomic partners v_E = |g| and the model is C |g|^lambda.
struct CrossSectionModel {
    enum class Kind { Constant, PowerLaw };
    Kind kind = Kind::Constant;
    double amplitude = 1.0;
    double exponent = 0.0;

    double speed_exponent() const { return kind == Kind::Constant ? 0.0 : exponent; }

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (!(amplitude > 0.0) || !std::isfinite(amplitude)) out.push_back("cross-section amplitude must be positive");
        if (kind == Kind::PowerLaw && !(exponent > -1.0 && exponent <= 1.0))
            out.push_back("cross-section exponent must lie in (-1, 1]");
        return out;
    }

    static CrossSectionModel constant(double amplitude = 1.0) { return {Kind::Constant, amplitude, 0.0}; }
    static CrossSectionModel power_law(double amplitude, double exponent) {
        return {Kind::PowerLaw, amplitude, exponent};
    }
};

// truncation == 0 selects the untruncated kernel.
struct KernelSpec {
    KernelFamily family = KernelFamily::B0;
    CrossSectionModel cross_section;
    int truncation = 0;

    bool truncated() const { return truncation > 0; }
};

inline KernelSpec truncate(const KernelSpec& spec, int n) {
    if (n < 1) throw std::invalid_argument("truncation index must be at least 1");
    KernelSpec out = spec;
    out.truncation = n;
    return out;
}

// Kernel bound to a concrete species pair, with the exponents and the
// normalizer the family needs.
struct PairKernel {
    KernelSpec spec;
    SpeciesTable table;
    int a = 0, b = 0;
    double mu = 0.0;
    double exp_a = 0.0;   // degeneracy exponent of the first partner (0 if monatomic)
    double exp_b = 0.0;   // degeneracy exponent of the second partner
    double share_exp = 0.0;  // (1 - R) exponent of the R density R (1-R)^k
    int poly_partners = 0;
    double normalizer = 1.0;

    bool has_share() const { return spec.family != KernelFamily::B0; }
    bool has_split() const { return spec.family == KernelFamily::B2; }
};

inline PairKernel make_pair_kernel(const SpeciesTable& table, int a, int b, const CrossSectionModel& cs,
                                   int truncation = 0) {
    auto p = cs.problems();
    if (!p.empty()) throw std::invalid_argument(p.front());
    if (truncation < 0) throw std::invalid_argument("truncation index must be nonnegative");
    PairKernel pk;
    pk.spec = {family_for(table, a, b), cs, truncation};
    pk.table = table;
    pk.a = a;
    pk.b = b;
    pk.mu = reduced_mass(table, a, b).mu;
    pk.exp_a = table.weight_exponent(a);
    pk.exp_b = table.weight_exponent(b);
    using boost::math::beta;
    switch (pk.spec.family) {
        case KernelFamily::B0: break;
        case KernelFamily::B1ab:
            pk.poly_partners = 1;
            pk.share_exp = pk.exp_b;
            pk.normalizer = 1.0 / beta(2.0, pk.exp_b + 1.0);
            break;
        case KernelFamily::B1ba:
            pk.poly_partners = 1;
            pk.share_exp = pk.exp_a;
            pk.normalizer = 1.0 / beta(2.0, pk.exp_a + 1.0);
            break;
        case KernelFamily::B2:
            pk.poly_partners = 2;
            pk.share_exp = pk.exp_a + pk.exp_b + 1.0;
            pk.normalizer = 1.0 / (beta(2.0, pk.exp_a + pk.exp_b + 2.0) * beta(pk.exp_a + 1.0, pk.exp_b + 1.0));
            break;
    }
    return pk;
}

inline PairKernel truncate(const PairKernel& pk, int n) {
    PairKernel out = pk;
    out.spec = truncate(pk.spec, n);
    return out;
}

// Scalar arguments every kernel and cutoff depends on, in pre and post form.
struct KernelPoint {
    double speed = 0.0, speed_post = 0.0;
    double energy = 0.0;
    double internal = 0.0, internal_post = 0.0;  // I + I* before and after
    double share = 1.0, share_dual = 1.0;
    double split = 0.5, split_dual = 0.5;
    double cos_abs = 0.0;
};

inline KernelPoint kernel_point(const CollisionFrame& f) {
    KernelPoint p;
    p.speed = f.relative_speed;
    p.speed_post = f.relative_speed_post;
    p.energy = f.energy;
    p.internal = f.internal_pre_sum();
    p.internal_post = f.internal_post_sum();
    p.share = f.params.kinetic_share;
    p.share_dual = f.energy > 0.0 ? std::min(1.0, 0.5 * f.mu * f.relative_speed * f.relative_speed / f.energy) : 1.0;
    p.split = f.params.split;
    const double s = f.internal + f.internal_star;
    p.split_dual = s > 0.0 ? f.internal / s : 0.0;
    p.cos_abs = std::abs(f.cos_deflection());
    return p;
}

// C-infinity step: 0 for t <= 0, 1 for t >= 1.
inline double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double u = std::exp(-1.0 / t), v = std::exp(-1.0 / (1.0 - t));
    return u / (u + v);
}

inline double ramp_width(int n) { return 0.25 / n; }

// 1 on [1/n + w, n - w], 0 outside [1/n, n].
inline double band_cut(double x, int n) {
    const double w = ramp_width(n);
    return smooth_step((x - 1.0 / n) / w) * smooth_step((n - x) / w);
}

// 0 within 1/(2n) of {0, 1}.
inline double interior_cut(double r, int n) {
    const double w = ramp_width(n), edge = 0.5 / n;
    return smooth_step((r - edge) / w) * smooth_step((1.0 - edge - r) / w);
}

// Removes near-grazing collisions, |z . omega| <= 1/n.
inline double grazing_cut(double normal_speed, int n) {
    return smooth_step((normal_speed - 1.0 / n) / ramp_width(n));
}

// Product of the smooth cutoffs of the truncated kernel. Every factor is
// applied to a pre quantity and to its post counterpart.
inline double kernel_cutoff(const PairKernel& pk, const KernelPoint& p) {
    const int n = pk.spec.truncation;
    if (n <= 0) return 1.0;
    double c = band_cut(p.speed, n) * band_cut(p.speed_post, n);
    if (c == 0.0) return 0.0;
    c *= grazing_cut(p.speed * p.cos_abs, n) * grazing_cut(p.speed_post * p.cos_abs, n);
    if (c == 0.0 || !pk.has_share()) return c;
    c *= band_cut(p.internal, n) * band_cut(p.internal_post, n);
    c *= interior_cut(p.share, n) * interior_cut(p.share_dual, n);
    if (c == 0.0 || !pk.has_split()) return c;
    return c * interior_cut(p.split, n) * interior_cut(p.split_dual, n);
}

// Untruncated model value C nu v_E^lambda |g| sqrt(R), which equals
// C nu v_E^(lambda-1) |g| |g'| and is symmetric in pre and post states.
inline double kernel_base(const PairKernel& pk, double speed, double energy, double share) {
    if (speed == 0.0) return 0.0;
    const double lam = pk.spec.cross_section.speed_exponent();
    const double v = std::sqrt(2.0 * energy / pk.mu);
    const double vpow = lam == 0.0 ? 1.0 : std::pow(v, lam);
    return pk.spec.cross_section.amplitude * pk.normalizer * vpow * speed * std::sqrt(share);
}

// Raised where the displayed kernel denominator vanishes.
inline void check_singularity(const PairKernel& pk, double share, double split) {
    if (!pk.has_share()) return;
    const double display_exp = pk.has_split() ? pk.exp_a + pk.exp_b : pk.share_exp;
    const bool bad_share = share <= 0.0 || (share >= 1.0 && display_exp > 0.0);
    bool bad_split = false;
    if (pk.has_split()) bad_split = (split <= 0.0 && pk.exp_a > 0.0) || (split >= 1.0 && pk.exp_b > 0.0);
    if (bad_share || bad_split) throw std::domain_error("kernel singularity");
}

inline double kernel_value(const PairKernel& pk, const KernelPoint& p) {
    if (pk.spec.truncated()) {
        const double c = kernel_cutoff(pk, p);
        return c == 0.0 ? 0.0 : c * kernel_base(pk, p.speed, p.energy, p.share);
    }
    check_singularity(pk, p.share, p.split);
    return kernel_base(pk, p.speed, p.energy, p.share);
}

inline double kernel_value(const PairKernel& pk, const CollisionFrame& f) { return kernel_value(pk, kernel_point(f)); }

inline CollisionFrame pair_frame(const PairKernel& pk, const Vec3& xi, const Vec3& xi_star, double I, double I_star,
                                 const CollisionParams& params) {
    return post_collision(pk.table, pk.a, pk.b, xi, xi_star, I, I_star, params);
}

// Convenience entry points taking the relative velocity z = xi - xi*.
inline double b0(const PairKernel& pk, const Vec3& z, const Vec3& omega) {
    if (pk.spec.family != KernelFamily::B0) throw std::invalid_argument("pair is not monatomic-monatomic");
    return kernel_value(pk, pair_frame(pk, z, {0, 0, 0}, 0.0, 0.0, {1.0, 0.5, omega}));
}

inline double b1ab(const PairKernel& pk, const Vec3& z, double I_star, double share, const Vec3& omega) {
    if (pk.spec.family != KernelFamily::B1ab) throw std::invalid_argument("pair is not monatomic-polyatomic");
    return kernel_value(pk, pair_frame(pk, z, {0, 0, 0}, 0.0, I_star, {share, 0.5, omega}));
}

inline double b1ba(const PairKernel& pk, const Vec3& z, double I, double share, const Vec3& omega) {
    if (pk.spec.family != KernelFamily::B1ba) throw std::invalid_argument("pair is not polyatomic-monatomic");
    return kernel_value(pk, pair_frame(pk, z, {0, 0, 0}, I, 0.0, {share, 0.5, omega}));
}

inline double b2(const PairKernel& pk, const Vec3& z, double I, double I_star, double share, double split,
                 const Vec3& omega) {
    if (pk.spec.family != KernelFamily::B2) throw std::invalid_argument("pair is not polyatomic-polyatomic");
    return kernel_value(pk, pair_frame(pk, z, {0, 0, 0}, I, I_star, {share, split, omega}));
}

// Cross section sigma = C nu v_E^(lambda-2) |g'|^2 (I')^a (I*')^b / E^(a+b+kappa)
// with kappa the number of polyatomic partners, written in terms of the
// outgoing speed and internal energies.
inline double sigma_outgoing(const PairKernel& pk, double energy, double speed_out, double internal_out,
                             double internal_star_out) {
    if (energy <= 0.0) return 0.0;
    const double lam = pk.spec.cross_section.speed_exponent();
    const double v = std::sqrt(2.0 * energy / pk.mu);
    double s = pk.spec.cross_section.amplitude * pk.normalizer * std::pow(v, lam - 2.0) * speed_out * speed_out;
    if (pk.exp_a != 0.0) s *= std::pow(internal_out / energy, pk.exp_a);
    if (pk.exp_b != 0.0) s *= std::pow(internal_star_out / energy, pk.exp_b);
    return s / std::pow(energy, pk.poly_partners);
}

inline double sigma(const PairKernel& pk, const CollisionFrame& f) {
    return sigma_outgoing(pk, f.energy, f.relative_speed_post, f.internal_post, f.internal_star_post);
}

// Cross section of the inverse collision, post state back to pre state.
inline double sigma_inverse(const PairKernel& pk, const CollisionFrame& f) {
    return sigma_outgoing(pk, f.energy, f.relative_speed, f.internal, f.internal_star);
}

// Displayed kernel forms evaluated for a given reduced cross section.
// exp_a, exp_b are dof/2 - 1 of the two partners (0 when monatomic).
inline double kernel_from_sigma(KernelFamily family, double sigma_reduced, double speed, double energy, double share,
                                double split, double exp_a, double exp_b) {
    auto guard = [](double base, double e) {
        if (e > 0.0 && base <= 0.0) throw std::domain_error("kernel singularity");
        return e == 0.0 ? 1.0 : std::pow(base, e);
    };
    switch (family) {
        case KernelFamily::B0: return sigma_reduced * speed;
        case KernelFamily::B1ab:
            return sigma_reduced * speed * energy / (guard(share, 0.5) * guard(1.0 - share, exp_b));
        case KernelFamily::B1ba:
            return sigma_reduced * speed * energy / (guard(share, 0.5) * guard(1.0 - share, exp_a));
        case KernelFamily::B2:
            return sigma_reduced * speed * energy * energy /
                   (guard(split, exp_a) * guard(1.0 - split, exp_b) * guard(1.0 - share, exp_a + exp_b) *
                    guard(share, 0.5));
    }
    return 0.0;
}

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
};

namespace detail {

// Integral over [lo, hi] split at the given breakpoints. tol > 0 runs
// adaptive Gauss-Kronrod on every piece; tol == 0 uses a fixed 15-point
// Gauss rule per piece, with the 7-point rule as the error estimate.
template <class F>
QuadratureResult integrate_pieces(F&& fn, double lo, double hi, std::vector<double> cuts, double tol) {
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    QuadratureResult r;
    double prev = lo;
    for (double c : cuts) {
        if (c <= prev || c > hi) continue;
        if (tol > 0.0) {
            double err = 0.0;
            r.value += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(fn, prev, c, 12, tol, &err);
            r.error += err;
        } else {
            const double fine = boost::math::quadrature::gauss<double, 15>::integrate(fn, prev, c);
            const double coarse = boost::math::quadrature::gauss<double, 7>::integrate(fn, prev, c);
            r.value += fine;
            r.error += std::abs(fine - coarse);
        }
        prev = c;
    }
    return r;
}

inline void push_ramp(std::vector<double>& cuts, double start, double width) {
    cuts.push_back(start);
    cuts.push_back(start + width);
}

inline std::vector<double> interior_breaks(int n) {
    const double w = ramp_width(n), edge = 0.5 / n;
    return {edge, edge + w, 1.0 - edge - w, 1.0 - edge};
}

}  // namespace detail

// Integral over |cos theta| in (0,1) of the two grazing cutoffs.
inline QuadratureResult grazing_integral(double speed, double speed_post, int n, double tol = 0.0) {
    if (n <= 0) return {1.0, 0.0, true};
    const double w = ramp_width(n), inv = 1.0 / n;
    if (speed <= inv || speed_post <= inv) return {0.0, 0.0, true};
    std::vector<double> cuts;
    detail::push_ramp(cuts, inv / speed, w / speed);
    detail::push_ramp(cuts, inv / speed_post, w / speed_post);
    // Below the larger ramp start the product vanishes; past both ramps it is 1.
    const double start = std::max(inv / speed, inv / speed_post);
    const double end = std::min(1.0, std::max((inv + w) / speed, (inv + w) / speed_post));
    QuadratureResult r;
    if (end > start) {
        auto g = [&](double c) { return grazing_cut(speed * c, n) * grazing_cut(speed_post * c, n); };
        std::vector<double> inside;
        for (double c : cuts)
            if (c > start && c < end) inside.push_back(c);
        r = detail::integrate_pieces(g, start, end, inside, tol);
    }
    r.value += std::max(0.0, 1.0 - std::max(end, start));
    return r;
}

// Integral of B / (C nu v_E^lambda |g| sqrt(R)) against the family weights
// over (R, omega) for the truncated kernel, excluding the factors that only
// depend on the pre state and the split integral. Depends on (|g|, E) only.
inline QuadratureResult share_integral(const PairKernel& pk, double speed, double energy, double tol = 0.0) {
    const int n = pk.spec.truncation;
    if (!pk.has_share()) {
        auto j = grazing_integral(speed, speed, n, tol);
        const double b = n > 0 ? band_cut(speed, n) : 1.0;
        return {b * j.value, b * j.error, true};
    }
    const double k = pk.share_exp;
    const double v = std::sqrt(2.0 * energy / pk.mu);
    if (n <= 0) {
        return {boost::math::beta(2.0, k + 1.0), 0.0, true};
    }
    const double w = ramp_width(n), inv = 1.0 / n;
    double inner_error = 0.0;
    auto integrand = [&](double R) {
        const double post_speed = v * std::sqrt(R);
        const double cut = interior_cut(R, n) * band_cut(post_speed, n) * band_cut((1.0 - R) * energy, n);
        if (cut == 0.0) return 0.0;
        QuadratureResult j = grazing_integral(speed, post_speed, n, tol);
        inner_error = std::max(inner_error, j.error);
        return R * std::pow(1.0 - R, k) * cut * j.value;
    };
    std::vector<double> cuts = detail::interior_breaks(n);
    for (double x : {inv, inv + w, n - w, static_cast<double>(n)}) {
        if (v > 0.0) cuts.push_back(x * x / (v * v));        // |g'| thresholds
        if (energy > 0.0) cuts.push_back(1.0 - x / energy);  // post internal thresholds
    }
    std::vector<double> inside;
    for (double c : cuts)
        if (c > 0.0 && c < 1.0) inside.push_back(c);
    QuadratureResult r = detail::integrate_pieces(integrand, 0.0, 1.0, inside, tol);
    r.error += inner_error;
    return r;
}

// Pre-state cutoff factors that leave the (R, r, omega) integral.
inline double pre_state_cutoff(const PairKernel& pk, double speed, double I, double I_star) {
    const int n = pk.spec.truncation;
    if (n <= 0) return 1.0;
    double c = band_cut(speed, n);
    if (!pk.has_share() || c == 0.0) return c;
    const double eta = I + I_star;
    const double energy = 0.5 * pk.mu * speed * speed + eta;
    const double share_dual = energy > 0.0 ? std::min(1.0, 0.5 * pk.mu * speed * speed / energy) : 1.0;
    c *= band_cut(eta, n) * interior_cut(share_dual, n);
    if (pk.has_split()) c *= interior_cut(eta > 0.0 ? I / eta : 0.0, n);
    return c;
}

// Integral of r^a (1-r)^b times the split cutoff.
inline QuadratureResult split_integral(const PairKernel& pk, double tol = 1e-12) {
    if (!pk.has_split()) return {1.0, 0.0, true};
    const int n = pk.spec.truncation;
    if (n <= 0) return {boost::math::beta(pk.exp_a + 1.0, pk.exp_b + 1.0), 0.0, true};
    auto density = [&](double r) { return std::pow(r, pk.exp_a) * std::pow(1.0 - r, pk.exp_b) * interior_cut(r, n); };
    return detail::integrate_pieces(density, 0.0, 1.0, detail::interior_breaks(n), tol);
}

// A = integral of B over (R, r, omega) against the family weights, for
// relative speed |z| and internal energies I, I* of the two partners.
// tol > 0 selects adaptive quadrature, tol == 0 fixed-order rules.
inline QuadratureResult reduced_a(const PairKernel& pk, double speed, double I = 0.0, double I_star = 0.0,
                                  double tol = 1e-10) {
    const double Ia = pk.table.polyatomic(pk.a) ? I : 0.0;
    const double Ib = pk.table.polyatomic(pk.b) ? I_star : 0.0;
    const double energy = 0.5 * pk.mu * speed * speed + Ia + Ib;
    QuadratureResult out;
    const double base = kernel_base(pk, speed, energy, 1.0);
    if (base == 0.0) return out;
    const double pre = pre_state_cutoff(pk, speed, Ia, Ib);
    if (pre == 0.0) return out;
    const QuadratureResult split = split_integral(pk, tol > 0.0 ? tol : 1e-12);
    const QuadratureResult share = share_integral(pk, speed, energy, tol);
    const double scale = 4.0 * std::numbers::pi * base * pre;
    out.value = scale * split.value * share.value;
    out.error = scale * (split.error * share.value + split.value * share.error);
    const double allowed = (tol > 0.0 ? 1e3 * tol : 1e-6) * std::max(std::abs(out.value), 1e-300);
    out.converged = out.error <= allowed || out.error < 1e-14;
    return out;
}

// Untruncated reduced kernel in closed form: 4 pi C v_E^lambda |z|.
inline double reduced_a_closed_form(const PairKernel& pk, double speed, double eta) {
    const double energy = 0.5 * pk.mu * speed * speed + eta;
    const double lam = pk.spec.cross_section.speed_exponent();
    const double v = std::sqrt(2.0 * energy / pk.mu);
    if (speed == 0.0) return 0.0;
    return 4.0 * std::numbers::pi * pk.spec.cross_section.amplitude * (lam == 0.0 ? 1.0 : std::pow(v, lam)) * speed;
}

}  // namespace polykin
