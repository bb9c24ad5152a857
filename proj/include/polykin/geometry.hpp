#pragma once

#include <cmath>
#include <stdexcept>

#include "polykin/species.hpp"
#include "polykin/vec3.hpp"

namespace polykin {

// Borgnakke-Larsen parameters of a binary collision: kinetic share of the
// pair energy, split of the internal remainder between the partners, and the
// direction of the post-collision relative velocity.
struct CollisionParams {
    double kinetic_share = 1.0;
    double split = 0.5;
    Vec3 direction{1.0, 0.0, 0.0};
};

struct CollisionFrame {
    int a = 0, b = 0;
    bool poly_a = false, poly_b = false;
    double mu = 0.0, weight_a = 0.0, weight_b = 0.0;

    Vec3 xi{}, xi_star{};
    double internal = 0.0, internal_star = 0.0;
    CollisionParams params;

    Vec3 relative{};  // g = xi - xi_star
    Vec3 centre{};    // centre-of-mass velocity, unchanged by the collision
    double energy = 0.0;
    double relative_speed = 0.0;
    double relative_speed_post = 0.0;

    Vec3 xi_post{}, xi_star_post{};
    double internal_post = 0.0, internal_star_post = 0.0;

    double internal_pre_sum() const { return internal + internal_star; }
    double internal_post_sum() const { return internal_post + internal_star_post; }
    // cos of the deflection angle between g and g'.
    double cos_deflection() const {
        if (relative_speed == 0.0) return 0.0;
        return dot(relative, params.direction) / relative_speed;
    }
};

inline void require_nonnegative_internal(double I, double Is) {
    if (I < 0.0 || Is < 0.0 || std::isnan(I) || std::isnan(Is))
        throw std::invalid_argument("negative internal energy");
}

inline double total_energy(const SpeciesTable& table, int a, int b, const Vec3& xi, const Vec3& xi_star,
                           double I, double I_star) {
    require_nonnegative_internal(I, I_star);
    const double mu = reduced_mass(table, a, b).mu;
    const double Ia = table.polyatomic(a) ? I : 0.0;
    const double Ib = table.polyatomic(b) ? I_star : 0.0;
    return 0.5 * mu * norm2(xi - xi_star) + Ia + Ib;
}

// Builds the frame and its post-collision states. For two monatomic partners
// the kinetic share is forced to 1; when only one partner is polyatomic the
// whole internal remainder goes to it and the split is ignored.
inline CollisionFrame post_collision(const SpeciesTable& table, int a, int b, const Vec3& xi,
                                     const Vec3& xi_star, double I, double I_star,
                                     const CollisionParams& params) {
    require_nonnegative_internal(I, I_star);
    if (!(params.kinetic_share >= 0.0 && params.kinetic_share <= 1.0))
        throw std::invalid_argument("kinetic share outside [0,1]");
    if (!(params.split >= 0.0 && params.split <= 1.0)) throw std::invalid_argument("split outside [0,1]");
    if (std::abs(norm(params.direction) - 1.0) > 1e-9) throw std::invalid_argument("direction is not a unit vector");

    CollisionFrame f;
    const ReducedMass rm = reduced_mass(table, a, b);
    f.a = a;
    f.b = b;
    f.poly_a = table.polyatomic(a);
    f.poly_b = table.polyatomic(b);
    f.mu = rm.mu;
    f.weight_a = rm.weight_a;
    f.weight_b = rm.weight_b;
    f.xi = xi;
    f.xi_star = xi_star;
    f.internal = f.poly_a ? I : 0.0;
    f.internal_star = f.poly_b ? I_star : 0.0;
    f.params = params;

    f.relative = xi - xi_star;
    f.relative_speed = norm(f.relative);
    f.centre = rm.weight_a * xi + rm.weight_b * xi_star;
    f.energy = 0.5 * rm.mu * f.relative_speed * f.relative_speed + f.internal + f.internal_star;

    if (!f.poly_a && !f.poly_b) {
        f.params.kinetic_share = 1.0;
        f.relative_speed_post = f.relative_speed;
    } else {
        f.relative_speed_post = std::sqrt(2.0 * params.kinetic_share * f.energy / rm.mu);
        const double rest = (1.0 - params.kinetic_share) * f.energy;
        if (f.poly_a && f.poly_b) {
            f.internal_post = params.split * rest;
            f.internal_star_post = (1.0 - params.split) * rest;
        } else if (f.poly_b) {
            f.internal_star_post = rest;
        } else {
            f.internal_post = rest;
        }
    }
    const Vec3& w = params.direction;
    f.xi_post = f.centre + (rm.weight_b * f.relative_speed_post) * w;
    f.xi_star_post = f.centre - (rm.weight_a * f.relative_speed_post) * w;
    return f;
}

// Parameters that map the post state back onto the pre state.
inline CollisionParams dual_parameters(const CollisionFrame& f) {
    if (f.relative_speed == 0.0) throw std::domain_error("degenerate relative velocity");
    CollisionParams d;
    d.kinetic_share = f.energy > 0.0 ? std::min(1.0, 0.5 * f.mu * f.relative_speed * f.relative_speed / f.energy) : 1.0;
    const double s = f.internal + f.internal_star;
    d.split = s > 0.0 ? f.internal / s : 0.0;
    d.direction = (1.0 / f.relative_speed) * f.relative;
    return d;
}

// Frame obtained by colliding the post states with the dual parameters.
inline CollisionFrame reverse_frame(const SpeciesTable& table, const CollisionFrame& f) {
    return post_collision(table, f.a, f.b, f.xi_post, f.xi_star_post, f.internal_post, f.internal_star_post,
                          dual_parameters(f));
}

inline double internal_energy_gap(const CollisionFrame& f) {
    return (f.internal_post + f.internal_star_post) - (f.internal + f.internal_star);
}

// Jacobian of (kinetic share, split, direction, centre, energy) onto the
// primed velocities and internal energies of two polyatomic partners.
inline double measure_weight(double mu, double energy, double kinetic_share) {
    if (energy < 0.0 || kinetic_share < 0.0 || kinetic_share > 1.0)
        throw std::invalid_argument("measure weight outside its domain");
    return std::sqrt(2.0) / std::pow(mu, 1.5) * std::pow(energy, 2.5) * (1.0 - kinetic_share) *
           std::sqrt(kinetic_share);
}

inline double measure_weight(const SpeciesTable& table, int a, int b, double energy, double kinetic_share) {
    return measure_weight(reduced_mass(table, a, b).mu, energy, kinetic_share);
}

}  // namespace polykin
