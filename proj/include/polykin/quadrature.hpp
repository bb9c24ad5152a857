#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "polykin/vec3.hpp"

namespace polykin {

struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss rule on (0,1) for the weight x^p (1-x)^q, built by Golub-Welsch from
// the Jacobi recurrence. Weights integrate the weight function itself, so
// sum(weights) = B(p+1, q+1).
inline Rule1D gauss_jacobi01(int count, double p, double q) {
    if (count < 1) throw std::invalid_argument("rule needs at least one node");
    if (!(p > -1.0 && q > -1.0)) throw std::invalid_argument("Jacobi exponents must exceed -1");
    // On [-1,1] with weight (1-t)^al (1+t)^be and x = (1+t)/2.
    const double al = q, be = p;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(count, count);
    for (int k = 0; k < count; ++k) {
        const double s = 2.0 * k + al + be;
        J(k, k) = (s == 0.0 || s + 2.0 == 0.0) ? (be - al) / (al + be + 2.0) : (be * be - al * al) / (s * (s + 2.0));
        if (k + 1 < count) {
            const double m = k + 1.0;
            const double t = 2.0 * m + al + be;
            const double v = k == 0 ? 4.0 * (1.0 + al) * (1.0 + be) / (t * t * (t + 1.0))
                                    : 4.0 * m * (m + al) * (m + be) * (m + al + be) / (t * t * (t + 1.0) * (t - 1.0));
            J(k, k + 1) = J(k + 1, k) = std::sqrt(v);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    const double mass01 = std::exp(std::lgamma(p + 1.0) + std::lgamma(q + 1.0) - std::lgamma(p + q + 2.0));
    Rule1D r;
    for (int k = 0; k < count; ++k) {
        const double t = es.eigenvalues()(k);
        const double v0 = es.eigenvectors()(0, k);
        r.nodes.push_back(0.5 * (1.0 + t));
        r.weights.push_back(mass01 * v0 * v0);
    }
    return r;
}

inline Rule1D gauss_legendre01(int count) { return gauss_jacobi01(count, 0.0, 0.0); }

// Gauss-Legendre in cos(theta) times a uniform azimuth. Closed under
// omega -> -omega when the azimuth count is even.
struct SphereRule {
    std::vector<Vec3> directions;
    std::vector<double> weights;  // sum to 4 pi

    static SphereRule make(int polar, int azimuth) {
        if (polar < 1 || azimuth < 2 || azimuth % 2 != 0)
            throw std::invalid_argument("sphere rule needs polar >= 1 and an even azimuth count");
        SphereRule s;
        const Rule1D gl = gauss_legendre01(polar);
        for (int i = 0; i < polar; ++i) {
            const double c = 2.0 * gl.nodes[i] - 1.0;
            const double sn = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int j = 0; j < azimuth; ++j) {
                const double phi = 2.0 * std::numbers::pi * (j + 0.5) / azimuth;
                s.directions.push_back({sn * std::cos(phi), sn * std::sin(phi), c});
                s.weights.push_back(2.0 * gl.weights[i] * 2.0 * std::numbers::pi / azimuth);
            }
        }
        return s;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Folds a list of integers into one stream key, so each (seed, step, node,
// ...) tuple gets its own generator regardless of thread scheduling.
inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

// Counter-style generator: cheap to construct per node, which the per-node
// stream scheme needs.
class Rng {
public:
    using result_type = std::uint64_t;
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}
    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

inline double uniform01(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

// Strictly inside (0,1).
inline double open01(Rng& rng) {
    double u;
    do u = uniform01(rng);
    while (u <= 0.0 || u >= 1.0);
    return u;
}

inline double sample_beta(Rng& rng, double p, double q) {
    std::gamma_distribution<double> gx(p, 1.0), gy(q, 1.0);
    for (;;) {
        const double x = gx(rng), y = gy(rng);
        const double r = x / (x + y);
        if (r > 0.0 && r < 1.0) return r;
    }
}

inline Vec3 sample_sphere(Rng& rng) {
    const double c = 2.0 * uniform01(rng) - 1.0;
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    return {s * std::cos(phi), s * std::sin(phi), c};
}

}  // namespace polykin
