#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "polykin/vec3.hpp"

namespace polykin {

// Mixture description. The first `monatomic_count` species are monatomic and
// carry exactly two degrees of freedom; the rest carry a continuous internal
// energy with degeneracy weight I^(dof/2 - 1).
class SpeciesTable {
public:
    static constexpr int max_species = 16;
    static constexpr double max_dof = 64.0;

    SpeciesTable() = default;

    SpeciesTable(std::vector<double> masses, std::vector<double> dofs, int monatomic_count)
        : mass_(std::move(masses)), dof_(std::move(dofs)), monatomic_(monatomic_count) {
        auto problems = check(mass_, dof_, monatomic_);
        if (!problems.empty()) {
            std::string msg;
            for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
            throw std::invalid_argument(msg);
        }
    }

    // Every violated constraint, not just the first one.
    static std::vector<std::string> check(const std::vector<double>& masses,
                                          const std::vector<double>& dofs, int monatomic_count) {
        std::vector<std::string> out;
        const int s = static_cast<int>(masses.size());
        if (s < 1) out.push_back("species count must be positive");
        if (s > max_species) out.push_back("species count exceeds 16");
        if (dofs.size() != masses.size()) out.push_back("dof list length differs from mass list length");
        if (monatomic_count < 0) out.push_back("monatomic count is negative");
        if (monatomic_count > s) out.push_back("monatomic count exceeds species count");
        for (int a = 0; a < s; ++a)
            if (!(masses[a] > 0.0) || !std::isfinite(masses[a]))
                out.push_back("mass of species " + std::to_string(a) + " is not positive");
        for (int a = 0; a < static_cast<int>(dofs.size()); ++a) {
            const double d = dofs[a];
            if (!(d >= 2.0)) out.push_back("dof below 2 for species " + std::to_string(a));
            else if (d > max_dof) out.push_back("dof above 64 for species " + std::to_string(a));
            else if (a < monatomic_count && d != 2.0)
                out.push_back("monatomic species " + std::to_string(a) + " must have dof 2");
        }
        return out;
    }

    int count() const { return static_cast<int>(mass_.size()); }
    int monatomic_count() const { return monatomic_; }
    double mass(int a) const { return mass_.at(a); }
    double dof(int a) const { return dof_.at(a); }
    bool polyatomic(int a) const {
        index_check(a);
        return a >= monatomic_;
    }
    // Exponent of the degeneracy weight, zero for monatomic species.
    double weight_exponent(int a) const { return polyatomic(a) ? dof_[a] / 2.0 - 1.0 : 0.0; }

    const std::vector<double>& masses() const { return mass_; }
    const std::vector<double>& dofs() const { return dof_; }

    void index_check(int a) const {
        if (a < 0 || a >= count()) throw std::out_of_range("species index out of range");
    }

private:
    std::vector<double> mass_;
    std::vector<double> dof_;
    int monatomic_ = 0;
};

struct Microstate {
    int species = 0;
    Vec3 velocity{0.0, 0.0, 0.0};
    double internal = 0.0;  // ignored for monatomic species
};

struct ReducedMass {
    double mu;
    double weight_a;  // m_a / (m_a + m_b)
    double weight_b;  // m_b / (m_a + m_b)
};

inline ReducedMass reduced_mass(const SpeciesTable& table, int a, int b) {
    table.index_check(a);
    table.index_check(b);
    const double ma = table.mass(a), mb = table.mass(b);
    const double total = ma + mb;
    return {ma * mb / total, ma / total, mb / total};
}

// One collision invariant: a per-species mass indicator, one momentum
// component, or the combined energy m|xi|^2 + 2I.
struct InvariantFunctional {
    enum class Kind { Mass, Momentum, Energy };
    Kind kind;
    int index;  // species for Mass, axis for Momentum, unused for Energy
    std::string name;

    double operator()(const SpeciesTable& table, const Microstate& z) const {
        const double m = table.mass(z.species);
        switch (kind) {
            case Kind::Mass: return z.species == index ? 1.0 : 0.0;
            case Kind::Momentum: return m * z.velocity[index];
            case Kind::Energy:
                return m * norm2(z.velocity) + (table.polyatomic(z.species) ? 2.0 * z.internal : 0.0);
        }
        return 0.0;
    }
};

inline std::vector<InvariantFunctional> collision_invariant_basis(const SpeciesTable& table) {
    std::vector<InvariantFunctional> basis;
    for (int a = 0; a < table.count(); ++a)
        basis.push_back({InvariantFunctional::Kind::Mass, a, "mass_" + std::to_string(a)});
    const char* axes[3] = {"momentum_x", "momentum_y", "momentum_z"};
    for (int d = 0; d < 3; ++d) basis.push_back({InvariantFunctional::Kind::Momentum, d, axes[d]});
    basis.push_back({InvariantFunctional::Kind::Energy, 0, "energy"});
    return basis;
}

}  // namespace polykin
