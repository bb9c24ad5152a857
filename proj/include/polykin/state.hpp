#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "polykin/species.hpp"
#include "polykin/vec3.hpp"

namespace polykin {

// Cell-centred nodes -vmax + (k + 1/2) h, so the grid is symmetric about 0.
struct VelocityGrid {
    int n = 16;
    double vmax = 4.0;

    double spacing() const { return 2.0 * vmax / n; }
    double node(int k) const { return -vmax + (k + 0.5) * spacing(); }
    double cell_volume() const {
        const double h = spacing();
        return h * h * h;
    }
    std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
    std::size_t flat(int i, int j, int k) const { return (static_cast<std::size_t>(i) * n + j) * n + k; }
    Vec3 velocity(std::size_t v) const {
        const int k = static_cast<int>(v % n);
        const int j = static_cast<int>((v / n) % n);
        const int i = static_cast<int>(v / (static_cast<std::size_t>(n) * n));
        return {node(i), node(j), node(k)};
    }
};

// Quadrature nodes on (0, imax]: plain dI weights, never the degeneracy factor.
struct InternalGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
    bool uniform = true;

    static InternalGrid make_uniform(int count, double imax) {
        if (count < 2 || !(imax > 0.0)) throw std::invalid_argument("internal grid needs two or more nodes and imax > 0");
        InternalGrid g;
        const double w = imax / count;
        for (int k = 0; k < count; ++k) {
            g.nodes.push_back((k + 0.5) * w);
            g.weights.push_back(w);
        }
        return g;
    }

    // Cell widths grow by `ratio`; nodes sit at cell midpoints.
    static InternalGrid make_geometric(int count, double imax, double ratio) {
        if (count < 2 || !(imax > 0.0) || !(ratio > 1.0))
            throw std::invalid_argument("geometric internal grid needs count >= 2, imax > 0, ratio > 1");
        InternalGrid g;
        g.uniform = false;
        const double first = imax * (ratio - 1.0) / (std::pow(ratio, count) - 1.0);
        double edge = 0.0, width = first;
        for (int k = 0; k < count; ++k) {
            g.nodes.push_back(edge + 0.5 * width);
            g.weights.push_back(width);
            edge += width;
            width *= ratio;
        }
        return g;
    }

    int size() const { return static_cast<int>(nodes.size()); }
    double upper() const { return nodes.empty() ? 0.0 : nodes.back() + 0.5 * weights.back(); }
};

// Periodic box [0, length)^dim; dim == 0 is the space-homogeneous mode.
struct SpatialGrid {
    int dim = 0;
    int n = 1;
    double length = 1.0;

    std::size_t cells() const {
        std::size_t c = 1;
        for (int d = 0; d < dim; ++d) c *= static_cast<std::size_t>(n);
        return c;
    }
    double spacing() const { return length / n; }
    double cell_volume() const { return dim == 0 ? 1.0 : std::pow(spacing(), dim); }
    // Offset of the cell centre from the box centre.
    Vec3 position(std::size_t c) const {
        Vec3 x{0.0, 0.0, 0.0};
        for (int d = dim - 1; d >= 0; --d) {
            const int idx = static_cast<int>(c % n);
            c /= n;
            x[d] = (idx + 0.5) * spacing() - 0.5 * length;
        }
        return x;
    }
};

struct GridSpec {
    VelocityGrid velocity;
    InternalGrid internal = InternalGrid::make_uniform(16, 12.0);
    SpatialGrid spatial;

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (velocity.n < 2) out.push_back("velocity grid needs at least 2 nodes per axis");
        if (!(velocity.vmax > 0.0)) out.push_back("velocity bound must be positive");
        if (internal.size() < 2) out.push_back("internal grid needs at least 2 nodes");
        for (double w : internal.weights)
            if (!(w > 0.0)) {
                out.push_back("internal weights must be positive");
                break;
            }
        if (spatial.dim != 0 && spatial.dim != 1 && spatial.dim != 3) out.push_back("spatial dimension must be 0, 1 or 3");
        if (spatial.dim != 0 && (spatial.n < 1 || !(spatial.length > 0.0))) out.push_back("spatial grid needs cells and a positive length");
        return out;
    }
};

// Nonnegative values of every species on the grid. Layout per species is
// [cell][velocity node][internal node], with a single internal slot for
// monatomic species.
class DistributionGrid {
public:
    DistributionGrid() = default;
    DistributionGrid(SpeciesTable table, GridSpec grid, double time = 0.0)
        : table_(std::move(table)), grid_(std::move(grid)), time_(time) {
        auto p = grid_.problems();
        if (!p.empty()) throw std::invalid_argument(p.front());
        values_.resize(table_.count());
        for (int a = 0; a < table_.count(); ++a) values_[a].assign(species_size(a), 0.0);
    }

    const SpeciesTable& table() const { return table_; }
    const GridSpec& grid() const { return grid_; }
    double time() const { return time_; }
    void set_time(double t) { time_ = t; }

    int species() const { return table_.count(); }
    int internal_count(int a) const { return table_.polyatomic(a) ? grid_.internal.size() : 1; }
    std::size_t cells() const { return grid_.spatial.cells(); }
    std::size_t per_cell(int a) const { return grid_.velocity.size() * internal_count(a); }
    std::size_t species_size(int a) const { return cells() * per_cell(a); }

    std::size_t index(int a, std::size_t cell, std::size_t v, int k) const {
        return (cell * grid_.velocity.size() + v) * internal_count(a) + k;
    }

    std::vector<double>& values(int a) { return values_.at(a); }
    const std::vector<double>& values(int a) const { return values_.at(a); }

    // Phase-space volume attached to one node.
    double node_volume(int a, int k) const {
        const double base = grid_.velocity.cell_volume() * grid_.spatial.cell_volume();
        return table_.polyatomic(a) ? base * grid_.internal.weights[k] : base;
    }
    double internal_at(int a, int k) const { return table_.polyatomic(a) ? grid_.internal.nodes[k] : 0.0; }
    // I^(dof/2 - 1), the degeneracy weight at an internal node.
    double degeneracy(int a, int k) const {
        const double e = table_.weight_exponent(a);
        return e == 0.0 ? 1.0 : std::pow(grid_.internal.nodes[k], e);
    }

    bool nonnegative() const {
        for (const auto& v : values_)
            for (double x : v)
                if (!(x >= 0.0)) return false;
        return true;
    }

private:
    SpeciesTable table_;
    GridSpec grid_;
    double time_ = 0.0;
    std::vector<std::vector<double>> values_;
};

struct SpeciesMoments {
    double number = 0.0;  // integral of f
    double mass = 0.0;
    Vec3 momentum{0.0, 0.0, 0.0};
    double kinetic = 0.0;   // m|xi|^2 / 2
    double internal = 0.0;  // I, zero for monatomic species
    double energy() const { return kinetic + internal; }
};

// Translational temperature (2/3n) (kinetic energy - |p|^2 / 2mn).
inline double kinetic_temperature(const SpeciesMoments& s) {
    if (!(s.number > 0.0)) return 0.0;
    return 2.0 / (3.0 * s.number) * (s.kinetic - 0.5 * norm2(s.momentum) / s.mass);
}

struct MomentReport {
    std::vector<SpeciesMoments> species;
    SpeciesMoments total;
    double entropy = 0.0;
};

inline double entropy_density(double f, double degeneracy) {
    if (!(f > 0.0)) return 0.0;
    return f * std::log(std::max(f, 1e-300) / degeneracy);
}

inline double h_functional(const DistributionGrid& f) {
    double h = 0.0;
    const auto& vg = f.grid().velocity;
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        std::vector<double> deg(nk), vol(nk);
        for (int k = 0; k < nk; ++k) {
            deg[k] = f.degeneracy(a, k);
            vol[k] = f.node_volume(a, k);
        }
        const auto& vals = f.values(a);
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) h += vol[k] * entropy_density(vals[f.index(a, c, v, k)], deg[k]);
    }
    return h;
}

inline MomentReport moments(const DistributionGrid& f) {
    MomentReport r;
    r.species.resize(f.species());
    const auto& vg = f.grid().velocity;
    for (int a = 0; a < f.species(); ++a) {
        auto& s = r.species[a];
        const double m = f.table().mass(a);
        const int nk = f.internal_count(a);
        const auto& vals = f.values(a);
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v) {
                const Vec3 xi = vg.velocity(v);
                const double speed2 = norm2(xi);
                for (int k = 0; k < nk; ++k) {
                    const double w = vals[f.index(a, c, v, k)] * f.node_volume(a, k);
                    s.number += w;
                    for (int d = 0; d < 3; ++d) s.momentum[d] += m * xi[d] * w;
                    s.kinetic += 0.5 * m * speed2 * w;
                    s.internal += f.internal_at(a, k) * w;
                }
            }
        s.mass = m * s.number;
        r.total.number += s.number;
        r.total.mass += s.mass;
        for (int d = 0; d < 3; ++d) r.total.momentum[d] += s.momentum[d];
        r.total.kinetic += s.kinetic;
        r.total.internal += s.internal;
    }
    r.entropy = h_functional(f);
    return r;
}

// Total integral of |f_a| without weights.
inline double l1_norm(const DistributionGrid& f, int a) {
    double s = 0.0;
    const int nk = f.internal_count(a);
    const auto& vals = f.values(a);
    for (std::size_t i = 0; i < vals.size(); ++i) s += std::abs(vals[i]) * f.node_volume(a, static_cast<int>(i % nk));
    return s;
}

inline double l1_norm(const DistributionGrid& f) {
    double s = 0.0;
    for (int a = 0; a < f.species(); ++a) s += l1_norm(f, a);
    return s;
}

// Integral of (1 + |x|^2 + |xi|^2 [+ I]) |f|. Order 12 drops the internal
// energy, order 13 keeps it for polyatomic species.
inline double weighted_norm(const DistributionGrid& f, int order = 13) {
    if (order != 12 && order != 13) throw std::invalid_argument("weighted norm order must be 12 or 13");
    const auto& g = f.grid();
    double s = 0.0;
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        const auto& vals = f.values(a);
        for (std::size_t c = 0; c < f.cells(); ++c) {
            const double x2 = g.spatial.dim == 0 ? 0.0 : norm2(g.spatial.position(c));
            for (std::size_t v = 0; v < g.velocity.size(); ++v) {
                const double base = 1.0 + x2 + norm2(g.velocity.velocity(v));
                for (int k = 0; k < nk; ++k) {
                    const double wgt = base + (order == 13 ? f.internal_at(a, k) : 0.0);
                    s += wgt * std::abs(vals[f.index(a, c, v, k)]) * f.node_volume(a, k);
                }
            }
        }
    }
    return s;
}

// Pointwise equilibrium density of species a, replicated over spatial cells.
inline std::vector<double> maxwellian(const DistributionGrid& shape, int a, double density, const Vec3& drift,
                                      double temperature) {
    if (!(density > 0.0) || !(temperature > 0.0)) throw std::invalid_argument("density and temperature must be positive");
    const auto& vg = shape.grid().velocity;
    const double m = shape.table().mass(a);
    const double norm_v = density * std::pow(m / (2.0 * std::numbers::pi * temperature), 1.5);
    const bool poly = shape.table().polyatomic(a);
    const double dof = shape.table().dof(a);
    const int nk = shape.internal_count(a);
    std::vector<double> internal_factor(nk, 1.0);
    if (poly) {
        const double half = 0.5 * dof;
        const double c = 1.0 / (std::tgamma(half) * std::pow(temperature, half));
        for (int k = 0; k < nk; ++k) {
            const double I = shape.grid().internal.nodes[k];
            internal_factor[k] = c * std::pow(I, half - 1.0) * std::exp(-I / temperature);
        }
    }
    std::vector<double> out(shape.species_size(a));
    for (std::size_t c = 0; c < shape.cells(); ++c)
        for (std::size_t v = 0; v < vg.size(); ++v) {
            const double e = norm_v * std::exp(-0.5 * m * norm2(vg.velocity(v) - drift) / temperature);
            for (int k = 0; k < nk; ++k) out[shape.index(a, c, v, k)] = e * internal_factor[k];
        }
    return out;
}

// Gaussian floor (1/n) exp(-(|x|^2 + |xi|^2 + I)/2) added by build_initial.
inline double initial_floor(const DistributionGrid& f, int a, std::size_t cell, std::size_t v, int k, int n) {
    const auto& g = f.grid();
    double s = norm2(g.velocity.velocity(v)) + f.internal_at(a, k);
    if (g.spatial.dim != 0) s += norm2(g.spatial.position(cell));
    return std::exp(-0.5 * s) / n;
}

// Cut the raw data to |xi| <= n and 1/n <= I <= n, blend each node with the
// mean of its grid neighbours (weight 1/n), then add the Gaussian floor.
inline DistributionGrid build_initial(const DistributionGrid& raw, int n) {
    if (n < 1) throw std::invalid_argument("truncation index must be at least 1");
    if (!raw.nonnegative()) throw std::invalid_argument("raw state has negative entries");
    DistributionGrid out(raw.table(), raw.grid(), raw.time());
    const auto& vg = raw.grid().velocity;
    const int N = vg.n;
    const double blend = std::min(0.5, 1.0 / n);
    for (int a = 0; a < raw.species(); ++a) {
        const int nk = raw.internal_count(a);
        const bool poly = raw.table().polyatomic(a);
        std::vector<double> cut(raw.species_size(a), 0.0);
        const auto& src = raw.values(a);
        for (std::size_t c = 0; c < raw.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v) {
                if (norm(vg.velocity(v)) > n) continue;
                for (int k = 0; k < nk; ++k) {
                    if (poly) {
                        const double I = raw.internal_at(a, k);
                        if (I < 1.0 / n || I > n) continue;
                    }
                    cut[raw.index(a, c, v, k)] = src[raw.index(a, c, v, k)];
                }
            }
        auto& dst = out.values(a);
        for (std::size_t c = 0; c < raw.cells(); ++c)
            for (int i = 0; i < N; ++i)
                for (int j = 0; j < N; ++j)
                    for (int l = 0; l < N; ++l) {
                        const std::size_t v = vg.flat(i, j, l);
                        for (int k = 0; k < nk; ++k) {
                            double sum = 0.0;
                            int count = 0;
                            auto add = [&](int ii, int jj, int ll, int kk) {
                                if (ii < 0 || jj < 0 || ll < 0 || ii >= N || jj >= N || ll >= N || kk < 0 || kk >= nk) return;
                                sum += cut[raw.index(a, c, vg.flat(ii, jj, ll), kk)];
                                ++count;
                            };
                            add(i - 1, j, l, k);
                            add(i + 1, j, l, k);
                            add(i, j - 1, l, k);
                            add(i, j + 1, l, k);
                            add(i, j, l - 1, k);
                            add(i, j, l + 1, k);
                            if (poly) {
                                add(i, j, l, k - 1);
                                add(i, j, l, k + 1);
                            }
                            const double centre = cut[raw.index(a, c, v, k)];
                            const double smooth = (1.0 - blend) * centre + blend * (count ? sum / count : 0.0);
                            dst[raw.index(a, c, v, k)] = smooth + initial_floor(raw, a, c, v, k, n);
                        }
                    }
    }
    return out;
}

// (1/delta) log(1 + delta f), exposed for diagnostics only.
inline std::vector<double> renormalized(const DistributionGrid& f, int a, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("renormalization parameter must be positive");
    std::vector<double> out(f.values(a).size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log1p(delta * f.values(a)[i]) / delta;
    return out;
}

// Exact free streaming x -> x - xi dt on the periodic box, one axis at a
// time with linear interpolation between cells.
inline void free_stream(DistributionGrid& f, double dt) {
    const auto& g = f.grid();
    if (g.spatial.dim == 0 || dt == 0.0) return;
    const int nx = g.spatial.n;
    const double dx = g.spatial.spacing();
    const std::size_t cells = g.spatial.cells();
    for (int a = 0; a < f.species(); ++a) {
        const std::size_t pc = f.per_cell(a);
        auto& vals = f.values(a);
        for (int axis = 0; axis < g.spatial.dim; ++axis) {
            std::size_t stride = 1;
            for (int d = g.spatial.dim - 1; d > axis; --d) stride *= static_cast<std::size_t>(nx);
            std::vector<double> next(vals.size());
            for (std::size_t slot = 0; slot < pc; ++slot) {
                const std::size_t v = slot / f.internal_count(a);
                const double shift = g.velocity.velocity(v)[axis] * dt / dx;
                const double fl = std::floor(shift);
                const double frac = shift - fl;
                const long whole = static_cast<long>(fl);
                for (std::size_t c = 0; c < cells; ++c) {
                    const long idx = static_cast<long>((c / stride) % nx);
                    const std::size_t base = c - static_cast<std::size_t>(idx) * stride;
                    auto wrap = [&](long i) { return static_cast<std::size_t>(((i % nx) + nx) % nx); };
                    const std::size_t s0 = base + wrap(idx - whole) * stride;
                    const std::size_t s1 = base + wrap(idx - whole - 1) * stride;
                    next[c * pc + slot] = (1.0 - frac) * vals[s0 * pc + slot] + frac * vals[s1 * pc + slot];
                }
            }
            vals.swap(next);
        }
    }
}

}  // namespace polykin
