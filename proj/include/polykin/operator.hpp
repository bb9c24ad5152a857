#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>
#include <fftw3.h>

#include "polykin/kernels.hpp"
#include "polykin/quadrature.hpp"
#include "polykin/state.hpp"

namespace polykin {

struct QuadratureRule {
    enum class Kind { Deterministic, MonteCarlo };
    Kind kind = Kind::MonteCarlo;
    int samples = 32;         // per output node and partner species
    double defensive = 0.05;  // uniform share of the partner proposal
    std::uint64_t seed = 1;
    int share_nodes = 3;
    int split_nodes = 2;
    int polar_nodes = 4;
    int azimuth_nodes = 6;
    bool mirrored = false;  // evaluate at (1 - r, -omega) instead of (r, omega)
    enum class Interpolation { LogQuadratic, Linear };
    Interpolation interpolation = Interpolation::LogQuadratic;

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (kind == Kind::MonteCarlo && samples < 2) out.push_back("monte-carlo rule needs at least 2 samples");
        if (!(defensive > 0.0 && defensive <= 1.0)) out.push_back("defensive fraction must lie in (0, 1]");
        if (kind == Kind::Deterministic) {
            if (share_nodes < 1 || split_nodes < 1 || polar_nodes < 1) out.push_back("node counts must be positive");
            if (azimuth_nodes < 2 || azimuth_nodes % 2) out.push_back("azimuth node count must be even");
        }
        return out;
    }
};

// One kernel per ordered species pair; (b, a) is always derived from (a, b).
struct CollisionModel {
    SpeciesTable table;
    std::vector<PairKernel> pairs;
    int truncation = 0;

    const PairKernel& pair(int a, int b) const { return pairs.at(static_cast<std::size_t>(a) * table.count() + b); }

    static CollisionModel uniform(const SpeciesTable& table, const CrossSectionModel& cs, int truncation = 0) {
        return with_overrides(table, cs, {}, truncation);
    }

    // Overrides are keyed by unordered pair; giving both (a, b) and (b, a)
    // is rejected.
    static CollisionModel with_overrides(const SpeciesTable& table, const CrossSectionModel& fallback,
                                         const std::map<std::pair<int, int>, CrossSectionModel>& overrides,
                                         int truncation = 0) {
        std::map<std::pair<int, int>, CrossSectionModel> sym;
        for (const auto& [key, cs] : overrides) {
            table.index_check(key.first);
            table.index_check(key.second);
            const auto k = std::minmax(key.first, key.second);
            if (sym.count({k.first, k.second})) throw std::invalid_argument("cross section given twice for one pair");
            sym[{k.first, k.second}] = cs;
        }
        CollisionModel m;
        m.table = table;
        m.truncation = truncation;
        for (int a = 0; a < table.count(); ++a)
            for (int b = 0; b < table.count(); ++b) {
                const auto k = std::minmax(a, b);
                auto it = sym.find({k.first, k.second});
                m.pairs.push_back(make_pair_kernel(table, a, b, it == sym.end() ? fallback : it->second, truncation));
            }
        return m;
    }
};

inline double normalization(const DistributionGrid& f, int n) {
    if (n < 0) throw std::invalid_argument("truncation index must be nonnegative");
    return n == 0 ? 1.0 : 1.0 + l1_norm(f) / n;
}

// Values F = f / I^(dof/2-1) of one species in one cell. log F is
// interpolated with 3-point Lagrange stencils in each velocity axis and
// linearly in I, which reproduces Maxwellians exactly; a trilinear
// interpolation of F itself takes over where the stencil touches a zero.
class ReducedInterpolator {
public:
    ReducedInterpolator(const DistributionGrid& f, int a, std::size_t cell, bool log_quadratic = true)
        : vg_(f.grid().velocity), ig_(&f.grid().internal), poly_(f.table().polyatomic(a)), nk_(f.internal_count(a)),
          log_quadratic_(log_quadratic) {
        const std::size_t nv = vg_.size();
        reduced_.resize(nv * nk_);
        log_.resize(nv * nk_);
        const auto& vals = f.values(a);
        std::vector<double> deg(nk_);
        for (int k = 0; k < nk_; ++k) deg[k] = f.degeneracy(a, k);
        for (std::size_t v = 0; v < nv; ++v)
            for (int k = 0; k < nk_; ++k) {
                const double F = vals[f.index(a, cell, v, k)] / deg[k];
                reduced_[v * nk_ + k] = F;
                log_[v * nk_ + k] = F > 0.0 ? std::log(F) : -std::numeric_limits<double>::infinity();
            }
        lower_ = vg_.node(0);
        upper_ = vg_.node(vg_.n - 1);
    }

    double node(std::size_t v, int k) const { return reduced_[v * nk_ + k]; }

    // false when the point lies outside the node hull (above the last
    // internal node, or beyond the outer velocity nodes).
    bool operator()(const Vec3& xi, double I, double& out) const {
        const double h = vg_.spacing();
        double t[3];
        for (int d = 0; d < 3; ++d) {
            if (xi[d] < lower_ || xi[d] > upper_) return false;
            t[d] = (xi[d] - lower_) / h;
        }
        int k0 = 0;
        double s = 0.0;
        if (poly_) {
            const auto& nodes = ig_->nodes;
            if (I > nodes.back()) return false;
            if (I > nodes.front())
                k0 = std::min(static_cast<int>(std::upper_bound(nodes.begin(), nodes.end(), I) - nodes.begin()) - 1, nk_ - 2);
            s = (I - nodes[k0]) / (nodes[k0 + 1] - nodes[k0]);
        }
        if (log_quadratic_ && vg_.n >= 3) {
            int centre[3];
            double w[3][3];
            for (int d = 0; d < 3; ++d) {
                centre[d] = std::clamp(static_cast<int>(std::lround(t[d])), 1, vg_.n - 2);
                const double u = t[d] - centre[d];
                w[d][0] = 0.5 * u * (u - 1.0);
                w[d][1] = 1.0 - u * u;
                w[d][2] = 0.5 * u * (u + 1.0);
            }
            double acc = 0.0;
            bool finite = true;
            for (int i = 0; i < 3 && finite; ++i)
                for (int j = 0; j < 3 && finite; ++j)
                    for (int k = 0; k < 3; ++k) {
                        const std::size_t at =
                            vg_.flat(centre[0] + i - 1, centre[1] + j - 1, centre[2] + k - 1) * nk_ + k0;
                        double val = log_[at];
                        if (poly_) val = (1.0 - s) * val + s * log_[at + 1];
                        if (!std::isfinite(val)) {
                            finite = false;
                            break;
                        }
                        acc += w[0][i] * w[1][j] * w[2][k] * val;
                    }
            if (finite) {
                out = std::exp(acc);
                return true;
            }
        }
        out = trilinear(t, k0, s);
        return true;
    }

private:
    double trilinear(const double* t, int k0, double s) const {
        int base[3];
        double frac[3];
        for (int d = 0; d < 3; ++d) {
            base[d] = std::min(static_cast<int>(t[d]), vg_.n - 2);
            frac[d] = t[d] - base[d];
        }
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) {
            const int dx = c >> 2, dy = (c >> 1) & 1, dz = c & 1;
            const double w = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) * (dz ? frac[2] : 1.0 - frac[2]);
            if (w == 0.0) continue;
            const std::size_t at = vg_.flat(base[0] + dx, base[1] + dy, base[2] + dz) * nk_ + k0;
            if (!poly_) {
                acc += w * reduced_[at];
                continue;
            }
            const double F0 = reduced_[at], F1 = reduced_[at + 1];
            double val;
            if (F0 > 0.0 && F1 > 0.0) val = std::exp((1.0 - s) * log_[at] + s * log_[at + 1]);
            else if (s >= 0.0) val = (1.0 - s) * F0 + s * F1;
            else val = F0;
            acc += w * val;
        }
        return acc;
    }

private:
    VelocityGrid vg_;
    const InternalGrid* ig_;
    bool poly_;
    int nk_;
    bool log_quadratic_ = true;
    double lower_ = 0.0, upper_ = 0.0;
    std::vector<double> reduced_, log_;
};

// Vose alias table over a discrete distribution.
class AliasTable {
public:
    AliasTable() = default;
    explicit AliasTable(const std::vector<double>& weights) {
        const std::size_t n = weights.size();
        prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw std::invalid_argument("alias table needs positive total weight");
        std::vector<double> scaled(n);
        std::vector<std::size_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = weights[i] * n / total;
            (scaled[i] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            const std::size_t s = small.back(), l = large.back();
            small.pop_back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (std::size_t i : large) prob_[i] = 1.0;
        for (std::size_t i : small) prob_[i] = 1.0;
    }

    std::size_t operator()(Rng& rng) const {
        const double u = uniform01(rng) * prob_.size();
        std::size_t i = static_cast<std::size_t>(u);
        if (i >= prob_.size()) i = prob_.size() - 1;
        return (u - i) < prob_[i] ? i : alias_[i];
    }

private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

struct OperatorOutput {
    // Indexed [species][node] with the DistributionGrid layout.
    std::vector<std::vector<double>> gain, loss, rate;
    std::vector<std::vector<double>> gain_variance;
    std::vector<std::vector<double>> loss_sampled;  // sampled counterpart of f * rate
    std::vector<std::vector<double>> dissipation;   // e_alpha
    std::vector<std::vector<double>> dissipation_variance;
    double max_rate = 0.0;  // largest convolved loss rate, before any projection
    double normalization = 1.0;
    bool normalized = false;
    double clamp_total = 0.0;   // integral of clamped negative gain
    double dropped_rate = 0.0;  // integral of the loss rate of dropped collisions
    std::size_t samples = 0, dropped_samples = 0, undefined_dissipation = 0;
    bool projected = false;

    double collision(int a, std::size_t i) const { return gain[a][i] - loss[a][i]; }
};

struct EvalOptions {
    std::uint64_t step = 0;
    const DistributionGrid* reference = nullptr;  // freezes the partner proposal
    bool project = false;
};

namespace detail {

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double[], FftwFree>;
using ComplexBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

inline RealBuffer real_buffer(std::size_t n) { return RealBuffer(static_cast<double*>(fftw_malloc(sizeof(double) * n))); }
inline ComplexBuffer complex_buffer(std::size_t n) {
    return ComplexBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

}  // namespace detail

// Evaluates gain, loss and dissipation of the collision operator on a fixed
// grid. The reduced-kernel spectra used by the loss convolution are built
// once at construction.
class CollisionOperator {
public:
    static constexpr std::size_t spectrum_budget_bytes = std::size_t{256} << 20;

    CollisionOperator(CollisionModel model, GridSpec grid, QuadratureRule rule)
        : model_(std::move(model)), grid_(std::move(grid)), rule_(rule) {
        auto p = rule_.problems();
        auto g = grid_.problems();
        p.insert(p.end(), g.begin(), g.end());
        if (!p.empty()) throw std::invalid_argument(p.front());
        const int N = grid_.velocity.n;
        m_ = 2 * N;
        real_size_ = static_cast<std::size_t>(m_) * m_ * m_;
        spec_size_ = static_cast<std::size_t>(m_) * m_ * (m_ / 2 + 1);
        auto in = detail::real_buffer(real_size_);
        auto out = detail::complex_buffer(spec_size_);
        forward_ = fftw_plan_dft_r2c_3d(m_, m_, m_, in.get(), out.get(), FFTW_ESTIMATE);
        backward_ = fftw_plan_dft_c2r_3d(m_, m_, m_, out.get(), in.get(), FFTW_ESTIMATE);
        build_kernel_spectra();
        build_rules();
    }

    CollisionOperator(const CollisionOperator&) = delete;
    CollisionOperator& operator=(const CollisionOperator&) = delete;

    ~CollisionOperator() {
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    const CollisionModel& model() const { return model_; }
    const GridSpec& grid() const { return grid_; }
    const QuadratureRule& rule() const { return rule_; }
    void set_rule(const QuadratureRule& r) {
        auto p = r.problems();
        if (!p.empty()) throw std::invalid_argument(p.front());
        rule_ = r;
        build_rules();
    }

    // Reduced kernel A for the pair at lattice offset |d|^2 (in units of the
    // velocity spacing) and internal nodes k, l.
    double kernel_sample(int a, int b, long d2, int k, int l) {
        const PairKernel& pk = model_.pair(a, b);
        const double h = grid_.velocity.spacing();
        const double speed = h * std::sqrt(static_cast<double>(d2));
        const double Ia = pk.table.polyatomic(a) ? grid_.internal.nodes[k] : 0.0;
        const double Ib = pk.table.polyatomic(b) ? grid_.internal.nodes[l] : 0.0;
        if (pk.spec.truncation == 0) return reduced_a_closed_form(pk, speed, Ia + Ib);
        const double energy = 0.5 * pk.mu * speed * speed + Ia + Ib;
        const double base = kernel_base(pk, speed, energy, 1.0);
        if (base == 0.0) return 0.0;
        const double pre = pre_state_cutoff(pk, speed, Ia, Ib);
        if (pre == 0.0) return 0.0;
        auto& memo = share_memo_[static_cast<std::size_t>(a) * model_.table.count() + b];
        std::uint64_t ebits;
        std::memcpy(&ebits, &energy, sizeof ebits);
        const std::uint64_t key = splitmix64(static_cast<std::uint64_t>(d2)) ^ ebits;
        auto it = memo.find(key);
        double share;
        if (it == memo.end()) {
            share = share_integral(pk, speed, energy, 0.0).value;
            memo.emplace(key, share);
        } else {
            share = it->second;
        }
        return 4.0 * std::numbers::pi * base * pre * split_mass_[static_cast<std::size_t>(a) * model_.table.count() + b] * share;
    }

    // L_a(f) for every species, [species][node].
    std::vector<std::vector<double>> loss_rates(const DistributionGrid& f) const {
        check_grid(f);
        const int s = model_.table.count();
        std::vector<std::vector<double>> rates(s);
        for (int a = 0; a < s; ++a) rates[a].assign(f.species_size(a), 0.0);
        for (std::size_t c = 0; c < f.cells(); ++c) loss_rates_cell(f, c, rates);
        return rates;
    }

    OperatorOutput evaluate(const DistributionGrid& f, const EvalOptions& opt = {}) const {
        check_grid(f);
        if (!f.nonnegative()) throw std::invalid_argument("distribution has negative entries");
        const DistributionGrid& ref = opt.reference ? *opt.reference : f;
        if (opt.reference) check_grid(ref);
        const int s = model_.table.count();
        OperatorOutput out;
        out.rate = loss_rates(f);
        for (const auto& r : out.rate)
            for (double x : r) out.max_rate = std::max(out.max_rate, x);
        out.gain.resize(s);
        out.loss.resize(s);
        out.gain_variance.resize(s);
        out.loss_sampled.resize(s);
        out.dissipation.resize(s);
        out.dissipation_variance.resize(s);
        for (int a = 0; a < s; ++a) {
            const std::size_t n = f.species_size(a);
            out.loss[a].resize(n);
            for (std::size_t i = 0; i < n; ++i) out.loss[a][i] = f.values(a)[i] * out.rate[a][i];
            out.gain[a].assign(n, 0.0);
            out.gain_variance[a].assign(n, 0.0);
            out.loss_sampled[a].assign(n, 0.0);
            out.dissipation[a].assign(n, 0.0);
            out.dissipation_variance[a].assign(n, 0.0);
        }
        for (std::size_t c = 0; c < f.cells(); ++c) gain_cell(f, ref, c, opt.step, out);
        out.normalization = 1.0;
        if (opt.project) project_conservative(f, out);
        return out;
    }

    // Sample-level sums of the gain of (a, b) against phi and of the loss
    // against phi evaluated at the post-collision state of species a.
    struct DualPairing {
        double gain_side = 0.0;
        double loss_side = 0.0;
    };

    DualPairing dual_pairing(const DistributionGrid& f, int a, int b,
                             const std::function<double(const Vec3&, double)>& phi, std::uint64_t step = 0) const {
        check_grid(f);
        DualPairing dp;
        const auto& vg = grid_.velocity;
        for (std::size_t c = 0; c < f.cells(); ++c) {
            CellContext ctx(*this, f, f, c);
            const int nk = f.internal_count(a);
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) {
                    const double vol = f.node_volume(a, k);
                    const double phi_here = phi(vg.velocity(v), f.internal_at(a, k));
                    sample_pair(ctx, a, b, c, v, k, step, [&](const SampleOutcome& o) {
                        if (o.dropped) return;
                        dp.gain_side += vol * phi_here * o.gain;
                        dp.loss_side += vol * o.loss * phi(o.xi_post, o.internal_post);
                    });
                }
        }
        return dp;
    }

    // Moment correction Q += (gain + loss) * sum_m c_m phi_m per cell so the
    // collision invariants of Q vanish.
    void project_conservative(const DistributionGrid& f, OperatorOutput& out) const {
        const auto basis = collision_invariant_basis(model_.table);
        const int nb = static_cast<int>(basis.size());
        const auto& vg = grid_.velocity;
        const int s = model_.table.count();
        for (std::size_t c = 0; c < f.cells(); ++c) {
            Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
            std::vector<double> phi(nb);
            auto eval_phi = [&](int a, std::size_t v, int k) {
                Microstate z{a, vg.velocity(v), f.internal_at(a, k)};
                for (int m = 0; m < nb; ++m) phi[m] = basis[m](model_.table, z);
            };
            for (int a = 0; a < s; ++a) {
                const int nk = f.internal_count(a);
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k) {
                        const std::size_t i = f.index(a, c, v, k);
                        const double vol = f.node_volume(a, k);
                        const double D = out.gain[a][i] + out.loss[a][i];
                        const double Q = out.gain[a][i] - out.loss[a][i];
                        eval_phi(a, v, k);
                        for (int m = 0; m < nb; ++m) {
                            rhs(m) -= vol * Q * phi[m];
                            for (int n2 = 0; n2 < nb; ++n2) M(m, n2) += vol * D * phi[m] * phi[n2];
                        }
                    }
            }
            const Eigen::VectorXd coef = M.completeOrthogonalDecomposition().solve(rhs);
            for (int a = 0; a < s; ++a) {
                const int nk = f.internal_count(a);
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k) {
                        const std::size_t i = f.index(a, c, v, k);
                        eval_phi(a, v, k);
                        double w = 0.0;
                        for (int m = 0; m < nb; ++m) w += coef(m) * phi[m];
                        const double delta = (out.gain[a][i] + out.loss[a][i]) * w;
                        const double fi = f.values(a)[i];
                        if (delta >= 0.0 || !(fi > 0.0)) {
                            out.gain[a][i] += delta;
                        } else {
                            out.loss[a][i] -= delta;
                            out.rate[a][i] = out.loss[a][i] / fi;
                        }
                    }
            }
        }
        out.projected = true;
    }

private:
    struct SampleOutcome {
        double gain = 0.0, loss = 0.0;  // weighted G_s and L_s
        bool dropped = false;
        Vec3 xi_post{};
        double internal_post = 0.0;
    };

    // Per-cell data shared by all output nodes.
    struct CellContext {
        std::vector<ReducedInterpolator> interp;
        std::vector<AliasTable> proposal;
        std::vector<std::vector<double>> proposal_prob;  // p_j
        std::vector<std::vector<double>> partner_values;
        CellContext(const CollisionOperator& op, const DistributionGrid& f, const DistributionGrid& ref, std::size_t c) {
            const int s = op.model_.table.count();
            const auto& vg = op.grid_.velocity;
            for (int b = 0; b < s; ++b) {
                interp.emplace_back(f, b, c, op.rule_.interpolation == QuadratureRule::Interpolation::LogQuadratic);
                const int nk = f.internal_count(b);
                const std::size_t n = vg.size() * nk;
                std::vector<double> vals(n), vol(n), mix(n);
                double mass = 0.0, total_vol = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const int k = static_cast<int>(j % nk);
                    vals[j] = f.values(b)[f.index(b, c, j / nk, k)];
                    vol[j] = f.node_volume(b, k);
                    mass += ref.values(b)[ref.index(b, c, j / nk, k)] * vol[j];
                    total_vol += vol[j];
                }
                const double eps = mass > 0.0 ? op.rule_.defensive : 1.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double r = mass > 0.0 ? ref.values(b)[ref.index(b, c, j / nk, static_cast<int>(j % nk))] : 0.0;
                    mix[j] = (1.0 - eps) * (mass > 0.0 ? r * vol[j] / mass : 0.0) + eps * vol[j] / total_vol;
                }
                partner_values.push_back(std::move(vals));
                if (op.rule_.kind == QuadratureRule::Kind::MonteCarlo) proposal.emplace_back(mix);
                else proposal.emplace_back();
                proposal_prob.push_back(std::move(mix));
            }
        }
    };

    struct PairRule {
        Rule1D share, split;
        double mc_scale = 1.0;  // 4 pi B(2, k+1) B(a+1, b+1)
    };

    void check_grid(const DistributionGrid& f) const {
        const auto& g = f.grid();
        if (g.velocity.n != grid_.velocity.n || g.velocity.vmax != grid_.velocity.vmax ||
            g.internal.nodes != grid_.internal.nodes || g.spatial.dim != grid_.spatial.dim || g.spatial.n != grid_.spatial.n ||
            f.species() != model_.table.count())
            throw std::invalid_argument("distribution grid does not match the operator grid");
    }

    void build_rules() {
        const int s = model_.table.count();
        rules_.assign(static_cast<std::size_t>(s) * s, {});
        sphere_ = SphereRule::make(rule_.polar_nodes, rule_.azimuth_nodes);
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b) {
                const PairKernel& pk = model_.pair(a, b);
                PairRule& r = rules_[static_cast<std::size_t>(a) * s + b];
                r.mc_scale = 4.0 * std::numbers::pi;
                if (pk.has_share()) {
                    r.mc_scale *= boost::math::beta(2.0, pk.share_exp + 1.0);
                    r.share = gauss_jacobi01(rule_.share_nodes, 1.0, pk.share_exp);
                } else {
                    r.share = {{1.0}, {1.0}};
                }
                if (pk.has_split()) {
                    r.mc_scale *= boost::math::beta(pk.exp_a + 1.0, pk.exp_b + 1.0);
                    r.split = rule_.mirrored ? gauss_jacobi01(rule_.split_nodes, pk.exp_b, pk.exp_a)
                                             : gauss_jacobi01(rule_.split_nodes, pk.exp_a, pk.exp_b);
                    if (rule_.mirrored)
                        for (double& x : r.split.nodes) x = 1.0 - x;
                } else {
                    r.split = {{0.5}, {1.0}};
                }
            }
    }

    // Spectra of the reduced kernels on the zero-padded 2N lattice.
    void build_kernel_spectra() {
        const int s = model_.table.count();
        const int N = grid_.velocity.n;
        share_memo_.assign(static_cast<std::size_t>(s) * s, {});
        split_mass_.assign(static_cast<std::size_t>(s) * s, 1.0);
        independent_.assign(static_cast<std::size_t>(s) * s, false);
        spectra_.clear();
        spectra_.resize(static_cast<std::size_t>(s) * s);
        std::size_t bytes = 0;
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b) {
                const PairKernel& pk = model_.pair(a, b);
                const std::size_t id = static_cast<std::size_t>(a) * s + b;
                split_mass_[id] = split_integral(pk).value;
                const bool indep = pk.spec.truncation == 0 && pk.spec.cross_section.speed_exponent() == 0.0;
                independent_[id] = indep || (!pk.table.polyatomic(a) && !pk.table.polyatomic(b));
                const std::size_t count = independent_[id] ? 1 : static_cast<std::size_t>(nk(a)) * nk(b);
                bytes += count * spec_size_ * sizeof(fftw_complex);
            }
        cache_spectra_ = bytes <= spectrum_budget_bytes;
        if (!cache_spectra_) return;
        for (int a = 0; a < s; ++a)
            for (int b = 0; b < s; ++b) {
                const std::size_t id = static_cast<std::size_t>(a) * s + b;
                const int ka = independent_[id] ? 1 : nk(a), kb = independent_[id] ? 1 : nk(b);
                for (int k = 0; k < ka; ++k)
                    for (int l = 0; l < kb; ++l) {
                        spectra_[id].push_back(detail::complex_buffer(spec_size_));
                        kernel_spectrum(a, b, k, l, spectra_[id].back().get());
                    }
            }
        (void)N;
    }

    int nk(int a) const { return model_.table.polyatomic(a) ? grid_.internal.size() : 1; }

    void kernel_spectrum(int a, int b, int k, int l, fftw_complex* dst) const {
        auto* self = const_cast<CollisionOperator*>(this);
        const int N = grid_.velocity.n;
        auto buf = detail::real_buffer(real_size_);
        std::fill(buf.get(), buf.get() + real_size_, 0.0);
        std::unordered_map<long, double> by_norm;
        for (int x = -(N - 1); x <= N - 1; ++x)
            for (int y = -(N - 1); y <= N - 1; ++y)
                for (int z = -(N - 1); z <= N - 1; ++z) {
                    const long d2 = static_cast<long>(x) * x + static_cast<long>(y) * y + static_cast<long>(z) * z;
                    auto it = by_norm.find(d2);
                    double val;
                    if (it == by_norm.end()) {
                        val = self->kernel_sample(a, b, d2, k, l);
                        by_norm.emplace(d2, val);
                    } else {
                        val = it->second;
                    }
                    const std::size_t ix = static_cast<std::size_t>((x + m_) % m_), iy = static_cast<std::size_t>((y + m_) % m_),
                                      iz = static_cast<std::size_t>((z + m_) % m_);
                    buf[(ix * m_ + iy) * m_ + iz] = val;
                }
        fftw_execute_dft_r2c(forward_, buf.get(), dst);
    }

    void loss_rates_cell(const DistributionGrid& f, std::size_t c, std::vector<std::vector<double>>& rates) const {
        const int s = model_.table.count();
        const int N = grid_.velocity.n;
        const auto& vg = grid_.velocity;
        const double h3 = vg.cell_volume();
        // Spectra of h^3 w_l f_b(., l), zero padded.
        std::vector<std::vector<detail::ComplexBuffer>> fhat(s);
        std::vector<detail::ComplexBuffer> fsum(s);
        auto buf = detail::real_buffer(real_size_);
        for (int b = 0; b < s; ++b) {
            const int kb = f.internal_count(b);
            fsum[b] = detail::complex_buffer(spec_size_);
            std::fill(reinterpret_cast<double*>(fsum[b].get()), reinterpret_cast<double*>(fsum[b].get()) + 2 * spec_size_, 0.0);
            for (int l = 0; l < kb; ++l) {
                std::fill(buf.get(), buf.get() + real_size_, 0.0);
                const double w = h3 * (f.table().polyatomic(b) ? grid_.internal.weights[l] : 1.0);
                for (int x = 0; x < N; ++x)
                    for (int y = 0; y < N; ++y)
                        for (int z = 0; z < N; ++z)
                            buf[(static_cast<std::size_t>(x) * m_ + y) * m_ + z] =
                                w * f.values(b)[f.index(b, c, vg.flat(x, y, z), l)];
                fhat[b].push_back(detail::complex_buffer(spec_size_));
                fftw_execute_dft_r2c(forward_, buf.get(), fhat[b].back().get());
                for (std::size_t q = 0; q < spec_size_; ++q) {
                    fsum[b][q][0] += fhat[b][l][q][0];
                    fsum[b][q][1] += fhat[b][l][q][1];
                }
            }
        }
        auto acc = detail::complex_buffer(spec_size_);
        auto scratch = detail::complex_buffer(spec_size_);
        const double scale = 1.0 / static_cast<double>(real_size_);
        auto multiply_add = [&](const fftw_complex* kern, const fftw_complex* data) {
            for (std::size_t q = 0; q < spec_size_; ++q) {
                const double re = kern[q][0] * data[q][0] - kern[q][1] * data[q][1];
                const double im = kern[q][0] * data[q][1] + kern[q][1] * data[q][0];
                acc[q][0] += re;
                acc[q][1] += im;
            }
        };
        for (int a = 0; a < s; ++a) {
            const int ka = f.internal_count(a);
            bool all_indep = true;
            for (int b = 0; b < s; ++b) all_indep = all_indep && independent_[static_cast<std::size_t>(a) * s + b];
            for (int k = 0; k < ka; ++k) {
                if (all_indep && k > 0) {
                    for (std::size_t v = 0; v < vg.size(); ++v)
                        rates[a][f.index(a, c, v, k)] = rates[a][f.index(a, c, v, 0)];
                    continue;
                }
                std::fill(reinterpret_cast<double*>(acc.get()), reinterpret_cast<double*>(acc.get()) + 2 * spec_size_, 0.0);
                for (int b = 0; b < s; ++b) {
                    const std::size_t id = static_cast<std::size_t>(a) * s + b;
                    if (independent_[id]) {
                        const fftw_complex* kern = spectrum(id, a, b, 0, 0, scratch.get());
                        multiply_add(kern, fsum[b].get());
                        continue;
                    }
                    for (int l = 0; l < f.internal_count(b); ++l) {
                        const fftw_complex* kern = spectrum(id, a, b, k, l, scratch.get());
                        multiply_add(kern, fhat[b][l].get());
                    }
                }
                fftw_execute_dft_c2r(backward_, acc.get(), buf.get());
                for (int x = 0; x < N; ++x)
                    for (int y = 0; y < N; ++y)
                        for (int z = 0; z < N; ++z)
                            rates[a][f.index(a, c, vg.flat(x, y, z), k)] =
                                std::max(0.0, scale * buf[(static_cast<std::size_t>(x) * m_ + y) * m_ + z]);
            }
        }
    }

    const fftw_complex* spectrum(std::size_t id, int a, int b, int k, int l, fftw_complex* scratch) const {
        if (cache_spectra_) {
            const std::size_t at = independent_[id] ? 0 : static_cast<std::size_t>(k) * nk(b) + l;
            return spectra_[id][at].get();
        }
        kernel_spectrum(a, b, independent_[id] ? 0 : k, independent_[id] ? 0 : l, scratch);
        return scratch;
    }

    // Visits every sample of the (a, b) gain integral at output node (v, k).
    template <class Visit>
    void sample_pair(const CellContext& ctx, int a, int b, std::size_t c, std::size_t v, int k, std::uint64_t step,
                     Visit&& visit) const {
        const int s = model_.table.count();
        const PairKernel& pk = model_.pair(a, b);
        const PairRule& pr = rules_[static_cast<std::size_t>(a) * s + b];
        const auto& vg = grid_.velocity;
        const bool poly_a = model_.table.polyatomic(a), poly_b = model_.table.polyatomic(b);
        const int nka = poly_a ? grid_.internal.size() : 1, nkb = poly_b ? grid_.internal.size() : 1;
        const Vec3 xi = vg.velocity(v);
        const double Ia = poly_a ? grid_.internal.nodes[k] : 0.0;
        const double deg_a = poly_a && pk.exp_a != 0.0 ? std::pow(Ia, pk.exp_a) : 1.0;
        const double fi = ctx.partner_values[a][v * nka + k];
        const ReducedMass rm = reduced_mass(model_.table, a, b);
        const double amp = pk.spec.cross_section.amplitude * pk.normalizer;
        const double lam = pk.spec.cross_section.speed_exponent();
        const auto& fb = ctx.partner_values[b];

        auto one = [&](std::size_t j, double weight, double share, double split, const Vec3& omega) {
            SampleOutcome o;
            const std::size_t vj = j / nkb;
            const int l = static_cast<int>(j % nkb);
            const Vec3 xs = vg.velocity(vj);
            const double Ib = poly_b ? grid_.internal.nodes[l] : 0.0;
            const Vec3 g = xi - xs;
            const double speed = norm(g);
            if (speed == 0.0) {
                visit(o);
                return;
            }
            const double energy = 0.5 * rm.mu * speed * speed + Ia + Ib;
            const double vE = std::sqrt(2.0 * energy / rm.mu);
            double post_speed = speed, Ip = 0.0, Isp = 0.0;
            if (poly_a || poly_b) {
                post_speed = vE * std::sqrt(share);
                const double rest = (1.0 - share) * energy;
                if (poly_a && poly_b) {
                    Ip = split * rest;
                    Isp = rest - Ip;
                } else if (poly_b) {
                    Isp = rest;
                } else {
                    Ip = rest;
                }
            }
            double rate = amp * (lam == 0.0 ? 1.0 : std::pow(vE, lam)) * speed;
            if (pk.spec.truncation > 0) {
                KernelPoint p;
                p.speed = speed;
                p.speed_post = post_speed;
                p.energy = energy;
                p.internal = Ia + Ib;
                p.internal_post = Ip + Isp;
                p.share = pk.has_share() ? share : 1.0;
                p.share_dual = std::min(1.0, 0.5 * rm.mu * speed * speed / energy);
                p.split = split;
                p.split_dual = Ia + Ib > 0.0 ? Ia / (Ia + Ib) : 0.0;
                p.cos_abs = std::abs(dot(g, omega)) / speed;
                rate *= kernel_cutoff(pk, p);
            }
            const double wr = weight * rate;
            const Vec3 centre = rm.weight_a * xi + rm.weight_b * xs;
            o.xi_post = centre + (rm.weight_b * post_speed) * omega;
            o.internal_post = Ip;
            const Vec3 xs_post = centre - (rm.weight_a * post_speed) * omega;
            o.loss = wr * fi * fb[j];
            double Fa = 0.0, Fb = 0.0;
            if (wr == 0.0) {
                o.loss = 0.0;
            } else if (!ctx.interp[a](o.xi_post, Ip, Fa) || !ctx.interp[b](xs_post, Isp, Fb)) {
                o.dropped = true;
            } else {
                const double deg_b = poly_b && pk.exp_b != 0.0 ? std::pow(Ib, pk.exp_b) : 1.0;
                o.gain = wr * deg_a * deg_b * Fa * Fb;
            }
            visit(o);
        };

        if (rule_.kind == QuadratureRule::Kind::MonteCarlo) {
            Rng rng(stream_key({rule_.seed, step, static_cast<std::uint64_t>(a), c, v * nka + k,
                                static_cast<std::uint64_t>(b)}));
            const auto& prob = ctx.proposal_prob[b];
            const int M = rule_.samples;
            for (int m = 0; m < M; ++m) {
                const std::size_t j = ctx.proposal[b](rng);
                const double share = pk.has_share() ? sample_beta(rng, 2.0, pk.share_exp + 1.0) : 1.0;
                const double split = pk.has_split() ? sample_beta(rng, pk.exp_a + 1.0, pk.exp_b + 1.0) : 0.5;
                const Vec3 omega = sample_sphere(rng);
                const int l = static_cast<int>(j % nkb);
                const double vol = grid_.velocity.cell_volume() * (poly_b ? grid_.internal.weights[l] : 1.0);
                one(j, vol / (prob[j] * M) * pr.mc_scale, share, split, omega);
            }
        } else {
            const std::size_t nj = vg.size() * nkb;
            const double sign = rule_.mirrored ? -1.0 : 1.0;
            for (std::size_t j = 0; j < nj; ++j) {
                const int l = static_cast<int>(j % nkb);
                const double vol = grid_.velocity.cell_volume() * (poly_b ? grid_.internal.weights[l] : 1.0);
                for (std::size_t p = 0; p < pr.share.nodes.size(); ++p)
                    for (std::size_t q = 0; q < pr.split.nodes.size(); ++q)
                        for (std::size_t o = 0; o < sphere_.directions.size(); ++o)
                            one(j, vol * pr.share.weights[p] * pr.split.weights[q] * sphere_.weights[o], pr.share.nodes[p], pr.split.nodes[q], sign * sphere_.directions[o]);
            }
        }
    }

    void gain_cell(const DistributionGrid& f, const DistributionGrid& ref, std::size_t c, std::uint64_t step,
                   OperatorOutput& out) const {
        const CellContext ctx(*this, f, ref, c);
        const int s = model_.table.count();
        const auto& vg = grid_.velocity;
        const bool mc = rule_.kind == QuadratureRule::Kind::MonteCarlo;
        for (int a = 0; a < s; ++a) {
            const int nka = f.internal_count(a);
            const long total = static_cast<long>(vg.size()) * nka;
            std::vector<double> clamp(total, 0.0), dropped(total, 0.0);
            std::vector<std::size_t> nsamp(total, 0), ndrop(total, 0), nundef(total, 0);
#pragma omp parallel for schedule(dynamic, 64)
            for (long node = 0; node < total; ++node) {
                const std::size_t v = static_cast<std::size_t>(node) / nka;
                const int k = static_cast<int>(node % nka);
                const std::size_t i = f.index(a, c, v, k);
                double q_sum = 0.0, q_var = 0.0, l_sum = 0.0, e_sum = 0.0, e_var = 0.0, leak = 0.0;
                for (int b = 0; b < s; ++b) {
                    double s1 = 0.0, s2 = 0.0, e1 = 0.0, e2 = 0.0;
                    std::size_t count = 0;
                    sample_pair(ctx, a, b, c, v, k, step, [&](const SampleOutcome& o) {
                        ++count;
                        if (o.dropped) {
                            leak += o.loss;
                            ++ndrop[node];
                            return;
                        }
                        const double d = o.gain - o.loss;
                        s1 += d;
                        s2 += d * d;
                        l_sum += o.loss;
                        if (o.loss > 0.0) {
                            if (o.gain > 0.0) {
                                const double x = o.gain / o.loss;
                                const double e = o.loss * (x - 1.0) * std::log(x);
                                e1 += e;
                                e2 += e * e;
                            } else {
                                ++nundef[node];
                            }
                        }
                    });
                    nsamp[node] += count;
                    q_sum += s1;
                    e_sum += e1;
                    if (mc && count > 1) {
                        const double M = static_cast<double>(count);
                        q_var += std::max(0.0, (M * s2 - s1 * s1) / (M - 1.0));
                        e_var += std::max(0.0, (M * e2 - e1 * e1) / (M - 1.0));
                    }
                }
                double g = out.loss[a][i] + q_sum;
                if (g < 0.0) {
                    clamp[node] = -g * f.node_volume(a, k);
                    g = 0.0;
                }
                out.gain[a][i] = g;
                out.gain_variance[a][i] = q_var;
                out.loss_sampled[a][i] = l_sum;
                out.dissipation[a][i] = e_sum;
                out.dissipation_variance[a][i] = e_var;
                dropped[node] = leak * f.node_volume(a, k);
            }
            for (long node = 0; node < total; ++node) {
                out.clamp_total += clamp[node];
                out.dropped_rate += dropped[node];
                out.samples += nsamp[node];
                out.dropped_samples += ndrop[node];
                out.undefined_dissipation += nundef[node];
            }
        }
    }

    CollisionModel model_;
    GridSpec grid_;
    QuadratureRule rule_;
    int m_ = 0;
    std::size_t real_size_ = 0, spec_size_ = 0;
    fftw_plan forward_ = nullptr, backward_ = nullptr;
    bool cache_spectra_ = true;
    std::vector<std::vector<detail::ComplexBuffer>> spectra_;
    std::vector<bool> independent_;
    std::vector<double> split_mass_;
    std::vector<std::unordered_map<std::uint64_t, double>> share_memo_;
    std::vector<PairRule> rules_;
    SphereRule sphere_;
};

inline std::vector<double> loss_rate(const CollisionOperator& op, const DistributionGrid& f, int a) {
    return op.loss_rates(f).at(a);
}

inline std::vector<double> gain(const CollisionOperator& op, const DistributionGrid& f, int a, const EvalOptions& opt = {}) {
    return op.evaluate(f, opt).gain.at(a);
}

// Divides every operator quantity by N_n(f).
inline void apply_normalization(OperatorOutput& out, double N) {
    if (out.normalized) throw std::logic_error("operator output already normalized");
    for (auto* arr : {&out.gain, &out.loss, &out.rate, &out.loss_sampled, &out.dissipation})
        for (auto& v : *arr)
            for (double& x : v) x /= N;
    for (auto* arr : {&out.gain_variance, &out.dissipation_variance})
        for (auto& v : *arr)
            for (double& x : v) x /= N * N;
    out.clamp_total /= N;
    out.dropped_rate /= N;
    out.max_rate /= N;
    out.normalization = N;
    out.normalized = true;
}

inline OperatorOutput q_tilde(const CollisionOperator& op, const DistributionGrid& f, const EvalOptions& opt = {}) {
    OperatorOutput out = op.evaluate(f, opt);
    apply_normalization(out, normalization(f, op.model().truncation));
    return out;
}

// Integral of |g|, summed over nodes with the node measure.
inline double integral_abs(const DistributionGrid& f, int a, const std::vector<double>& g) {
    double s = 0.0;
    const int nk = f.internal_count(a);
    for (std::size_t i = 0; i < g.size(); ++i) s += std::abs(g[i]) * f.node_volume(a, static_cast<int>(i % nk));
    return s;
}

inline double integral(const DistributionGrid& f, int a, const std::vector<double>& g) {
    double s = 0.0;
    const int nk = f.internal_count(a);
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * f.node_volume(a, static_cast<int>(i % nk));
    return s;
}

inline std::vector<double> collision_values(const OperatorOutput& out, int a) {
    std::vector<double> q(out.gain[a].size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = out.gain[a][i] - out.loss[a][i];
    return q;
}

struct DissipationReport {
    std::vector<double> density;
    double integral = 0.0;
    double sigma = 0.0;
    std::size_t undefined = 0;
};

inline void require_positive_support(const DistributionGrid& f) {
    for (int a = 0; a < f.species(); ++a)
        for (double x : f.values(a))
            if (!(x > 0.0)) throw std::invalid_argument("nonpositive values inside support");
}

inline DissipationReport entropy_dissipation(const OperatorOutput& out, const DistributionGrid& f, int a) {
    DissipationReport r;
    r.density = out.dissipation.at(a);
    r.integral = integral(f, a, r.density);
    const int nk = f.internal_count(a);
    double var = 0.0;
    for (std::size_t i = 0; i < r.density.size(); ++i) {
        const double vol = f.node_volume(a, static_cast<int>(i % nk));
        var += vol * vol * out.dissipation_variance[a][i];
    }
    r.sigma = std::sqrt(var);
    r.undefined = out.undefined_dissipation;
    return r;
}

inline DissipationReport entropy_dissipation(const CollisionOperator& op, const DistributionGrid& f, int a,
                                             const EvalOptions& opt = {}) {
    require_positive_support(f);
    return entropy_dissipation(q_tilde(op, f, opt), f, a);
}

// W[f] = sum_a <Q_a, log F_a> with its sampling error and the scale
// <Q+ + Q-, |log F|> used for tolerances.
struct EntropyProduction {
    double value = 0.0;
    double sigma = 0.0;
    double scale = 0.0;
    double invariant_free_scale = 0.0;  // same scale with the invariant part of log F removed
};

inline EntropyProduction entropy_production(const OperatorOutput& out, const DistributionGrid& f) {
    EntropyProduction w;
    const auto& vg = f.grid().velocity;
    const auto basis = collision_invariant_basis(f.table());
    const int nb = static_cast<int>(basis.size());
    // Least-squares fit of log F onto the invariants with weight (Q+ + Q-),
    // per cell, to measure the part the collision invariants cannot absorb.
    double var = 0.0;
    for (std::size_t c = 0; c < f.cells(); ++c) {
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(nb, nb);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
        std::vector<double> phi(nb);
        auto eval = [&](int a, std::size_t v, int k) {
            Microstate z{a, vg.velocity(v), f.internal_at(a, k)};
            for (int m = 0; m < nb; ++m) phi[m] = basis[m](f.table(), z);
        };
        for (int pass = 0; pass < 2; ++pass) {
            Eigen::VectorXd coef;
            if (pass == 1) coef = M.completeOrthogonalDecomposition().solve(rhs);
            for (int a = 0; a < f.species(); ++a) {
                const int nk = f.internal_count(a);
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k) {
                        const std::size_t i = f.index(a, c, v, k);
                        const double fi = f.values(a)[i];
                        if (!(fi > 0.0)) continue;
                        const double logF = std::log(fi / f.degeneracy(a, k));
                        const double vol = f.node_volume(a, k);
                        const double D = out.gain[a][i] + out.loss[a][i];
                        eval(a, v, k);
                        if (pass == 0) {
                            w.value += vol * (out.gain[a][i] - out.loss[a][i]) * logF;
                            w.scale += vol * D * std::abs(logF);
                            var += vol * vol * logF * logF * out.gain_variance[a][i];
                            for (int m = 0; m < nb; ++m) {
                                rhs(m) += vol * D * phi[m] * logF;
                                for (int n2 = 0; n2 < nb; ++n2) M(m, n2) += vol * D * phi[m] * phi[n2];
                            }
                        } else {
                            double proj = 0.0;
                            for (int m = 0; m < nb; ++m) proj += coef(m) * phi[m];
                            w.invariant_free_scale += vol * D * std::abs(logF - proj);
                        }
                    }
            }
        }
    }
    w.sigma = std::sqrt(var);
    return w;
}

struct ArkerydReport {
    double max_violation = 0.0;        // max over nodes of Q+ - e/log K - K Q-
    double max_excess = 0.0;           // max over nodes of violation - tolerance
    double min_slack = 0.0;            // min over nodes of the right side minus Q+
    bool holds = true;
};

// Nodewise check of Q+ <= e / log K + K Q-. The tolerance at a node is the
// gap (K-1)|sampled loss - f L| between the sampled and convolved loss plus
// 3 sigma of the gain estimate.
inline ArkerydReport arkeryd_split(const OperatorOutput& out, int a, double K) {
    if (!(K > 1.0)) throw std::invalid_argument("Arkeryd constant must exceed 1");
    ArkerydReport r;
    r.min_slack = std::numeric_limits<double>::infinity();
    const double inv_log = 1.0 / std::log(K);
    for (std::size_t i = 0; i < out.gain[a].size(); ++i) {
        const double rhs = inv_log * out.dissipation[a][i] + K * out.loss[a][i];
        const double viol = out.gain[a][i] - rhs;
        const double tol = (K - 1.0) * std::abs(out.loss_sampled[a][i] - out.loss[a][i]) +
                           3.0 * std::sqrt(out.gain_variance[a][i]) + 1e-12 * (std::abs(rhs) + out.gain[a][i]);
        r.max_violation = std::max(r.max_violation, viol);
        r.max_excess = std::max(r.max_excess, viol - tol);
        r.min_slack = std::min(r.min_slack, -viol);
        if (viol > tol) r.holds = false;
    }
    return r;
}

// <Q, phi_m> for each collision invariant, with the scale <Q-, |phi_m|>.
struct MomentDefect {
    std::string name;
    double value = 0.0;
    double scale = 0.0;
    double sigma = 0.0;
};

inline std::vector<MomentDefect> moment_defects(const OperatorOutput& out, const DistributionGrid& f) {
    const auto basis = collision_invariant_basis(f.table());
    std::vector<MomentDefect> res(basis.size());
    std::vector<double> var(basis.size(), 0.0);
    const auto& vg = f.grid().velocity;
    for (std::size_t m = 0; m < basis.size(); ++m) res[m].name = basis[m].name;
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) {
                    const std::size_t i = f.index(a, c, v, k);
                    const double vol = f.node_volume(a, k);
                    Microstate z{a, vg.velocity(v), f.internal_at(a, k)};
                    for (std::size_t m = 0; m < basis.size(); ++m) {
                        const double phi = basis[m](f.table(), z);
                        res[m].value += vol * (out.gain[a][i] - out.loss[a][i]) * phi;
                        res[m].scale += vol * out.loss[a][i] * std::abs(phi);
                        var[m] += vol * vol * phi * phi * out.gain_variance[a][i];
                    }
                }
    }
    for (std::size_t m = 0; m < basis.size(); ++m) res[m].sigma = std::sqrt(var[m]);
    return res;
}

}  // namespace polykin
