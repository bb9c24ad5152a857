#pragma once

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polykin/operator.hpp"
#include "polykin/state.hpp"

namespace polykin {

struct TimeStepConfig {
    enum class Scheme { ExponentialEuler, Picard };
    double dt = 0.01;
    int steps = 10;
    Scheme scheme = Scheme::ExponentialEuler;
    double picard_tolerance = 1e-10;
    int picard_max_iterations = 5;
    int truncation = 0;
    bool project = true;
    bool transport = false;
    double rate_cap = 1.0;  // upper limit for dt * max rate

    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (!(dt >= 0.0) || !std::isfinite(dt)) out.push_back("time step must be nonnegative");
        if (steps < 0) out.push_back("step count must be nonnegative");
        if (!(picard_tolerance > 0.0)) out.push_back("picard tolerance must be positive");
        if (picard_max_iterations < 1) out.push_back("picard iteration limit must be positive");
        if (truncation < 0) out.push_back("truncation index must be nonnegative");
        if (!(rate_cap > 0.0)) out.push_back("rate cap must be positive");
        return out;
    }
};

inline double psi(double z) { return z < 1e-8 ? 1.0 - 0.5 * z : -std::expm1(-z) / z; }

// Per-node quantity s = |xi|^2 + I entering the positivity floor.
inline double floor_exponent_base(const DistributionGrid& f, int a, std::size_t v, int k) {
    return norm2(f.grid().velocity.velocity(v)) + f.internal_at(a, k);
}

// Lower bound amplitude * exp(-c s) maintained along the run.
struct PositivityFloor {
    double amplitude = 0.0;
    double rate = 0.5;

    static PositivityFloor start(const DistributionGrid& f0, double rate0 = 0.5) {
        PositivityFloor p;
        p.rate = rate0;
        p.amplitude = std::numeric_limits<double>::infinity();
        const auto& vg = f0.grid().velocity;
        for (int a = 0; a < f0.species(); ++a) {
            const int nk = f0.internal_count(a);
            for (std::size_t c = 0; c < f0.cells(); ++c)
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k)
                        p.amplitude = std::min(p.amplitude, f0.values(a)[f0.index(a, c, v, k)] *
                                                                std::exp(rate0 * floor_exponent_base(f0, a, v, k)));
        }
        return p;
    }

    double value(const DistributionGrid& f, int a, std::size_t v, int k) const {
        return amplitude * std::exp(-rate * floor_exponent_base(f, a, v, k));
    }

    double min_ratio(const DistributionGrid& f) const {
        double r = std::numeric_limits<double>::infinity();
        const auto& vg = f.grid().velocity;
        for (int a = 0; a < f.species(); ++a) {
            const int nk = f.internal_count(a);
            for (std::size_t c = 0; c < f.cells(); ++c)
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k) {
                        const double fl = value(f, a, v, k);
                        r = std::min(r, fl > 0.0 ? f.values(a)[f.index(a, c, v, k)] / fl : std::numeric_limits<double>::infinity());
                    }
        }
        return r;
    }
};

struct StepReport {
    OperatorOutput operator_output;  // normalized, at the last evaluation
    int picard_iterations = 0;
    double picard_residual = 0.0;
    double max_rate_number = 0.0;  // dt * max rate
    double decay_bound = 0.0;      // max over nodes of (dt L - log correction) / s
    int correction_iterations = 0;
    double correction_residual = 0.0;
};

namespace detail {

inline void check_finite_nonnegative(const DistributionGrid& f, const char* where) {
    for (int a = 0; a < f.species(); ++a)
        for (std::size_t i = 0; i < f.values(a).size(); ++i) {
            const double x = f.values(a)[i];
            if (!std::isfinite(x) || x < 0.0) {
                std::ostringstream msg;
                msg << where << ": species " << a << " node " << i << " has value " << x;
                throw std::runtime_error(msg.str());
            }
        }
}

// f * exp(-dt L) + dt Q+ psi(dt L), nodewise.
inline DistributionGrid mild_update(const DistributionGrid& f, const OperatorOutput& out, double dt) {
    DistributionGrid next = f;
    for (int a = 0; a < f.species(); ++a) {
        auto& vals = next.values(a);
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double z = dt * out.rate[a][i];
            vals[i] = f.values(a)[i] * std::exp(-z) + dt * out.gain[a][i] * psi(z);
        }
    }
    next.set_time(f.time() + dt);
    return next;
}

// Multiplies f by exp(w sum_m c_m phi_m) per cell, w = 1 - exp(-dt L), with
// c from Newton's method so the invariants of each cell match `target`.
inline std::pair<int, double> restore_invariants(DistributionGrid& f, const OperatorOutput& out, double dt,
                                                 const std::vector<std::vector<double>>& target,
                                                 std::vector<std::vector<double>>& log_factor) {
    const auto basis = collision_invariant_basis(f.table());
    const int nb = static_cast<int>(basis.size());
    const auto& vg = f.grid().velocity;
    const int s = f.species();
    int worst_iters = 0;
    double worst_res = 0.0;
    log_factor.assign(s, {});
    for (int a = 0; a < s; ++a) log_factor[a].assign(f.species_size(a), 0.0);
    std::vector<std::vector<double>> phi(s);
    for (int a = 0; a < s; ++a) {
        const int nk = f.internal_count(a);
        phi[a].resize(vg.size() * nk * nb);
        for (std::size_t v = 0; v < vg.size(); ++v)
            for (int k = 0; k < nk; ++k) {
                Microstate z{a, vg.velocity(v), f.internal_at(a, k)};
                for (int m = 0; m < nb; ++m) phi[a][(v * nk + k) * nb + m] = basis[m](f.table(), z);
            }
    }
    for (std::size_t c = 0; c < f.cells(); ++c) {
        Eigen::VectorXd coef = Eigen::VectorXd::Zero(nb);
        double scale = 0.0;
        for (int m = 0; m < nb; ++m) scale = std::max(scale, std::abs(target[c][m]));
        int it = 0;
        double res_norm = 0.0;
        for (; it < 30; ++it) {
            Eigen::VectorXd res = Eigen::VectorXd::Zero(nb);
            Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nb, nb);
            for (int a = 0; a < s; ++a) {
                const int nk = f.internal_count(a);
                for (std::size_t v = 0; v < vg.size(); ++v)
                    for (int k = 0; k < nk; ++k) {
                        const std::size_t i = f.index(a, c, v, k);
                        const double* p = &phi[a][(v * nk + k) * nb];
                        const double w = -std::expm1(-dt * out.rate[a][i]);
                        double e = 0.0;
                        for (int m = 0; m < nb; ++m) e += coef(m) * p[m];
                        const double val = f.values(a)[i] * std::exp(w * e) * f.node_volume(a, k);
                        for (int m = 0; m < nb; ++m) {
                            res(m) += val * p[m];
                            for (int n2 = 0; n2 < nb; ++n2) J(m, n2) += val * w * p[m] * p[n2];
                        }
                    }
            }
            for (int m = 0; m < nb; ++m) res(m) -= target[c][m];
            res_norm = res.cwiseAbs().maxCoeff();
            if (res_norm <= 1e-15 * scale) break;
            const Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(res);
            if (!step.allFinite()) break;
            coef -= step;
            if (step.cwiseAbs().maxCoeff() <= 1e-17 * (1.0 + coef.cwiseAbs().maxCoeff())) {
                ++it;
                break;
            }
        }
        worst_iters = std::max(worst_iters, it);
        worst_res = std::max(worst_res, scale > 0.0 ? res_norm / scale : res_norm);
        for (int a = 0; a < s; ++a) {
            const int nk = f.internal_count(a);
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) {
                    const std::size_t i = f.index(a, c, v, k);
                    const double* p = &phi[a][(v * nk + k) * nb];
                    const double w = -std::expm1(-dt * out.rate[a][i]);
                    double e = 0.0;
                    for (int m = 0; m < nb; ++m) e += coef(m) * p[m];
                    log_factor[a][i] = w * e;
                    f.values(a)[i] *= std::exp(w * e);
                }
        }
    }
    return {worst_iters, worst_res};
}

}  // namespace detail

// Invariant totals per spatial cell, [cell][basis function].
inline std::vector<std::vector<double>> cell_invariants(const DistributionGrid& f) {
    const auto basis = collision_invariant_basis(f.table());
    const auto& vg = f.grid().velocity;
    std::vector<std::vector<double>> out(f.cells(), std::vector<double>(basis.size(), 0.0));
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) {
                    const double w = f.values(a)[f.index(a, c, v, k)] * f.node_volume(a, k);
                    Microstate z{a, vg.velocity(v), f.internal_at(a, k)};
                    for (std::size_t m = 0; m < basis.size(); ++m) out[c][m] += w * basis[m](f.table(), z);
                }
    }
    return out;
}

// One frozen-coefficient step of the mild form. With the projection flag
// the invariants of every cell are restored afterwards; with transport the
// collision step is followed by free streaming over dt.
inline DistributionGrid exponential_step(const CollisionOperator& op, const DistributionGrid& f, const TimeStepConfig& cfg,
                                         std::uint64_t step_index = 0, StepReport* report = nullptr) {
    auto p = cfg.problems();
    if (!p.empty()) throw std::invalid_argument(p.front());
    if (cfg.truncation != op.model().truncation) throw std::invalid_argument("truncation index differs from the kernel model");
    detail::check_finite_nonnegative(f, "step input");
    StepReport local;
    StepReport& rep = report ? *report : local;
    EvalOptions opt;
    opt.step = step_index;
    opt.reference = &f;
    const auto target = cfg.project ? cell_invariants(f) : std::vector<std::vector<double>>{};

    auto evaluate_at = [&](const DistributionGrid& g) {
        OperatorOutput out = op.evaluate(g, opt);
        apply_normalization(out, normalization(g, cfg.truncation));
        return out;
    };

    OperatorOutput out = evaluate_at(f);
    DistributionGrid next = detail::mild_update(f, out, cfg.dt);
    rep.picard_iterations = 0;
    if (cfg.scheme == TimeStepConfig::Scheme::Picard && cfg.dt > 0.0) {
        const double base = std::max(l1_norm(f), std::numeric_limits<double>::min());
        bool converged = false;
        for (int it = 1; it <= cfg.picard_max_iterations; ++it) {
            DistributionGrid mid = f;
            for (int a = 0; a < f.species(); ++a)
                for (std::size_t i = 0; i < mid.values(a).size(); ++i)
                    mid.values(a)[i] = 0.5 * (f.values(a)[i] + next.values(a)[i]);
            out = evaluate_at(mid);
            DistributionGrid candidate = detail::mild_update(f, out, cfg.dt);
            double diff = 0.0;
            for (int a = 0; a < f.species(); ++a) {
                const int nk = f.internal_count(a);
                for (std::size_t i = 0; i < candidate.values(a).size(); ++i)
                    diff += std::abs(candidate.values(a)[i] - next.values(a)[i]) * f.node_volume(a, static_cast<int>(i % nk));
            }
            next = std::move(candidate);
            rep.picard_iterations = it;
            rep.picard_residual = diff / base;
            if (rep.picard_residual <= cfg.picard_tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream msg;
            msg << "Picard iteration did not converge: residual " << rep.picard_residual << " after "
                << cfg.picard_max_iterations << " iterations";
            throw std::runtime_error(msg.str());
        }
    }

    rep.max_rate_number = cfg.dt * out.max_rate;
    if (rep.max_rate_number > cfg.rate_cap) {
        std::ostringstream msg;
        msg << "time step too large: dt * max rate = " << rep.max_rate_number << " exceeds cap " << cfg.rate_cap;
        throw std::runtime_error(msg.str());
    }

    std::vector<std::vector<double>> log_factor;
    if (cfg.project && cfg.dt > 0.0) {
        auto [iters, res] = detail::restore_invariants(next, out, cfg.dt, target, log_factor);
        rep.correction_iterations = iters;
        rep.correction_residual = res;
    }

    rep.decay_bound = 0.0;
    const auto& vg = f.grid().velocity;
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        for (std::size_t c = 0; c < f.cells(); ++c)
            for (std::size_t v = 0; v < vg.size(); ++v)
                for (int k = 0; k < nk; ++k) {
                    const std::size_t i = f.index(a, c, v, k);
                    double loss_exp = cfg.dt * out.rate[a][i];
                    if (!log_factor.empty()) loss_exp -= log_factor[a][i];
                    if (loss_exp > 0.0) rep.decay_bound = std::max(rep.decay_bound, loss_exp / floor_exponent_base(f, a, v, k));
                }
    }

    if (cfg.transport) free_stream(next, cfg.dt);
    next.set_time(f.time() + cfg.dt);
    detail::check_finite_nonnegative(next, "step output");
    rep.operator_output = std::move(out);
    return next;
}

struct TrajectoryPoint {
    int step = 0;
    double time = 0.0;
    MomentReport moments;
    double entropy = 0.0;
    std::vector<double> dissipation;  // integral of e_a per species at the step start
    double dissipation_sigma = 0.0;
    double production = 0.0;  // W at the step start
    double production_sigma = 0.0;
    double floor_ratio = 0.0;
    double leak = 0.0;             // cumulative dt * (suppressed collision rate + clamped gain)
    double entropy_step_bound = 0.0;  // tolerance applied to H(t) - H(t - dt)
    int picard_iterations = 0;
    std::vector<double> invariants;  // totals over all cells
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    std::vector<DistributionGrid> states;  // kept when requested
    DistributionGrid final_state;
    PositivityFloor floor;
    std::string config_echo;
};

struct RunOptions {
    bool keep_states = false;
    int state_every = 0;
    bool check_entropy = true;
    bool check_bounds = true;
};

inline std::vector<double> total_invariants(const DistributionGrid& f) {
    const auto per_cell = cell_invariants(f);
    std::vector<double> out(per_cell.empty() ? 0 : per_cell[0].size(), 0.0);
    for (const auto& c : per_cell)
        for (std::size_t m = 0; m < c.size(); ++m) out[m] += c[m];
    return out;
}

namespace detail {

inline double weighted_transport_norm(const DistributionGrid& f, double t, bool initial) {
    const auto& g = f.grid();
    double s = 0.0;
    for (int a = 0; a < f.species(); ++a) {
        const int nk = f.internal_count(a);
        for (std::size_t c = 0; c < f.cells(); ++c) {
            const double x2 = g.spatial.dim ? norm2(g.spatial.position(c)) : 0.0;
            for (std::size_t v = 0; v < g.velocity.size(); ++v) {
                const double xi2 = norm2(g.velocity.velocity(v));
                const double w = initial ? 1.0 + 2.0 * x2 + (2.0 * t * t + 1.0) * xi2 : 1.0 + x2 + xi2;
                for (int k = 0; k < nk; ++k) s += w * f.values(a)[f.index(a, c, v, k)] * f.node_volume(a, k);
            }
        }
    }
    return s;
}

}  // namespace detail

// Advances f0 by cfg.steps steps, recording diagnostics at every step.
inline Trajectory picard_solve(const CollisionOperator& op, const DistributionGrid& f0, const TimeStepConfig& cfg,
                               const RunOptions& ropt = {}) {
    auto p = cfg.problems();
    if (!p.empty()) throw std::invalid_argument(p.front());
    detail::check_finite_nonnegative(f0, "initial state");
    Trajectory tr;
    tr.floor = PositivityFloor::start(f0);
    DistributionGrid f = f0;
    const double mass0 = l1_norm(f0);
    double leak = 0.0;

    auto record = [&](int step, const OperatorOutput* out, double bound, int picard) {
        TrajectoryPoint pt;
        pt.step = step;
        pt.time = f.time();
        pt.moments = moments(f);
        pt.entropy = pt.moments.entropy;
        pt.floor_ratio = tr.floor.min_ratio(f);
        pt.leak = leak;
        pt.entropy_step_bound = bound;
        pt.picard_iterations = picard;
        pt.invariants = total_invariants(f);
        if (out) {
            double var = 0.0;
            for (int a = 0; a < f.species(); ++a) {
                auto d = entropy_dissipation(*out, f, a);
                pt.dissipation.push_back(d.integral);
                var += d.sigma * d.sigma;
            }
            pt.dissipation_sigma = std::sqrt(var);
        } else {
            pt.dissipation.assign(f.species(), 0.0);
        }
        tr.points.push_back(std::move(pt));
    };

    record(0, nullptr, 0.0, 0);
    if (ropt.keep_states) tr.states.push_back(f);
    for (int step = 1; step <= cfg.steps && cfg.dt > 0.0; ++step) {
        StepReport rep;
        DistributionGrid next = exponential_step(op, f, cfg, static_cast<std::uint64_t>(step), &rep);
        const OperatorOutput& out = rep.operator_output;
        // Entropy step tolerance: second-order Taylor term plus the
        // sampling error of W over the step.
        const auto w = entropy_production(out, f);
        double curvature = 0.0;
        for (int a = 0; a < f.species(); ++a) {
            const int nk = f.internal_count(a);
            for (std::size_t i = 0; i < f.values(a).size(); ++i) {
                const double d = next.values(a)[i] - f.values(a)[i];
                const double lo = std::min(next.values(a)[i], f.values(a)[i]);
                if (lo > 0.0) curvature += 0.5 * d * d / lo * f.node_volume(a, static_cast<int>(i % nk));
            }
        }
        const double h_scale = std::abs(tr.points.back().entropy) + 1.0;
        const double bound = curvature + cfg.dt * 3.0 * w.sigma + 1e-13 * h_scale;
        leak += cfg.dt * (out.dropped_rate + out.clamp_total);
        tr.floor.rate += rep.decay_bound * (1.0 + 1e-12) + 1e-15;
        // Dissipation is reported for the state the step started from.
        auto& prev = tr.points.back();
        double var = 0.0;
        prev.dissipation.clear();
        for (int a = 0; a < f.species(); ++a) {
            auto d = entropy_dissipation(out, f, a);
            prev.dissipation.push_back(d.integral);
            var += d.sigma * d.sigma;
        }
        prev.dissipation_sigma = std::sqrt(var);
        prev.production = w.value;
        prev.production_sigma = w.sigma;
        f = std::move(next);
        record(step, nullptr, bound, rep.picard_iterations);
        if (ropt.check_bounds) {
            if (cfg.transport) {
                const double now = detail::weighted_transport_norm(f, f.time(), false);
                const double limit = detail::weighted_transport_norm(f0, f.time(), true);
                if (now > limit * (1.0 + 1e-9)) throw std::runtime_error("weighted norm exceeds its transport bound");
            } else if (!(l1_norm(f) <= 2.0 * mass0 + 1e-300)) {
                throw std::runtime_error("mass norm is unbounded");
            }
        }
        if (ropt.keep_states && (ropt.state_every <= 1 || step % ropt.state_every == 0)) tr.states.push_back(f);
    }
    tr.final_state = f;
    return tr;
}

// Largest entropy increase beyond the per-step tolerance (<= 0 when H is
// nonincreasing within tolerance).
inline double entropy_excess(const Trajectory& tr) {
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < tr.points.size(); ++k)
        worst = std::max(worst, tr.points[k].entropy - tr.points[k - 1].entropy - tr.points[k].entropy_step_bound);
    return tr.points.size() > 1 ? worst : 0.0;
}

inline double min_floor_ratio(const Trajectory& tr) {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& p : tr.points) r = std::min(r, p.floor_ratio);
    return r;
}

// Largest relative drift of the summed invariants against the first point.
// Momentum components are measured against sqrt(mass * energy).
inline double invariant_drift(const Trajectory& tr, const SpeciesTable& table) {
    if (tr.points.empty()) return 0.0;
    const auto basis = collision_invariant_basis(table);
    const auto& first = tr.points.front();
    const double momentum_scale = std::sqrt(first.moments.total.mass * 2.0 * first.moments.total.energy());
    double worst = 0.0;
    for (const auto& p : tr.points)
        for (std::size_t m = 0; m < basis.size(); ++m) {
            const double ref = basis[m].kind == InvariantFunctional::Kind::Momentum ? momentum_scale : std::abs(first.invariants[m]);
            if (ref > 0.0) worst = std::max(worst, std::abs(p.invariants[m] - first.invariants[m]) / ref);
        }
    return worst;
}

}  // namespace polykin
