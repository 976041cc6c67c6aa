#ifndef SWBSDE_LATTICE_HPP
#define SWBSDE_LATTICE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpp.hpp"
#include "problem.hpp"
#include "rng.hpp"

namespace swbsde {

/// Node of the recombining chain: time index, Brownian coordinate in units of sqrt(dt), jump count.
struct NodeState {
    int k = 0;
    int w = 0;
    int n = 0;

    friend bool operator==(const NodeState&, const NodeState&) = default;
};

/**
 * Raised when some kernel would make the no-jump probability of a step
 * negative. Carries the worst (step, mode) pair and the smallest number of
 * steps that would bring sum_m rho p below one for the same intensity.
 */
class StabilityViolation : public std::runtime_error {
public:
    static constexpr std::size_t reference = std::numeric_limits<std::size_t>::max();

    StabilityViolation(int step, std::size_t mode, double value, int suggested_steps)
        : std::runtime_error(describe(step, mode, value, suggested_steps)),
          step(step), mode(mode), value(value), suggested_steps(suggested_steps) {}

    int step;
    std::size_t mode;   ///< `reference` when the reference law itself overflows
    double value;       ///< offending sum_m rho(t_k, m) p_{k,m}
    int suggested_steps;

private:
    static std::string describe(int step, std::size_t mode, double value, int suggested) {
        std::ostringstream os;
        os << "stability violation at step " << step << " for "
           << (mode == reference ? std::string("reference law") : "mode " + std::to_string(mode))
           << ": sum rho*p = " << value << " > 1; use n_steps >= " << suggested;
        return os.str();
    }
};

/**
 * Discrete-time chain approximating (W, p) under the reference measure.
 *
 * Each step moves the Brownian coordinate by +-sqrt(dt) with probability 1/2
 * and, independently, produces at most one jump of mark m with probability
 * p_{k,m} = phi(t_k, m) lambda(t_k) dt. Nodes recombine on (w, n); the jump
 * count saturates at `max_jumps`.
 */
class ChainGrid {
public:
    int n_steps = 0;
    double horizon = 0.0;
    double dt = 0.0;
    double sqrt_dt = 0.0;
    int max_jumps = 0;
    std::size_t n_marks = 0;

    std::vector<double> times;                    // t_0 .. t_N
    std::vector<double> lambda;                   // lambda(t_k), k < N
    std::vector<double> delta_A;                  // lambda(t_k) dt
    std::vector<double> cumulative_A;             // A_{t_k}, k <= N
    std::vector<std::vector<double>> phi;         // phi(t_k, m)
    std::vector<std::vector<double>> jump_probs;  // p_{k,m}
    std::vector<double> no_jump_prob;             // 1 - sum_m p_{k,m}

    int jump_levels(int k) const { return std::min(k, max_jumps) + 1; }
    std::size_t slice_size(int k) const {
        return static_cast<std::size_t>(k + 1) * static_cast<std::size_t>(jump_levels(k));
    }
    std::size_t total_nodes() const {
        std::size_t s = 0;
        for (int k = 0; k <= n_steps; ++k) s += slice_size(k);
        return s;
    }

    std::size_t index(const NodeState& s) const {
        const int j = (s.w + s.k) / 2;
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(jump_levels(s.k)) +
               static_cast<std::size_t>(s.n);
    }

    NodeState node(int k, std::size_t idx) const {
        const auto levels = static_cast<std::size_t>(jump_levels(k));
        const int j = static_cast<int>(idx / levels);
        return NodeState{k, 2 * j - k, static_cast<int>(idx % levels)};
    }

    State state(const NodeState& s) const {
        return State{times[static_cast<std::size_t>(s.k)], s.w * sqrt_dt, s.n};
    }

    /// Child after Brownian branch b (0 = down, 1 = up) and optional jump.
    NodeState child(const NodeState& s, int b, bool jump) const {
        return NodeState{s.k + 1, s.w + (b == 1 ? 1 : -1), jump ? std::min(s.n + 1, max_jumps) : s.n};
    }

    QuadratureGrid quadrature() const { return QuadratureGrid{horizon, static_cast<std::size_t>(n_steps)}; }

    /// rho(t_k, m) for every step k < N.
    std::vector<std::vector<double>> kernel_table(const KernelField& kernel) const {
        std::vector<std::vector<double>> out(static_cast<std::size_t>(n_steps), std::vector<double>(n_marks));
        for (int k = 0; k < n_steps; ++k) {
            for (std::size_t m = 0; m < n_marks; ++m) {
                out[static_cast<std::size_t>(k)][m] = kernel.value(times[static_cast<std::size_t>(k)], m);
            }
        }
        return out;
    }

    /// sum_m rho(t_k, m) p_{k,m}.
    double reweighted_jump_mass(int k, const std::vector<double>& rho_k) const {
        double s = 0.0;
        const auto& p = jump_probs[static_cast<std::size_t>(k)];
        for (std::size_t m = 0; m < n_marks; ++m) s += rho_k[m] * p[m];
        return s;
    }
};

/// One value per chain node, stored slice by slice.
class LatticeField {
public:
    LatticeField() = default;
    LatticeField(const ChainGrid& g, double fill = 0.0) : slices_(static_cast<std::size_t>(g.n_steps + 1)) {
        for (int k = 0; k <= g.n_steps; ++k) slices_[static_cast<std::size_t>(k)].assign(g.slice_size(k), fill);
    }

    std::vector<double>& slice(int k) { return slices_[static_cast<std::size_t>(k)]; }
    const std::vector<double>& slice(int k) const { return slices_[static_cast<std::size_t>(k)]; }

    double at(const ChainGrid& g, const NodeState& s) const { return slice(s.k)[g.index(s)]; }
    double& at(const ChainGrid& g, const NodeState& s) { return slice(s.k)[g.index(s)]; }

    double root() const { return slices_.front().front(); }
    int last_step() const { return static_cast<int>(slices_.size()) - 1; }

    /// sup over nodes of |a - b|.
    friend double sup_distance(const LatticeField& a, const LatticeField& b) {
        double d = 0.0;
        for (std::size_t k = 0; k < a.slices_.size(); ++k) {
            for (std::size_t i = 0; i < a.slices_[k].size(); ++i) {
                d = std::max(d, std::abs(a.slices_[k][i] - b.slices_[k][i]));
            }
        }
        return d;
    }

private:
    std::vector<std::vector<double>> slices_;
};

/**
 * Values at the 2 (M + 1) outcomes of one step: Brownian branch b in {0 = down, 1 = up},
 * combined with no jump or a jump of mark m.
 */
struct ChildValues {
    std::array<double, 2> no_jump{0.0, 0.0};
    std::array<std::vector<double>, 2> jump;

    explicit ChildValues(std::size_t n_marks = 0) {
        jump[0].assign(n_marks, 0.0);
        jump[1].assign(n_marks, 0.0);
    }
};

/// Child values of `node` read from `field`. Every mark leads to the same recombined child.
inline void gather_children(const LatticeField& field, const ChainGrid& g, const NodeState& node, ChildValues& out) {
    if (out.jump[0].size() != g.n_marks) out = ChildValues(g.n_marks);
    for (int b = 0; b < 2; ++b) {
        out.no_jump[static_cast<std::size_t>(b)] = field.at(g, g.child(node, b, false));
        const double j = field.at(g, g.child(node, b, true));
        std::fill(out.jump[static_cast<std::size_t>(b)].begin(), out.jump[static_cast<std::size_t>(b)].end(), j);
    }
}

/// Discrete martingale-representation coefficients of one step.
struct StepCoefficients {
    double expectation = 0.0;
    double z = 0.0;
    std::vector<double> u;
    std::vector<double> jump_conditional;
    double no_jump_conditional = 0.0;
};

namespace detail {
inline void check_children(const ChildValues& v, const ChainGrid& g) {
    if (v.jump[0].size() != g.n_marks || v.jump[1].size() != g.n_marks) {
        throw std::invalid_argument("step_coefficients: expected " + std::to_string(g.n_marks) +
                                    " jump children per Brownian branch");
    }
    for (int b = 0; b < 2; ++b) {
        if (std::isnan(v.no_jump[static_cast<std::size_t>(b)])) {
            throw std::invalid_argument("step_coefficients: missing child value");
        }
        for (double x : v.jump[static_cast<std::size_t>(b)]) {
            if (std::isnan(x)) throw std::invalid_argument("step_coefficients: missing child value");
        }
    }
}
}  // namespace detail

/**
 * Reference-law expectation, z = E[next dW] / dt, and jump coefficients
 * u(m) = E[next | jump m] - E[next | no jump] (Brownian branch averaged out).
 * Missing children are passed as NaN and rejected.
 */
inline StepCoefficients step_coefficients(const ChildValues& v, const NodeState& node, const ChainGrid& g) {
    detail::check_children(v, g);
    const auto k = static_cast<std::size_t>(node.k);
    const auto& p = g.jump_probs[k];
    const double q = g.no_jump_prob[k];

    StepCoefficients c;
    c.u.resize(g.n_marks);
    c.jump_conditional.resize(g.n_marks);
    c.no_jump_conditional = 0.5 * (v.no_jump[0] + v.no_jump[1]);

    std::array<double, 2> branch{};
    for (std::size_t b = 0; b < 2; ++b) {
        double s = q * v.no_jump[b];
        for (std::size_t m = 0; m < g.n_marks; ++m) s += p[m] * v.jump[b][m];
        branch[b] = s;
    }
    c.expectation = 0.5 * (branch[0] + branch[1]);
    c.z = 0.5 * (branch[1] - branch[0]) * g.sqrt_dt / g.dt;
    for (std::size_t m = 0; m < g.n_marks; ++m) {
        c.jump_conditional[m] = 0.5 * (v.jump[0][m] + v.jump[1][m]);
        c.u[m] = c.jump_conditional[m] - c.no_jump_conditional;
    }
    return c;
}

/// Expectation under jump probabilities rho(t_k, m) p_{k,m}; `rho_k` holds rho(t_k, .).
inline double reweighted_expectation(const ChildValues& v, const NodeState& node, const ChainGrid& g,
                                     const std::vector<double>& rho_k) {
    detail::check_children(v, g);
    const auto k = static_cast<std::size_t>(node.k);
    const auto& p = g.jump_probs[k];
    const double mass = g.reweighted_jump_mass(node.k, rho_k);
    if (mass > 1.0 + 1e-12) {
        throw StabilityViolation(node.k, 0, mass, static_cast<int>(std::ceil(g.n_steps * mass)));
    }
    const double q = 1.0 - mass;
    double total = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
        double s = q * v.no_jump[b];
        for (std::size_t m = 0; m < g.n_marks; ++m) s += rho_k[m] * p[m] * v.jump[b][m];
        total += s;
    }
    return 0.5 * total;
}

inline double reweighted_expectation(const ChildValues& v, const NodeState& node, const ChainGrid& g,
                                     const KernelField& kernel) {
    std::vector<double> rho(g.n_marks);
    for (std::size_t m = 0; m < g.n_marks; ++m) rho[m] = kernel.value(g.times[static_cast<std::size_t>(node.k)], m);
    return reweighted_expectation(v, node, g, rho);
}

/**
 * Build the chain for a compensator on [0, horizon] and check that the
 * reference law and every kernel in `kernels` keep the no-jump probability
 * nonnegative.
 */
inline ChainGrid build_chain(const CompensatorSpec& comp, double horizon, int n_steps,
                             const std::vector<KernelField>& kernels, int max_jumps = -1) {
    if (n_steps < 1) throw std::invalid_argument("build_chain: n_steps must be >= 1");
    if (!(horizon > 0.0)) throw std::invalid_argument("build_chain: horizon must be positive");
    if (comp.n_marks() == 0) throw std::invalid_argument("build_chain: empty mark set");

    ChainGrid g;
    g.n_steps = n_steps;
    g.horizon = horizon;
    g.dt = horizon / n_steps;
    g.sqrt_dt = std::sqrt(g.dt);
    g.max_jumps = max_jumps < 0 ? n_steps : std::min(max_jumps, n_steps);
    g.n_marks = comp.n_marks();

    const auto N = static_cast<std::size_t>(n_steps);
    g.times.resize(N + 1);
    for (std::size_t k = 0; k <= N; ++k) g.times[k] = horizon * static_cast<double>(k) / n_steps;
    g.lambda.resize(N);
    g.delta_A.resize(N);
    g.cumulative_A.assign(N + 1, 0.0);
    g.phi.assign(N, std::vector<double>(g.n_marks));
    g.jump_probs.assign(N, std::vector<double>(g.n_marks));
    g.no_jump_prob.resize(N);

    for (std::size_t k = 0; k < N; ++k) {
        const double t = g.times[k];
        g.lambda[k] = comp.lambda(t);
        if (g.lambda[k] < 0.0) throw std::invalid_argument("build_chain: negative intensity");
        g.delta_A[k] = g.lambda[k] * g.dt;
        g.cumulative_A[k + 1] = g.cumulative_A[k] + g.delta_A[k];
        double mass = 0.0;
        for (std::size_t m = 0; m < g.n_marks; ++m) {
            g.phi[k][m] = comp.phi(t, m);
            if (g.phi[k][m] < 0.0) throw std::invalid_argument("build_chain: negative mark weight");
            g.jump_probs[k][m] = g.phi[k][m] * g.delta_A[k];
            mass += g.jump_probs[k][m];
        }
        g.no_jump_prob[k] = std::max(0.0, 1.0 - mass);
    }

    // Worst offender over the reference law and the mode kernels.
    int worst_k = -1;
    std::size_t worst_mode = 0;
    double worst = 1.0;
    for (std::size_t k = 0; k < N; ++k) {
        double raw = 0.0;
        for (double pm : g.jump_probs[k]) raw += pm;
        if (raw > worst + 1e-12) {
            worst = raw;
            worst_k = static_cast<int>(k);
            worst_mode = StabilityViolation::reference;
        }
        for (std::size_t i = 0; i < kernels.size(); ++i) {
            double mass = 0.0;
            for (std::size_t m = 0; m < g.n_marks; ++m) {
                const double r = kernels[i].value(g.times[k], m);
                mass += r * g.jump_probs[k][m];
            }
            if (mass > worst + 1e-12) {
                worst = mass;
                worst_k = static_cast<int>(k);
                worst_mode = i;
            }
        }
    }
    if (worst_k >= 0) {
        throw StabilityViolation(worst_k, worst_mode, worst, static_cast<int>(std::ceil(n_steps * worst - 1e-9)));
    }
    return g;
}

inline ChainGrid build_chain(const SwitchingProblem& p, int n_steps, int max_jumps = -1) {
    std::vector<KernelField> kernels;
    for (const auto& m : p.modes) kernels.push_back(m.kernel);
    return build_chain(p.compensator, p.horizon, n_steps, kernels, max_jumps);
}

/// Reference-law probability of every node (forward propagation from the root).
inline LatticeField node_probabilities(const ChainGrid& g) {
    LatticeField prob(g, 0.0);
    prob.slice(0)[0] = 1.0;
    for (int k = 0; k < g.n_steps; ++k) {
        const double jump = 1.0 - g.no_jump_prob[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const double pi = prob.slice(k)[i];
            if (pi == 0.0) continue;
            const NodeState s = g.node(k, i);
            for (int b = 0; b < 2; ++b) {
                prob.at(g, g.child(s, b, false)) += 0.5 * pi * g.no_jump_prob[static_cast<std::size_t>(k)];
                prob.at(g, g.child(s, b, true)) += 0.5 * pi * jump;
            }
        }
    }
    return prob;
}

/**
 * One trajectory of the chain: Brownian branch (+1 / -1) and jump mark
 * (or -1) per step, with the accumulated likelihood ratio against the
 * reference law.
 */
struct PathSample {
    std::vector<int> brownian;
    std::vector<int> jump;
    double weight = 1.0;

    int steps() const { return static_cast<int>(brownian.size()); }

    std::vector<NodeState> nodes(const ChainGrid& g) const {
        std::vector<NodeState> out;
        out.reserve(brownian.size() + 1);
        NodeState s{0, 0, 0};
        out.push_back(s);
        for (std::size_t k = 0; k < brownian.size(); ++k) {
            s = g.child(s, brownian[k] > 0 ? 1 : 0, jump[k] >= 0);
            out.push_back(s);
        }
        return out;
    }
};

/**
 * Draw one step outcome from node at step k with jump probabilities
 * rho_k(m) p_{k,m} and return (branch sign, mark or -1).
 */
inline std::pair<int, int> sample_step(const ChainGrid& g, int k, const std::vector<double>& rho_k, StreamRng& rng) {
    const int sign = rng.uniform() < 0.5 ? -1 : 1;
    const double u = rng.uniform();
    const auto& p = g.jump_probs[static_cast<std::size_t>(k)];
    double acc = 0.0;
    for (std::size_t m = 0; m < g.n_marks; ++m) {
        acc += rho_k[m] * p[m];
        if (u < acc) return {sign, static_cast<int>(m)};
    }
    return {sign, -1};
}

/// Likelihood ratio of one step outcome under kernel rho_k against the reference law.
inline double step_likelihood_ratio(const ChainGrid& g, int k, const std::vector<double>& rho_k, int mark) {
    if (mark >= 0) return rho_k[static_cast<std::size_t>(mark)];
    const double q = g.no_jump_prob[static_cast<std::size_t>(k)];
    return (1.0 - g.reweighted_jump_mass(k, rho_k)) / q;
}

/// Reference-law chain path (every kernel = 1); weight stays 1.
inline PathSample sample_reference_path(const ChainGrid& g, std::uint64_t seed, std::uint64_t index) {
    StreamRng rng(seed, index);
    const std::vector<double> ones(g.n_marks, 1.0);
    PathSample path;
    path.brownian.reserve(static_cast<std::size_t>(g.n_steps));
    path.jump.reserve(static_cast<std::size_t>(g.n_steps));
    for (int k = 0; k < g.n_steps; ++k) {
        const auto [b, m] = sample_step(g, k, ones, rng);
        path.brownian.push_back(b);
        path.jump.push_back(m);
    }
    return path;
}

/// Chain path converted to marked events stamped at the end of their step.
inline MarkedPath to_marked_path(const ChainGrid& g, const PathSample& path) {
    MarkedPath out;
    out.horizon = g.horizon;
    for (std::size_t k = 0; k < path.jump.size(); ++k) {
        if (path.jump[k] >= 0) out.events.push_back({g.times[k + 1], static_cast<std::size_t>(path.jump[k])});
    }
    return out;
}

}  // namespace swbsde

#endif  // SWBSDE_LATTICE_HPP
