#ifndef SWBSDE_EVALUATION_HPP
#define SWBSDE_EVALUATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "lattice.hpp"
#include "problem.hpp"
#include "rng.hpp"

namespace swbsde {

enum class EstimatorMethod {
    reweighted,  ///< reference-law paths weighted by the likelihood ratio L_T^a
    direct,      ///< paths drawn with the switched jump probabilities
};

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
};

/// First grid index whose time is >= t (times within 1e-12 dt of a grid point snap onto it).
inline int grid_index_at_or_after(const ChainGrid& g, double t) {
    const double x = t / g.dt;
    const double r = std::round(x);
    if (std::abs(x - r) <= 1e-12 * std::max(1.0, std::abs(x))) return static_cast<int>(r);
    return static_cast<int>(std::ceil(x));
}

/// Mode in force on the cell (t_k, t_{k+1}]: every switch with theta <= t_k has taken effect.
inline std::size_t mode_in_cell(const Strategy& s, const ChainGrid& g, int k) {
    const double t = g.times[static_cast<std::size_t>(k)];
    return mode_process(s, std::max(s.start_time, std::nextafter(t, std::numeric_limits<double>::infinity())));
}

/**
 * Pathwise payoff of strategy `s` on a chain path:
 *   xi^{a_T} + sum_k f^{a_k} dA_k + sum_k g^{a_k} dt - sum of switching costs,
 * with f, g sampled at the left end of each cell and a_T the mode after every switch.
 * Cells before the strategy start contribute nothing.
 */
inline double reward_on_path(const SwitchingProblem& p, const ChainGrid& g, const Strategy& s,
                             const PathSample& path) {
    if (path.steps() != g.n_steps) throw std::invalid_argument("reward_on_path: path length differs from chain");
    const auto nodes = path.nodes(g);
    const int k0 = grid_index_at_or_after(g, s.start_time);
    double payoff = 0.0;
    for (int k = std::max(k0, 0); k < g.n_steps; ++k) {
        const auto& mode = p.modes[mode_in_cell(s, g, k)];
        const State st = g.state(nodes[static_cast<std::size_t>(k)]);
        payoff += mode.running_f(st) * g.delta_A[static_cast<std::size_t>(k)] + mode.running_g(st) * g.dt;
    }
    payoff += p.modes[s.final_mode()].terminal(g.state(nodes.back()));
    return payoff - cumulated_cost(s, p, p.horizon);
}

/// Likelihood ratio L_T^a of a chain path under the switched kernel of `s`.
inline double path_likelihood_ratio(const SwitchingProblem& p, const ChainGrid& g, const Strategy& s,
                                    const PathSample& path) {
    double weight = 1.0;
    std::vector<double> rho(g.n_marks);
    for (int k = 0; k < g.n_steps; ++k) {
        const auto& ker = p.modes[mode_in_cell(s, g, k)].kernel;
        for (std::size_t m = 0; m < g.n_marks; ++m) rho[m] = ker.value(g.times[static_cast<std::size_t>(k)], m);
        weight *= step_likelihood_ratio(g, k, rho, path.jump[static_cast<std::size_t>(k)]);
        if (weight == 0.0) break;
    }
    return weight;
}

/// Per-mode tables rho^i(t_k, m).
inline std::vector<std::vector<std::vector<double>>> mode_kernel_tables(const SwitchingProblem& p, const ChainGrid& g) {
    std::vector<std::vector<std::vector<double>>> out;
    out.reserve(p.n_modes());
    for (const auto& mode : p.modes) out.push_back(g.kernel_table(mode.kernel));
    return out;
}

/// Outcome of one controlled path.
struct ControlledPath {
    PathSample path;
    Strategy strategy;
    double payoff = 0.0;
};

/**
 * Simulate one chain path while a controller decides switches at each grid
 * time. `decide(k, node, mode, out)` appends the switches taken at t_k.
 * Under `reweighted` the path follows the reference law and `path.weight`
 * accumulates L^a; under `direct` jumps use the current mode's kernel.
 */
template <class Decide>
ControlledPath simulate_controlled(const SwitchingProblem& p, const ChainGrid& g,
                                   const std::vector<std::vector<std::vector<double>>>& tables,
                                   double start_time, std::size_t start_mode, Decide&& decide,
                                   EstimatorMethod method, StreamRng& rng) {
    ControlledPath out;
    out.strategy.start_time = start_time;
    out.strategy.start_mode = start_mode;
    out.path.brownian.reserve(static_cast<std::size_t>(g.n_steps));
    out.path.jump.reserve(static_cast<std::size_t>(g.n_steps));

    const std::vector<double> ones(g.n_marks, 1.0);
    const int k0 = grid_index_at_or_after(g, start_time);
    std::vector<Switch> taken;
    NodeState node{0, 0, 0};
    std::size_t mode = start_mode;
    double payoff = 0.0;
    for (int k = 0; k <= g.n_steps; ++k) {
        const bool active = k >= k0;
        if (active) {
            taken.clear();
            decide(k, node, mode, taken);
            for (const auto& sw : taken) {
                payoff -= p.costs(sw.time, mode, sw.mode);
                mode = sw.mode;
                out.strategy.switches.push_back(sw);
            }
        }
        if (k == g.n_steps) break;
        const auto& rho = tables[mode][static_cast<std::size_t>(k)];
        const State st = g.state(node);
        if (active) {
            payoff += p.modes[mode].running_f(st) * g.delta_A[static_cast<std::size_t>(k)] +
                      p.modes[mode].running_g(st) * g.dt;
        }
        int b = 0;
        int mark = -1;
        if (method == EstimatorMethod::direct) {
            std::tie(b, mark) = sample_step(g, k, rho, rng);
        } else {
            std::tie(b, mark) = sample_step(g, k, ones, rng);
            if (out.path.weight != 0.0) out.path.weight *= step_likelihood_ratio(g, k, rho, mark);
        }
        out.path.brownian.push_back(b);
        out.path.jump.push_back(mark);
        node = g.child(node, b > 0 ? 1 : 0, mark >= 0);
    }
    payoff += p.modes[mode].terminal(g.state(node));
    out.payoff = payoff;
    return out;
}

/// Open-loop controller: switches of `s` are acted on at the first grid time at or after theta.
inline auto open_loop_controller(const Strategy& s, const ChainGrid& g) {
    std::vector<int> at(s.switches.size());
    for (std::size_t i = 0; i < s.switches.size(); ++i) at[i] = grid_index_at_or_after(g, s.switches[i].time);
    return [&s, at](int k, const NodeState&, std::size_t, std::vector<Switch>& out) {
        for (std::size_t i = 0; i < s.switches.size(); ++i) {
            if (at[i] == k) out.push_back(s.switches[i]);
        }
    };
}

/**
 * Monte Carlo estimate of J(start_time, start_mode, a) = E^a[payoff].
 * Path i uses stream (seed, i), so results are reproducible for fixed inputs.
 */
template <class Decide>
Estimate estimate_controlled(const SwitchingProblem& p, const ChainGrid& g, double start_time, std::size_t start_mode,
                             Decide&& decide, std::size_t n_paths, std::uint64_t seed, EstimatorMethod method) {
    if (n_paths < 2) throw std::invalid_argument("estimate_J: n_paths must be >= 2");
    const auto tables = mode_kernel_tables(p, g);
    RunningStats stats;
    for (std::size_t i = 0; i < n_paths; ++i) {
        StreamRng rng(seed, i);
        const auto cp = simulate_controlled(p, g, tables, start_time, start_mode, decide, method, rng);
        stats.add(method == EstimatorMethod::reweighted ? cp.path.weight * cp.payoff : cp.payoff);
    }
    return Estimate{stats.mean(), stats.stderr_of_mean(), n_paths};
}

inline Estimate estimate_J(const SwitchingProblem& p, const ChainGrid& g, const Strategy& s, std::size_t n_paths,
                           std::uint64_t seed, EstimatorMethod method) {
    return estimate_controlled(p, g, s.start_time, s.start_mode, open_loop_controller(s, g), n_paths, seed, method);
}

/**
 * Random open-loop strategy: at each grid time before T, with probability
 * q_switch, switch to a uniformly chosen other mode.
 */
inline Strategy random_strategy(const SwitchingProblem& p, const ChainGrid& g, std::size_t start_mode, double q_switch,
                                std::uint64_t seed, std::uint64_t index) {
    StreamRng rng(seed, index);
    Strategy s;
    s.start_mode = start_mode;
    std::size_t mode = start_mode;
    const std::size_t m = p.n_modes();
    for (int k = 0; k < g.n_steps && m > 1; ++k) {
        if (rng.uniform() < q_switch) {
            auto pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(m - 1));
            pick = std::min(pick, m - 2);
            const std::size_t target = pick >= mode ? pick + 1 : pick;
            s.switches.push_back(Switch{g.times[static_cast<std::size_t>(k)], target});
            mode = target;
        }
    }
    return s;
}

}  // namespace swbsde

#endif  // SWBSDE_EVALUATION_HPP
