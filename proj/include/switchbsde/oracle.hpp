#ifndef SWBSDE_ORACLE_HPP
#define SWBSDE_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "evaluation.hpp"
#include "lattice.hpp"
#include "problem.hpp"

namespace swbsde {

/**
 * Value function v(node, mode) of the switching problem on the chain and the
 * decision taken there: -1 to continue in the mode, otherwise the target mode.
 */
struct ValueTable {
    std::vector<LatticeField> v;
    std::vector<std::vector<std::vector<int>>> action;  // [mode][k][node]

    double at(const ChainGrid& g, std::size_t mode, const NodeState& s) const { return v[mode].at(g, s); }
    int action_at(const ChainGrid& g, std::size_t mode, const NodeState& s) const {
        return action[mode][static_cast<std::size_t>(s.k)][g.index(s)];
    }
};

/**
 * Bellman recursion with at most one switch per grid time:
 *   v(k, i) = max_j [ -C(t_k, i, j) + f^j dA_k + g^j dt + E^{rho^j}[ v(k+1, j) ] ],
 * v(N, i) = xi^i. Expectations use the reweighted jump probabilities directly.
 * Ties keep the current mode, then prefer the lowest index.
 */
inline ValueTable dp_value(const ChainGrid& g, const SwitchingProblem& p) {
    const std::size_t m = p.n_modes();
    const int N = g.n_steps;
    ValueTable t;
    t.v.assign(m, LatticeField(g, 0.0));
    t.action.assign(m, std::vector<std::vector<int>>(static_cast<std::size_t>(N + 1)));
    for (std::size_t i = 0; i < m; ++i) {
        for (int k = 0; k <= N; ++k) t.action[i][static_cast<std::size_t>(k)].assign(g.slice_size(k), -1);
    }

    for (std::size_t idx = 0; idx < g.slice_size(N); ++idx) {
        const State st = g.state(g.node(N, idx));
        for (std::size_t i = 0; i < m; ++i) t.v[i].slice(N)[idx] = p.modes[i].terminal(st);
    }

    const auto tables = mode_kernel_tables(p, g);
    ChildValues children(g.n_marks);
    std::vector<double> cont(m);
    for (int k = N - 1; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        const double tk = g.times[kk];
        for (std::size_t idx = 0; idx < g.slice_size(k); ++idx) {
            const NodeState s = g.node(k, idx);
            const State st = g.state(s);
            for (std::size_t j = 0; j < m; ++j) {
                gather_children(t.v[j], g, s, children);
                cont[j] = p.modes[j].running_f(st) * g.delta_A[kk] + p.modes[j].running_g(st) * g.dt +
                          reweighted_expectation(children, s, g, tables[j][kk]);
            }
            for (std::size_t i = 0; i < m; ++i) {
                double best = cont[i];
                int act = -1;
                for (std::size_t j = 0; j < m; ++j) {
                    if (j == i) continue;
                    const double cand = cont[j] - p.costs(tk, i, j);
                    if (cand > best) {
                        best = cand;
                        act = static_cast<int>(j);
                    }
                }
                t.v[i].slice(k)[idx] = best;
                t.action[i][kk][idx] = act;
            }
        }
    }
    return t;
}

class EnumerationTooLarge : public std::length_error {
public:
    using std::length_error::length_error;
};

struct EnumerationResult {
    double best_value = 0.0;              ///< sup over all history-dependent grid strategies within the budget
    double best_open_loop_value = 0.0;    ///< max over deterministic switching schedules
    Strategy best_strategy;               ///< schedule attaining best_open_loop_value
    std::size_t open_loop_count = 0;
};

namespace detail {

/// Outcome probabilities and child of every step outcome under kernel row rho.
struct Outcome {
    int b;
    int mark;
    double prob;
};

inline std::vector<Outcome> outcomes(const ChainGrid& g, int k, const std::vector<double>& rho) {
    std::vector<Outcome> out;
    const double q = 1.0 - g.reweighted_jump_mass(k, rho);
    for (int b = 0; b < 2; ++b) {
        out.push_back({b, -1, 0.5 * q});
        for (std::size_t mk = 0; mk < g.n_marks; ++mk) {
            out.push_back({b, static_cast<int>(mk), 0.5 * rho[mk] * g.jump_probs[static_cast<std::size_t>(k)][mk]});
        }
    }
    return out;
}

/**
 * Exhaustive search over the non-recombining tree. Returns table[mode][budget]
 * of the best value from this history when `budget` switches remain; any
 * number of switches may be taken at one grid time.
 */
class TreeSearch {
public:
    TreeSearch(const ChainGrid& g, const SwitchingProblem& p, int budget)
        : g_(g), p_(p), budget_(budget), tables_(mode_kernel_tables(p, g)) {}

    std::vector<std::vector<double>> value(const NodeState& s) const {
        const std::size_t m = p_.n_modes();
        const auto B = static_cast<std::size_t>(budget_ + 1);
        std::vector<std::vector<double>> stay(m, std::vector<double>(B, 0.0));
        const State st = g_.state(s);
        if (s.k == g_.n_steps) {
            for (std::size_t i = 0; i < m; ++i) std::fill(stay[i].begin(), stay[i].end(), p_.modes[i].terminal(st));
        } else {
            const auto kk = static_cast<std::size_t>(s.k);
            std::vector<std::vector<std::vector<double>>> child_values;
            // Children are shared across modes; only their probabilities depend on the kernel.
            std::vector<std::pair<int, int>> keys;
            for (int b = 0; b < 2; ++b) {
                keys.push_back({b, -1});
                for (std::size_t mk = 0; mk < g_.n_marks; ++mk) keys.push_back({b, static_cast<int>(mk)});
            }
            for (const auto& [b, mark] : keys) child_values.push_back(value(g_.child(s, b, mark >= 0)));
            for (std::size_t i = 0; i < m; ++i) {
                const auto outs = outcomes(g_, s.k, tables_[i][kk]);
                const double running = p_.modes[i].running_f(st) * g_.delta_A[kk] + p_.modes[i].running_g(st) * g_.dt;
                for (std::size_t r = 0; r < B; ++r) {
                    double e = 0.0;
                    for (std::size_t o = 0; o < outs.size(); ++o) e += outs[o].prob * child_values[o][i][r];
                    stay[i][r] = running + e;
                }
            }
        }
        // Switching closure at this time, budget increasing.
        std::vector<std::vector<double>> val = stay;
        const double tk = g_.times[static_cast<std::size_t>(s.k)];
        for (std::size_t r = 1; r < B; ++r) {
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    if (j == i) continue;
                    val[i][r] = std::max(val[i][r], val[j][r - 1] - p_.costs(tk, i, j));
                }
            }
        }
        return val;
    }

private:
    const ChainGrid& g_;
    const SwitchingProblem& p_;
    int budget_;
    std::vector<std::vector<std::vector<double>>> tables_;
};

/// Exact E^a[payoff] of an open-loop schedule by full-tree enumeration.
inline double tree_expectation(const ChainGrid& g, const SwitchingProblem& p,
                               const std::vector<std::vector<std::vector<double>>>& tables,
                               const std::vector<int>& switch_step, const Strategy& s, const NodeState& node,
                               std::size_t mode, std::size_t next_switch) {
    const double tk = g.times[static_cast<std::size_t>(node.k)];
    double acc = 0.0;
    while (next_switch < s.switches.size() && switch_step[next_switch] == node.k) {
        acc -= p.costs(tk, mode, s.switches[next_switch].mode);
        mode = s.switches[next_switch].mode;
        ++next_switch;
    }
    const State st = g.state(node);
    if (node.k == g.n_steps) return acc + p.modes[mode].terminal(st);
    const auto kk = static_cast<std::size_t>(node.k);
    acc += p.modes[mode].running_f(st) * g.delta_A[kk] + p.modes[mode].running_g(st) * g.dt;
    for (const auto& o : outcomes(g, node.k, tables[mode][kk])) {
        if (o.prob == 0.0) continue;
        acc += o.prob *
               tree_expectation(g, p, tables, switch_step, s, g.child(node, o.b, o.mark >= 0), mode, next_switch);
    }
    return acc;
}

}  // namespace detail

/**
 * Brute-force oracle on tiny chains. The history-dependent search realizes the
 * supremum over every grid strategy with at most `max_switches` switches; the
 * open-loop pass enumerates every deterministic schedule (one switch per grid
 * time, times t_0 .. t_N) and prices it by full-tree expectation.
 */
inline EnumerationResult enumerate_strategies(const ChainGrid& g, const SwitchingProblem& p, int max_switches,
                                              std::size_t start_mode = 0) {
    const std::size_t m = p.n_modes();
    const double leaves = std::pow(2.0 * static_cast<double>(g.n_marks + 1), g.n_steps);
    if (g.n_steps > 8 || m > 3 || max_switches < 0 || max_switches > g.n_steps + 1 || leaves > 2e6) {
        throw EnumerationTooLarge("enumerate_strategies: instance too large (N = " + std::to_string(g.n_steps) +
                                  ", m = " + std::to_string(m) + ", marks = " + std::to_string(g.n_marks) + ")");
    }
    double schedules = 0.0;
    for (int s = 0; s <= max_switches; ++s) {
        double choose = 1.0;
        for (int q = 0; q < s; ++q) choose = choose * (g.n_steps + 1 - q) / (q + 1);
        schedules += choose * std::pow(static_cast<double>(m - 1), s);
    }
    if (schedules * leaves > 5e8) {
        throw EnumerationTooLarge("enumerate_strategies: " + std::to_string(schedules) + " schedules exceed the budget");
    }

    EnumerationResult res;
    detail::TreeSearch search(g, p, max_switches);
    res.best_value = search.value(NodeState{0, 0, 0})[start_mode][static_cast<std::size_t>(max_switches)];

    const auto tables = mode_kernel_tables(p, g);
    res.best_open_loop_value = -std::numeric_limits<double>::infinity();
    // Depth-first over (step, mode, switches used).
    Strategy current;
    current.start_mode = start_mode;
    std::vector<int> steps;
    auto visit = [&](auto&& self, int from_step, std::size_t mode) -> void {
        const double v = detail::tree_expectation(g, p, tables, steps, current, NodeState{0, 0, 0}, start_mode, 0);
        ++res.open_loop_count;
        if (v > res.best_open_loop_value) {
            res.best_open_loop_value = v;
            res.best_strategy = current;
        }
        if (static_cast<int>(current.switches.size()) >= max_switches) return;
        for (int k = from_step; k <= g.n_steps; ++k) {
            for (std::size_t j = 0; j < m; ++j) {
                if (j == mode) continue;
                current.switches.push_back(Switch{g.times[static_cast<std::size_t>(k)], j});
                steps.push_back(k);
                self(self, k + 1, j);
                current.switches.pop_back();
                steps.pop_back();
            }
        }
    };
    visit(visit, 0, start_mode);
    return res;
}

}  // namespace swbsde

#endif  // SWBSDE_ORACLE_HPP
