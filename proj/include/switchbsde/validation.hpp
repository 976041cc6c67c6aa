#ifndef SWBSDE_VALIDATION_HPP
#define SWBSDE_VALIDATION_HPP

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "lattice.hpp"
#include "problem.hpp"

namespace swbsde {

enum class ViolationKind {
    MarkWeights,            // phi(t, .) is not a probability
    IntensityBound,         // lambda(t) outside [0, lambda_bound]
    KernelRange,            // rho outside [0, bound]
    KernelExponent,         // eta <= 3 + bound^4
    SelfCost,               // C(t, i, i) != 0
    NegativeCost,           // C(t, i, j) < 0
    TriangleSlack,          // C(i,j) + C(j,l) - C(i,l) <= 0
    TerminalConsistency,    // xi^i < xi^j - C(T, i, j)
    NormWeight,             // beta <= M'^2
    NonFinite,              // data value not finite on a chain state
    StrategyOrder,          // switch times decreasing or before start
    StrategyTarget,         // self-switch or unknown mode
    SimultaneousSwitch,     // warning only
};

inline const char* to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::MarkWeights: return "mark_weights";
        case ViolationKind::IntensityBound: return "intensity_bound";
        case ViolationKind::KernelRange: return "kernel_range";
        case ViolationKind::KernelExponent: return "kernel_exponent";
        case ViolationKind::SelfCost: return "self_cost";
        case ViolationKind::NegativeCost: return "negative_cost";
        case ViolationKind::TriangleSlack: return "triangle_slack";
        case ViolationKind::TerminalConsistency: return "terminal_consistency";
        case ViolationKind::NormWeight: return "norm_weight";
        case ViolationKind::NonFinite: return "non_finite";
        case ViolationKind::StrategyOrder: return "strategy_order";
        case ViolationKind::StrategyTarget: return "strategy_target";
        case ViolationKind::SimultaneousSwitch: return "simultaneous_switch";
    }
    return "unknown";
}

struct Violation {
    ViolationKind kind;
    int step = -1;     ///< time index on the chain, -1 when not time-specific
    int i = -1;
    int j = -1;
    int l = -1;
    double value = 0.0;
    bool warning = false;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const {
        for (const auto& v : violations) {
            if (!v.warning) return false;
        }
        return true;
    }
    bool empty() const { return violations.empty(); }

    std::size_t count(ViolationKind k) const {
        std::size_t c = 0;
        for (const auto& v : violations) c += v.kind == k ? 1 : 0;
        return c;
    }

    void add(ViolationKind kind, int step, int i, int j, int l, double value, std::string msg, bool warning = false) {
        violations.push_back(Violation{kind, step, i, j, l, value, warning, std::move(msg)});
    }
};

/**
 * Check the standing assumptions on the grid times and states of `grid`:
 * kernel bounds and exponent, mark probabilities, costs (zero diagonal,
 * nonnegativity, strict triangle slack), terminal consistency, beta > M'^2.
 * Every violation is listed once per offending location.
 */
inline ValidationReport validate_problem(const SwitchingProblem& p, const ChainGrid& grid) {
    ValidationReport r;
    const std::size_t m = p.n_modes();
    const auto& comp = p.compensator;

    auto fmt = [](auto&&... parts) {
        std::ostringstream os;
        (os << ... << parts);
        return os.str();
    };

    if (!(p.beta > p.m_prime() * p.m_prime())) {
        r.add(ViolationKind::NormWeight, -1, -1, -1, -1, p.beta,
              fmt("beta = ", p.beta, " must exceed M'^2 = ", p.m_prime() * p.m_prime()));
    }

    for (std::size_t i = 0; i < m; ++i) {
        const auto& ker = p.modes[i].kernel;
        if (!ker.eta_admissible()) {
            r.add(ViolationKind::KernelExponent, -1, static_cast<int>(i), -1, -1, ker.eta,
                  fmt("mode ", i, ": eta = ", ker.eta, " must exceed 3 + M^4 = ", 3.0 + std::pow(ker.bound, 4)));
        }
    }

    for (int k = 0; k <= grid.n_steps; ++k) {
        const double t = grid.times[static_cast<std::size_t>(k)];

        const double lam = comp.lambda(t);
        if (lam < 0.0 || lam > comp.lambda_bound * (1.0 + 1e-12)) {
            r.add(ViolationKind::IntensityBound, k, -1, -1, -1, lam,
                  fmt("lambda(", t, ") = ", lam, " outside [0, ", comp.lambda_bound, "]"));
        }
        double total = 0.0;
        bool negative = false;
        for (std::size_t e = 0; e < comp.n_marks(); ++e) {
            const double w = comp.phi(t, e);
            negative = negative || w < 0.0;
            total += w;
        }
        if (negative || std::abs(total - 1.0) > 1e-12) {
            r.add(ViolationKind::MarkWeights, k, -1, -1, -1, total,
                  fmt("phi(", t, ", .) sums to ", total, negative ? " with negative entries" : ""));
        }

        for (std::size_t i = 0; i < m; ++i) {
            const auto& ker = p.modes[i].kernel;
            for (std::size_t e = 0; e < comp.n_marks(); ++e) {
                const double v = ker.value(t, e);
                if (!(v >= 0.0) || v > ker.bound) {
                    r.add(ViolationKind::KernelRange, k, static_cast<int>(i), static_cast<int>(e), -1, v,
                          fmt("rho^", i, "(", t, ", mark ", e, ") = ", v, " outside [0, ", ker.bound, "]"));
                }
            }
        }

        for (std::size_t i = 0; i < m; ++i) {
            const double cii = p.costs(t, i, i);
            if (cii != 0.0) {
                r.add(ViolationKind::SelfCost, k, static_cast<int>(i), static_cast<int>(i), -1, cii,
                      fmt("C(", t, ", ", i, ", ", i, ") = ", cii, " must be 0"));
            }
            for (std::size_t j = 0; j < m; ++j) {
                if (j == i) continue;
                const double cij = p.costs(t, i, j);
                if (cij < 0.0) {
                    r.add(ViolationKind::NegativeCost, k, static_cast<int>(i), static_cast<int>(j), -1, cij,
                          fmt("C(", t, ", ", i, ", ", j, ") = ", cij, " < 0"));
                }
                for (std::size_t l = 0; l < m; ++l) {
                    if (l == j) continue;
                    const double cjl = p.costs(t, j, l);
                    const double cil = p.costs(t, i, l);
                    const double slack = cij + cjl - cil;
                    // Rounding of the three costs is not counted as slack.
                    const double eps = 1e-12 * (std::abs(cij) + std::abs(cjl) + std::abs(cil));
                    if (!(slack > eps)) {
                        r.add(ViolationKind::TriangleSlack, k, static_cast<int>(i), static_cast<int>(j),
                              static_cast<int>(l), slack,
                              fmt("C(", i, ",", j, ") + C(", j, ",", l, ") - C(", i, ",", l, ") = ", slack,
                                  " at t = ", t));
                    }
                }
            }
        }
    }

    // Data finiteness on every chain state, terminal consistency on terminal states.
    for (int k = 0; k <= grid.n_steps; ++k) {
        for (std::size_t idx = 0; idx < grid.slice_size(k); ++idx) {
            const State s = grid.state(grid.node(k, idx));
            for (std::size_t i = 0; i < m; ++i) {
                const auto& mode = p.modes[i];
                const double vals[3] = {k == grid.n_steps ? mode.terminal(s) : 0.0, mode.running_f(s),
                                        mode.running_g(s)};
                for (double v : vals) {
                    if (!std::isfinite(v)) {
                        r.add(ViolationKind::NonFinite, k, static_cast<int>(i), -1, -1, v,
                              fmt("mode ", i, " data not finite at t = ", s.t, ", w = ", s.w, ", n = ", s.n));
                        break;
                    }
                }
            }
        }
    }

    const int N = grid.n_steps;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            const double cT = p.costs(p.horizon, i, j);
            double worst = 0.0;
            State where{};
            bool bad = false;
            for (std::size_t idx = 0; idx < grid.slice_size(N); ++idx) {
                const State s = grid.state(grid.node(N, idx));
                const double gap = p.modes[i].terminal(s) - (p.modes[j].terminal(s) - cT);
                if (gap < worst) {
                    worst = gap;
                    where = s;
                    bad = true;
                }
            }
            if (bad) {
                r.add(ViolationKind::TerminalConsistency, N, static_cast<int>(i), static_cast<int>(j), -1, worst,
                      fmt("xi^", i, " < xi^", j, " - C_T(", i, ",", j, ") by ", -worst, " at w = ", where.w,
                          ", n = ", where.n));
            }
        }
    }
    return r;
}

/**
 * Structural checks on a strategy: ordered times within [start, horizon],
 * valid targets different from the current mode. Equal switch times are
 * reported as warnings since the triangle slack makes them suboptimal.
 */
inline ValidationReport validate_strategy(const Strategy& s, const SwitchingProblem& p) {
    ValidationReport r;
    const auto m = p.n_modes();
    if (s.start_mode >= m) {
        r.add(ViolationKind::StrategyTarget, -1, static_cast<int>(s.start_mode), -1, -1, 0.0, "unknown start mode");
    }
    double prev = s.start_time;
    std::size_t mode = s.start_mode;
    for (std::size_t k = 0; k < s.switches.size(); ++k) {
        const auto& sw = s.switches[k];
        if (sw.time < prev || sw.time > p.horizon) {
            r.add(ViolationKind::StrategyOrder, -1, static_cast<int>(k), -1, -1, sw.time,
                  "switch " + std::to_string(k) + " time out of order or beyond horizon");
        } else if (k > 0 && sw.time == prev) {
            r.add(ViolationKind::SimultaneousSwitch, -1, static_cast<int>(k), -1, -1, sw.time,
                  "switch " + std::to_string(k) + " shares its time with the previous switch", true);
        }
        if (sw.mode >= m || sw.mode == mode) {
            r.add(ViolationKind::StrategyTarget, -1, static_cast<int>(k), static_cast<int>(sw.mode), -1, 0.0,
                  "switch " + std::to_string(k) + " targets the current or an unknown mode");
        }
        prev = sw.time;
        mode = sw.mode;
    }
    return r;
}

}  // namespace swbsde

#endif  // SWBSDE_VALIDATION_HPP
