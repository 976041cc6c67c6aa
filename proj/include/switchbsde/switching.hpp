#ifndef SWBSDE_SWITCHING_HPP
#define SWBSDE_SWITCHING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsde.hpp"
#include "evaluation.hpp"
#include "lattice.hpp"
#include "oracle.hpp"
#include "problem.hpp"

namespace swbsde {

/// Per-mode solutions (y^i, u^i, z^i, dK^i) of the interconnected system.
struct SystemSolution {
    std::vector<BsdeSolution> modes;

    double y(const ChainGrid& g, std::size_t i, const NodeState& s) const { return modes[i].y.at(g, s); }
};

struct PicardReport {
    int iterations = 0;
    std::vector<double> sup_delta_history;
    std::size_t monotonicity_violations = 0;
    double worst_violation = 0.0;
    bool converged = false;
    double tolerance = 0.0;
};

class PicardNonConvergence : public std::runtime_error {
public:
    explicit PicardNonConvergence(PicardReport r)
        : std::runtime_error("Picard iteration did not converge in " + std::to_string(r.iterations) +
                             " iterations (last sup update " +
                             std::to_string(r.sup_delta_history.empty() ? 0.0 : r.sup_delta_history.back()) + ")"),
          report(std::move(r)) {}
    PicardReport report;
};

/// Unreflected equation of mode i: driver f^i + sum_m u(m) (rho^i - 1) phi against dA, g^i against dt.
inline BsdeSpec mode_equation(const SwitchingProblem& p, std::size_t i) {
    const auto& mode = p.modes[i];
    BsdeSpec spec;
    spec.terminal = mode.terminal;
    spec.driver_f = driver_from(mode.running_f);
    spec.driver_g = dt_driver_from(mode.running_g);
    spec.g_shape = DriverShape::affine_in_y;
    spec.kernel = mode.kernel;
    spec.beta = p.beta;
    return spec;
}

/// max_{j != i} (y^j(node) - C(t_k, i, j)); -inf when mode i has no destination.
inline double interconnected_obstacle(const ChainGrid& g, const SwitchingProblem& p,
                                      const std::vector<BsdeSolution>& sol, std::size_t i, const NodeState& s) {
    double h = -std::numeric_limits<double>::infinity();
    const double t = g.times[static_cast<std::size_t>(s.k)];
    for (std::size_t j = 0; j < p.n_modes(); ++j) {
        if (j == i) continue;
        h = std::max(h, sol[j].y.at(g, s) - p.costs(t, i, j));
    }
    return h;
}

/// Y^{i,0}: the unreflected equation of every mode.
inline std::vector<BsdeSolution> solve_mode_floor(const ChainGrid& g, const SwitchingProblem& p) {
    std::vector<BsdeSolution> out;
    out.reserve(p.n_modes());
    for (std::size_t i = 0; i < p.n_modes(); ++i) out.push_back(solve_standard(g, mode_equation(p, i)));
    return out;
}

/**
 * Upper bound Y-hat with data max_i |xi^i|, max_i |f^i|, max_i |g^i| and the
 * U-driver sum_m h(u(m), m) phi(m), where h(u) = u max_i(rho^i - 1) for u >= 0
 * and u min_i(rho^i - 1) otherwise.
 */
inline BsdeSolution solve_upper_bound(const ChainGrid& g, const SwitchingProblem& p) {
    std::vector<StateFunction> xi, f, gg;
    std::vector<KernelField> kernels;
    for (const auto& m : p.modes) {
        xi.push_back(m.terminal);
        f.push_back(m.running_f);
        gg.push_back(m.running_g);
        kernels.push_back(m.kernel);
    }
    auto max_abs = [](std::vector<StateFunction> fs) -> StateFunction {
        return [fs = std::move(fs)](const State& s) {
            double v = 0.0;
            for (const auto& fn : fs) v = std::max(v, std::abs(fn(s)));
            return v;
        };
    };

    BsdeSpec spec;
    spec.terminal = max_abs(xi);
    const StateFunction f_max = max_abs(f);
    spec.driver_f = [f_max, kernels, comp = p.compensator](const State& s, std::span<const double> u) {
        double v = f_max(s);
        for (std::size_t m = 0; m < u.size(); ++m) {
            double hi = -std::numeric_limits<double>::infinity();
            double lo = std::numeric_limits<double>::infinity();
            for (const auto& k : kernels) {
                const double r = k.value(s.t, m) - 1.0;
                hi = std::max(hi, r);
                lo = std::min(lo, r);
            }
            v += (u[m] >= 0.0 ? u[m] * hi : u[m] * lo) * comp.phi(s.t, m);
        }
        return v;
    };
    spec.driver_g = dt_driver_from(max_abs(gg));
    spec.g_shape = DriverShape::affine_in_y;
    spec.beta = p.beta;
    return solve_standard(g, spec);
}

using PicardObserver = std::function<void(int, const std::vector<BsdeSolution>&)>;

/**
 * Picard scheme for the interconnected system: start from Y^{i,0}, then solve
 * each mode as a reflected equation against max_{j != i}(Y^{j,n-1} - C(i, j))
 * until the sup-norm update drops to `tolerance`. Iterates are checked for
 * nodewise monotone increase (violations beyond 1e-12 are counted).
 */
inline std::pair<SystemSolution, PicardReport> picard_solve(const ChainGrid& g, const SwitchingProblem& p,
                                                           double tolerance = 1e-10, int max_iterations = 1000,
                                                           const PicardObserver& observer = {}) {
    if (!(tolerance > 0.0)) throw std::invalid_argument("picard_solve: tolerance must be positive");
    PicardReport report;
    report.tolerance = tolerance;
    std::vector<BsdeSolution> prev = solve_mode_floor(g, p);
    if (observer) observer(0, prev);

    const std::size_t m = p.n_modes();
    for (int it = 1; it <= max_iterations; ++it) {
        std::vector<BsdeSolution> cur;
        cur.reserve(m);
        for (std::size_t i = 0; i < m; ++i) {
            BsdeSpec spec = mode_equation(p, i);
            spec.obstacle = [&g, &p, &prev, i](const NodeState& s, const State&) {
                return interconnected_obstacle(g, p, prev, i, s);
            };
            cur.push_back(solve_reflected(g, spec));
        }
        double delta = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (int k = 0; k <= g.n_steps; ++k) {
                const auto& a = cur[i].y.slice(k);
                const auto& b = prev[i].y.slice(k);
                for (std::size_t n = 0; n < a.size(); ++n) {
                    delta = std::max(delta, std::abs(a[n] - b[n]));
                    if (a[n] < b[n] - 1e-12) {
                        ++report.monotonicity_violations;
                        report.worst_violation = std::max(report.worst_violation, b[n] - a[n]);
                    }
                }
            }
        }
        report.iterations = it;
        report.sup_delta_history.push_back(delta);
        if (observer) observer(it, cur);
        prev = std::move(cur);
        if (delta <= tolerance) {
            report.converged = true;
            break;
        }
    }
    if (!report.converged) throw PicardNonConvergence(report);
    return {SystemSolution{std::move(prev)}, report};
}

/**
 * Switches taken at node s in `mode` by the contact rule: while
 * y^mode = max_j (y^j - C(mode, j)) within `tol`, move to the maximizing mode
 * (lowest index among ties). At most m - 1 switches per grid time.
 */
inline void optimal_switches(const SystemSolution& sol, const SwitchingProblem& p, const ChainGrid& g,
                             const NodeState& s, std::size_t mode, std::vector<Switch>& out, double tol = 1e-9) {
    const double t = g.times[static_cast<std::size_t>(s.k)];
    for (std::size_t guard = 0; guard + 1 < p.n_modes(); ++guard) {
        const double yi = sol.y(g, mode, s);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < p.n_modes(); ++j) {
            if (j != mode) best = std::max(best, sol.y(g, j, s) - p.costs(t, mode, j));
        }
        if (!(yi <= best + tol)) return;
        std::size_t target = mode;
        for (std::size_t j = 0; j < p.n_modes(); ++j) {
            if (j != mode && sol.y(g, j, s) - p.costs(t, mode, j) >= best - tol) {
                target = j;
                break;
            }
        }
        out.push_back(Switch{t, target});
        mode = target;
    }
}

/// Controller applying the contact rule along a simulated path.
inline auto optimal_controller(const SystemSolution& sol, const SwitchingProblem& p, const ChainGrid& g,
                               double tol = 1e-9) {
    return [&sol, &p, &g, tol](int, const NodeState& s, std::size_t mode, std::vector<Switch>& out) {
        optimal_switches(sol, p, g, s, mode, out, tol);
    };
}

/// Realized optimal strategy along a chain path, started at (start_time, start_mode).
inline Strategy extract_strategy(const SystemSolution& sol, const SwitchingProblem& p, const ChainGrid& g,
                                 const PathSample& path, double start_time, std::size_t start_mode,
                                 double tol = 1e-9) {
    Strategy s;
    s.start_time = start_time;
    s.start_mode = start_mode;
    const auto nodes = path.nodes(g);
    const int k0 = grid_index_at_or_after(g, start_time);
    std::size_t mode = start_mode;
    std::vector<Switch> taken;
    for (int k = k0; k <= g.n_steps; ++k) {
        taken.clear();
        optimal_switches(sol, p, g, nodes[static_cast<std::size_t>(k)], mode, taken, tol);
        for (const auto& sw : taken) {
            s.switches.push_back(sw);
            mode = sw.mode;
        }
    }
    return s;
}

struct RandomStrategyCheck {
    double q_switch = 0.0;
    std::size_t n_switches = 0;
    Estimate estimate;
    bool exceeds = false;  ///< J > y(root) + 3 stderr
};

struct VerificationReport {
    std::size_t start_mode = 0;
    double y_root = 0.0;
    Estimate extracted;
    Estimate extracted_direct;
    double extracted_gap_in_stderr = 0.0;
    std::vector<RandomStrategyCheck> random;
    std::size_t random_exceeding = 0;
    double dp_root = 0.0;
    double dp_gap = 0.0;

    bool extracted_within_3_stderr() const { return extracted_gap_in_stderr <= 3.0; }
};

struct VerificationOptions {
    std::size_t start_mode = 0;
    std::size_t n_random = 50;
    std::vector<double> q_switch{0.01, 0.05};
    EstimatorMethod method = EstimatorMethod::reweighted;
};

/**
 * Compare y^i(root) with (a) the Monte Carlo value of the extracted optimal
 * strategy, (b) the values of random admissible strategies, (c) the dynamic
 * programming value on the same chain.
 */
inline VerificationReport verify_representation(const SystemSolution& sol, const SwitchingProblem& p,
                                                const ChainGrid& g, std::size_t n_paths, std::uint64_t seed,
                                                const VerificationOptions& opt = {}) {
    VerificationReport r;
    r.start_mode = opt.start_mode;
    const NodeState root{0, 0, 0};
    r.y_root = sol.y(g, opt.start_mode, root);

    const auto ctrl = optimal_controller(sol, p, g);
    r.extracted = estimate_controlled(p, g, 0.0, opt.start_mode, ctrl, n_paths, seed, opt.method);
    r.extracted_direct = estimate_controlled(p, g, 0.0, opt.start_mode, ctrl, n_paths, seed + 1, EstimatorMethod::direct);
    const double gap = std::abs(r.y_root - r.extracted.mean);
    r.extracted_gap_in_stderr = r.extracted.std_error > 0.0 ? gap / r.extracted.std_error
                                                            : (gap <= 1e-12 ? 0.0 : std::numeric_limits<double>::infinity());

    for (std::size_t k = 0; k < opt.n_random; ++k) {
        RandomStrategyCheck c;
        c.q_switch = opt.q_switch[k % opt.q_switch.size()];
        const Strategy s = random_strategy(p, g, opt.start_mode, c.q_switch, seed ^ 0x5EED5EEDULL, k);
        c.n_switches = s.switches.size();
        c.estimate = estimate_J(p, g, s, n_paths, seed + 2 + k, opt.method);
        c.exceeds = c.estimate.mean > r.y_root + 3.0 * c.estimate.std_error;
        r.random_exceeding += c.exceeds ? 1 : 0;
        r.random.push_back(c);
    }

    const ValueTable dp = dp_value(g, p);
    r.dp_root = dp.at(g, opt.start_mode, root);
    r.dp_gap = std::abs(r.dp_root - r.y_root);
    return r;
}

}  // namespace swbsde

#endif  // SWBSDE_SWITCHING_HPP
