#ifndef SWBSDE_BSDE_HPP
#define SWBSDE_BSDE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lattice.hpp"
#include "problem.hpp"

namespace swbsde {

using DriverF = std::function<double(const State&, std::span<const double>)>;
using DriverG = std::function<double(const State&, double, double)>;
using Obstacle = std::function<double(const NodeState&, const State&)>;

/// Shape hint for the dt-driver; affine-in-y drivers are solved in closed form per node.
enum class DriverShape { general, affine_in_y };

struct LipschitzConstants {
    double l_f = 0.0;
    double l_u = 0.0;
    double l_g = 0.0;
    double l_z = 0.0;
};

/**
 * Data of one backward equation on the chain
 *   Y_t = xi + int f(U) dA + int g(Y, Z) ds + [U (rho - 1) phi dA] - int U dq - int Z dW + K_T - K_t.
 * The bracketed term is present when `kernel` is set. Empty drivers are zero.
 */
struct BsdeSpec {
    StateFunction terminal = constant_function(0.0);
    DriverF driver_f;
    DriverG driver_g;
    DriverShape g_shape = DriverShape::general;
    Obstacle obstacle;
    std::optional<KernelField> kernel;
    std::optional<LipschitzConstants> lipschitz;
    double beta = 2.0;
};

inline DriverF driver_from(StateFunction f) {
    return [f = std::move(f)](const State& s, std::span<const double>) { return f(s); };
}

inline DriverG dt_driver_from(StateFunction g) {
    return [g = std::move(g)](const State& s, double, double) { return g(s); };
}

inline Obstacle obstacle_from(StateFunction h) {
    return [h = std::move(h)](const NodeState&, const State& s) { return h(s); };
}

/// Discrete weighted norms: E sum e^{beta A_k} |.|^2 against dA (Y, U with phi) and dt (Y, Z).
struct WeightedNorms {
    double y_A = 0.0;
    double y_W = 0.0;
    double u_p = 0.0;
    double z_W = 0.0;

    double total() const { return y_A + y_W + u_p + z_W; }
};

struct BsdeSolution {
    LatticeField y;
    LatticeField z;
    std::vector<std::vector<double>> u;  // per slice, node-major then mark
    LatticeField dk;
    WeightedNorms weighted_norms;
    std::vector<std::string> warnings;

    double u_at(const ChainGrid& g, const NodeState& s, std::size_t m) const {
        return u[static_cast<std::size_t>(s.k)][g.index(s) * g.n_marks + m];
    }
};

class BsdeNonConvergence : public std::runtime_error {
public:
    BsdeNonConvergence(NodeState node, double residual)
        : std::runtime_error("per-node fixed point did not converge at step " + std::to_string(node.k) +
                             " (w = " + std::to_string(node.w) + ", n = " + std::to_string(node.n) +
                             "), residual " + std::to_string(residual)),
          node(node), residual(residual) {}
    NodeState node;
    double residual;
};

inline WeightedNorms weighted_norms(const ChainGrid& g, const BsdeSolution& sol, double beta,
                                    const LatticeField& probabilities) {
    WeightedNorms n;
    for (int k = 0; k < g.n_steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double w = std::exp(beta * g.cumulative_A[kk]);
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const double pi = probabilities.slice(k)[i] * w;
            if (pi == 0.0) continue;
            const double y = sol.y.slice(k)[i];
            const double z = sol.z.slice(k)[i];
            double uu = 0.0;
            for (std::size_t m = 0; m < g.n_marks; ++m) {
                const double um = sol.u[kk][i * g.n_marks + m];
                uu += um * um * g.phi[kk][m];
            }
            n.y_A += pi * y * y * g.delta_A[kk];
            n.y_W += pi * y * y * g.dt;
            n.u_p += pi * uu * g.delta_A[kk];
            n.z_W += pi * z * z * g.dt;
        }
    }
    return n;
}

enum class Reflection { none, penalized, reflected };

namespace detail {

struct NodeResult {
    double y;
    double dk;
};

/**
 * Solve y = T(base + g(y, z) dt) at one node, where T is the identity,
 * the implicit penalty P -> P + n dt (y - h)^-, or the reflection at h.
 */
inline NodeResult solve_node(const BsdeSpec& spec, const State& st, const NodeState& node, double base, double z,
                             double dt, Reflection mode, double penalty_n, double h) {
    const double pen = penalty_n * dt;
    auto penalize = [&](double pre) { return pre >= h ? pre : (pre + pen * h) / (1.0 + pen); };

    double pre;  // unreflected solution P* of P = base + g(P, z) dt
    if (!spec.driver_g) {
        pre = base;
        if (mode == Reflection::penalized) {
            const double y = penalize(pre);
            return {y, pen * std::max(h - y, 0.0)};
        }
    } else if (spec.g_shape == DriverShape::affine_in_y) {
        const double g0 = spec.driver_g(st, 0.0, z);
        const double a = spec.driver_g(st, 1.0, z) - g0;
        const double denom = 1.0 - a * dt;
        if (!(denom > 0.0)) throw BsdeNonConvergence(node, denom);
        pre = (base + g0 * dt) / denom;
        if (mode == Reflection::penalized) {
            if (pre >= h) return {pre, 0.0};
            const double y = (base + g0 * dt + pen * h) / (denom + pen);
            return {y, pen * std::max(h - y, 0.0)};
        }
    } else {
        auto map = [&](double y) {
            const double p = base + spec.driver_g(st, y, z) * dt;
            return mode == Reflection::penalized ? penalize(p) : p;
        };
        double y = map(base);
        double residual = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 50; ++it) {
            const double next = map(y);
            residual = std::abs(next - y);
            y = next;
            if (residual <= 1e-13 * std::max(1.0, std::abs(y))) break;
        }
        if (!(residual <= 1e-13 * std::max(1.0, std::abs(y)))) throw BsdeNonConvergence(node, residual);
        if (mode == Reflection::penalized) return {y, pen * std::max(h - y, 0.0)};
        pre = y;
    }

    if (mode == Reflection::reflected && pre < h) {
        const double at_h = spec.driver_g ? base + spec.driver_g(st, h, z) * dt : base;
        return {h, std::max(h - at_h, 0.0)};
    }
    return {pre, 0.0};
}

inline BsdeSolution backward(const ChainGrid& g, const BsdeSpec& spec, Reflection mode, double penalty_n) {
    if (mode != Reflection::none && !spec.obstacle) {
        throw std::invalid_argument("reflected or penalized solve requires an obstacle");
    }
    BsdeSolution sol;
    sol.y = LatticeField(g, 0.0);
    sol.z = LatticeField(g, 0.0);
    sol.dk = LatticeField(g, 0.0);
    sol.u.resize(static_cast<std::size_t>(g.n_steps + 1));
    for (int k = 0; k <= g.n_steps; ++k) sol.u[static_cast<std::size_t>(k)].assign(g.slice_size(k) * g.n_marks, 0.0);

    if (spec.lipschitz) {
        const auto& L = *spec.lipschitz;
        if (!(spec.beta > 2.0 * L.l_f + L.l_u * L.l_u)) {
            sol.warnings.push_back("beta = " + std::to_string(spec.beta) + " does not exceed 2 L_f + L_U^2 = " +
                                   std::to_string(2.0 * L.l_f + L.l_u * L.l_u));
        }
    }

    const int N = g.n_steps;
    for (std::size_t i = 0; i < g.slice_size(N); ++i) {
        const NodeState s = g.node(N, i);
        const double xi = spec.terminal(g.state(s));
        if (mode == Reflection::reflected) {
            const double h = spec.obstacle(s, g.state(s));
            if (xi < h - 1e-12) {
                throw std::invalid_argument("terminal value below obstacle at a terminal state");
            }
        }
        sol.y.slice(N)[i] = xi;
    }

    std::vector<std::vector<double>> rho;
    if (spec.kernel) rho = g.kernel_table(*spec.kernel);

    ChildValues children(g.n_marks);
    for (int k = N - 1; k >= 0; --k) {
        const auto kk = static_cast<std::size_t>(k);
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const NodeState s = g.node(k, i);
            const State st = g.state(s);
            gather_children(sol.y, g, s, children);
            const StepCoefficients c = step_coefficients(children, s, g);

            double f = spec.driver_f ? spec.driver_f(st, c.u) : 0.0;
            if (spec.kernel) {
                for (std::size_t m = 0; m < g.n_marks; ++m) f += c.u[m] * (rho[kk][m] - 1.0) * g.phi[kk][m];
            }
            const double base = c.expectation + f * g.delta_A[kk];
            const double h =
                mode == Reflection::none ? -std::numeric_limits<double>::infinity() : spec.obstacle(s, st);
            const NodeResult r = solve_node(spec, st, s, base, c.z, g.dt, mode, penalty_n, h);

            sol.y.slice(k)[i] = r.y;
            sol.dk.slice(k)[i] = r.dk;
            sol.z.slice(k)[i] = c.z;
            std::copy(c.u.begin(), c.u.end(), sol.u[kk].begin() + static_cast<std::ptrdiff_t>(i * g.n_marks));
        }
    }
    sol.weighted_norms = weighted_norms(g, sol, spec.beta, node_probabilities(g));
    return sol;
}

}  // namespace detail

/// Unreflected equation; any obstacle in `spec` is ignored.
inline BsdeSolution solve_standard(const ChainGrid& g, const BsdeSpec& spec) {
    return detail::backward(g, spec, Reflection::none, 0.0);
}

/// Penalized equation with K^n = n int (Y - h)^- ds, implicit per node.
inline BsdeSolution solve_penalized(const ChainGrid& g, const BsdeSpec& spec, double penalty_n) {
    if (penalty_n < 0.0) throw std::invalid_argument("solve_penalized: penalty must be nonnegative");
    return detail::backward(g, spec, Reflection::penalized, penalty_n);
}

/// Reflected equation: y = max(P, h) with dK = push needed to reach h.
inline BsdeSolution solve_reflected(const ChainGrid& g, const BsdeSpec& spec) {
    return detail::backward(g, spec, Reflection::reflected, 0.0);
}

/**
 * Data-side expression of the a priori estimate: E e^{beta A_T} xi^2,
 * E sum e^{beta A} f(0)^2 dA, E sum e^{beta A} g(0,0)^2 dt, and the sup
 * terms for Y and the obstacle (bounded by the maximum over reachable nodes).
 */
struct DataNorms {
    double xi = 0.0;
    double f = 0.0;
    double g = 0.0;
    double sup_y = 0.0;
    double sup_obstacle = 0.0;

    double total() const { return xi + f + g + sup_y + sup_obstacle; }
};

inline DataNorms data_norms(const ChainGrid& g, const BsdeSpec& spec, const BsdeSolution& sol, double delta = 0.1) {
    DataNorms d;
    const LatticeField prob = node_probabilities(g);
    const std::vector<double> zero_u(g.n_marks, 0.0);
    for (int k = 0; k <= g.n_steps; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double w = std::exp(spec.beta * g.cumulative_A[kk]);
        const double wd = std::exp((spec.beta + delta) * g.cumulative_A[kk]);
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const double pi = prob.slice(k)[i];
            if (pi == 0.0) continue;
            const NodeState s = g.node(k, i);
            const State st = g.state(s);
            const double y = sol.y.slice(k)[i];
            d.sup_y = std::max(d.sup_y, w * y * y);
            if (spec.obstacle) {
                const double h = spec.obstacle(s, st);
                if (std::isfinite(h)) d.sup_obstacle = std::max(d.sup_obstacle, wd * h * h);
            }
            if (k == g.n_steps) {
                const double xi = spec.terminal(st);
                d.xi += pi * w * xi * xi;
                continue;
            }
            const double f0 = spec.driver_f ? spec.driver_f(st, zero_u) : 0.0;
            const double g0 = spec.driver_g ? spec.driver_g(st, 0.0, 0.0) : 0.0;
            d.f += pi * w * f0 * f0 * g.delta_A[kk];
            d.g += pi * w * g0 * g0 * g.dt;
        }
    }
    return d;
}

struct ComparisonViolation {
    NodeState node;
    double y1;
    double y2;
};

struct ComparisonReport {
    std::vector<ComparisonViolation> violations;
    bool gamma_condition = true;  ///< gamma = rho - 1 of spec2 lies in [-1, bound - 1] on the grid
    double gamma_min = 0.0;
    double gamma_max = 0.0;

    bool ordered() const { return violations.empty(); }
};

/**
 * Solve both equations (reflected or not) and report every node where the
 * expected ordering y2 <= y1 fails by more than 1e-12. The caller asserts the
 * data ordering (xi2 <= xi1, f2 <= f1, g2 <= g1, h2 <= h1).
 */
inline ComparisonReport check_comparison(const ChainGrid& g, const BsdeSpec& spec1, const BsdeSpec& spec2,
                                         bool reflected) {
    const BsdeSolution s1 = reflected ? solve_reflected(g, spec1) : solve_standard(g, spec1);
    const BsdeSolution s2 = reflected ? solve_reflected(g, spec2) : solve_standard(g, spec2);
    ComparisonReport r;
    if (spec2.kernel) {
        r.gamma_min = std::numeric_limits<double>::infinity();
        r.gamma_max = -std::numeric_limits<double>::infinity();
        for (const auto& row : g.kernel_table(*spec2.kernel)) {
            for (double rho : row) {
                r.gamma_min = std::min(r.gamma_min, rho - 1.0);
                r.gamma_max = std::max(r.gamma_max, rho - 1.0);
            }
        }
        r.gamma_condition = r.gamma_min >= -1.0 && r.gamma_max <= spec2.kernel->bound - 1.0;
    }
    for (int k = 0; k <= g.n_steps; ++k) {
        for (std::size_t i = 0; i < g.slice_size(k); ++i) {
            const double y1 = s1.y.slice(k)[i];
            const double y2 = s2.y.slice(k)[i];
            if (y2 > y1 + 1e-12) r.violations.push_back({g.node(k, i), y1, y2});
        }
    }
    return r;
}

}  // namespace swbsde

#endif  // SWBSDE_BSDE_HPP
