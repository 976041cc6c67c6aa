#ifndef SWBSDE_PROBLEM_HPP
#define SWBSDE_PROBLEM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mpp.hpp"

namespace swbsde {

/// Observable state on which every data function is evaluated: time, Brownian coordinate, jump count.
struct State {
    double t = 0.0;
    double w = 0.0;
    int n = 0;
};

using StateFunction = std::function<double(const State&)>;

inline StateFunction constant_function(double c) {
    return [c](const State&) { return c; };
}

/**
 * One operating mode: terminal reward xi, running gains f (against dA) and g
 * (against dt), and the Girsanov kernel rho selecting the jump law in force.
 */
struct ModeSpec {
    std::string name;
    StateFunction terminal = constant_function(0.0);
    StateFunction running_f = constant_function(0.0);
    StateFunction running_g = constant_function(0.0);
    KernelField kernel = KernelField::constant(1.0);
};

/// Switching cost C_t(i, j), deterministic in time.
struct CostStructure {
    std::function<double(double, std::size_t, std::size_t)> cost;

    double operator()(double t, std::size_t from, std::size_t to) const { return cost(t, from, to); }

    static CostStructure matrix(std::vector<std::vector<double>> c) {
        return CostStructure{[c = std::move(c)](double, std::size_t i, std::size_t j) { return c[i][j]; }};
    }

    static CostStructure uniform(double c) {
        return CostStructure{[c](double, std::size_t i, std::size_t j) { return i == j ? 0.0 : c; }};
    }
};

struct SwitchingProblem {
    std::vector<ModeSpec> modes;
    CostStructure costs = CostStructure::uniform(0.0);
    CompensatorSpec compensator;
    double horizon = 1.0;
    double beta = 2.0;

    std::size_t n_modes() const { return modes.size(); }

    double max_kernel_bound() const {
        double b = 0.0;
        for (const auto& m : modes) b = std::max(b, m.kernel.bound);
        return b;
    }

    /// M' = max(|M - 1|, 1); the weighted norms need beta > M'^2.
    double m_prime() const { return std::max(std::abs(max_kernel_bound() - 1.0), 1.0); }
};

struct Switch {
    double time;
    std::size_t mode;
};

/**
 * Switching strategy started at (start_time, start_mode). Switch k moves the
 * controller from the previous mode to `mode` at `time`; the new mode applies
 * strictly after that time.
 */
struct Strategy {
    double start_time = 0.0;
    std::size_t start_mode = 0;
    std::vector<Switch> switches;

    /// Mode reached after every switch (the one in force at the end of the horizon).
    std::size_t final_mode() const { return switches.empty() ? start_mode : switches.back().mode; }
};

/**
 * a_t = sum_k alpha_{k-1} 1_{(theta_{k-1}, theta_k]}(t). At t = theta_k the old
 * mode still applies; equal switch times collapse to the last target.
 */
inline std::size_t mode_process(const Strategy& s, double t) {
    if (t < s.start_time) throw std::invalid_argument("mode_process: t precedes the strategy start");
    std::size_t mode = s.start_mode;
    for (const auto& sw : s.switches) {
        if (sw.time < t) mode = sw.mode;
        else break;
    }
    return mode;
}

/// rho^a_t(e) = rho^{a_t}_t(e).
inline KernelField switched_kernel(const Strategy& s, const SwitchingProblem& p) {
    KernelField k;
    k.bound = 0.0;
    k.eta = 0.0;
    std::vector<KernelField> kernels;
    for (const auto& m : p.modes) {
        k.bound = std::max(k.bound, m.kernel.bound);
        k.eta = std::max(k.eta, m.kernel.eta);
        kernels.push_back(m.kernel);
    }
    k.value = [s, kernels = std::move(kernels)](double t, std::size_t mark) {
        const double tc = std::max(t, s.start_time);
        return kernels[mode_process(s, tc)].value(t, mark);
    };
    return k;
}

/// D_t = sum over theta_k <= t of C_{theta_k}(alpha_{k-1}, alpha_k).
inline double cumulated_cost(const Strategy& s, const SwitchingProblem& p, double t) {
    if (t > p.horizon) throw std::invalid_argument("cumulated_cost: t beyond horizon");
    double total = 0.0;
    std::size_t from = s.start_mode;
    for (const auto& sw : s.switches) {
        if (sw.time > t) break;
        total += p.costs(sw.time, from, sw.mode);
        from = sw.mode;
    }
    return total;
}

}  // namespace swbsde

#endif  // SWBSDE_PROBLEM_HPP
