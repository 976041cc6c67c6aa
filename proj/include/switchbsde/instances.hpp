#ifndef SWBSDE_INSTANCES_HPP
#define SWBSDE_INSTANCES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "mpp.hpp"
#include "problem.hpp"

namespace swbsde::instances {

/// A problem together with the chain resolution it is meant to be solved on.
struct Named {
    std::string name;
    SwitchingProblem problem;
    int n_steps = 20;
};

/**
 * Two modes over two marks, lambda = 2, T = 1. Mode "base" keeps the reference
 * jump law and earns 0.5 w per unit time; mode "boost" doubles mark a, kills
 * mark b, earns 0.3 per unit of A and 0.1 - 0.5 w per unit time. Both
 * terminals pay 0.2 per jump. Switching costs 0.1 either way.
 */
inline Named instance_a(int n_steps = 20) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    p.compensator = CompensatorSpec::constant(2.0, {"a", "b"}, {0.6, 0.4});
    ModeSpec base;
    base.name = "base";
    base.kernel = KernelField::per_mark({1.0, 1.0});
    base.terminal = [](const State& s) { return 0.2 * s.n; };
    base.running_g = [](const State& s) { return 0.5 * s.w; };
    ModeSpec boost;
    boost.name = "boost";
    boost.kernel = KernelField::per_mark({2.0, 0.0});
    boost.terminal = base.terminal;
    boost.running_f = constant_function(0.3);
    boost.running_g = [](const State& s) { return 0.1 - 0.5 * s.w; };
    p.modes = {base, boost};
    p.costs = CostStructure::uniform(0.1);
    return {"instance_a", std::move(p), n_steps};
}

/// Three modes, one mark, lambda(t) = 1 + t, asymmetric constant costs.
inline Named three_mode_linear(int n_steps = 50) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    CompensatorSpec c;
    c.lambda = [](double t) { return 1.0 + t; };
    c.lambda_bound = 2.0;
    c.marks = {"x"};
    c.phi = [](double, std::size_t) { return 1.0; };
    p.compensator = c;
    const StateFunction xi = [](const State& s) { return std::max(s.w, 0.0) + 0.1 * s.n; };
    const double rho[3] = {0.5, 1.0, 1.8};
    const double f[3] = {0.2, 0.0, -0.1};
    const double gw[3] = {0.0, 0.3, -0.3};
    for (int i = 0; i < 3; ++i) {
        ModeSpec m;
        m.name = "m" + std::to_string(i);
        m.kernel = KernelField::constant(rho[i]);
        m.terminal = xi;
        m.running_f = constant_function(f[i]);
        const double a = gw[i];
        m.running_g = [a](const State& s) { return a * s.w; };
        p.modes.push_back(m);
    }
    p.costs = CostStructure::matrix({{0.0, 0.05, 0.08}, {0.06, 0.0, 0.05}, {0.07, 0.04, 0.0}});
    return {"three_mode_linear", std::move(p), n_steps};
}

/// Two modes over three marks; mode 0 switches off the first mark entirely.
inline Named two_mode_three_marks(int n_steps = 50) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    p.compensator = CompensatorSpec::constant(3.0, {"s", "m", "l"}, {0.5, 0.3, 0.2});
    ModeSpec a;
    a.name = "quiet";
    a.kernel = KernelField::per_mark({0.0, 1.0, 2.0});
    a.terminal = [](const State& s) { return 0.1 * s.n; };
    a.running_f = [](const State& s) { return 0.05 * s.n - 0.1; };
    ModeSpec b;
    b.name = "busy";
    b.kernel = KernelField::per_mark({2.0, 0.5, 1.0});
    b.terminal = [](const State& s) { return 0.1 * s.n - 0.02; };
    b.running_f = [](const State& s) { return 0.2 - 0.05 * s.n; };
    b.running_g = [](const State& s) { return -0.2 * std::abs(s.w); };
    p.modes = {a, b};
    p.costs = CostStructure::uniform(0.05);
    return {"two_mode_three_marks", std::move(p), n_steps};
}

/// Three modes, two marks with a mark law that changes at t = 0.5, costs growing in time.
inline Named three_mode_time_costs(int n_steps = 20) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    CompensatorSpec c;
    c.lambda = [](double) { return 1.5; };
    c.lambda_bound = 1.5;
    c.marks = {"u", "d"};
    c.phi = [](double t, std::size_t m) {
        if (t < 0.5) return 0.5;
        return m == 0 ? 0.8 : 0.2;
    };
    p.compensator = c;
    const StateFunction xi = [](const State& s) { return std::min(s.w, 0.5) + 0.1 * s.n; };
    const std::vector<std::vector<double>> rho{{1.0, 1.0}, {1.5, 0.5}, {0.2, 1.8}};
    const double f[3] = {0.0, 0.1, -0.05};
    std::vector<StateFunction> g{
        [](const State& s) { return 0.2 * s.w; },
        [](const State& s) { return s.w >= 0.0 ? 0.3 : 0.0; },
        [](const State& s) { return -0.2 * s.w; },
    };
    for (int i = 0; i < 3; ++i) {
        ModeSpec m;
        m.name = "m" + std::to_string(i);
        m.kernel = KernelField::per_mark(rho[static_cast<std::size_t>(i)]);
        m.terminal = xi;
        m.running_f = constant_function(f[i]);
        m.running_g = g[static_cast<std::size_t>(i)];
        p.modes.push_back(m);
    }
    p.costs.cost = [](double t, std::size_t i, std::size_t j) { return i == j ? 0.0 : 0.05 + 0.05 * t; };
    return {"three_mode_time_costs", std::move(p), n_steps};
}

/// One mark; a mode that suppresses jumps against one that doubles them.
inline Named rho_zero_single_mark(int n_steps = 50) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    p.compensator = CompensatorSpec::constant(2.0, {"j"}, {1.0});
    const StateFunction xi = [](const State& s) { return s.n >= 1 ? 0.5 : 0.0; };
    ModeSpec off;
    off.name = "off";
    off.kernel = KernelField::constant(0.0);
    off.terminal = xi;
    off.running_g = [](const State& s) { return 0.1 * s.w; };
    ModeSpec on;
    on.name = "on";
    on.kernel = KernelField::constant(2.0);
    on.terminal = xi;
    on.running_f = constant_function(-0.1);
    on.running_g = [](const State& s) { return -0.1 * s.w; };
    p.modes = {off, on};
    p.costs = CostStructure::uniform(0.03);
    return {"rho_zero_single_mark", std::move(p), n_steps};
}

/// The instances used for solver/oracle agreement.
inline std::vector<Named> ci_suite() {
    return {instance_a(20), three_mode_linear(50), two_mode_three_marks(50), three_mode_time_costs(20),
            rho_zero_single_mark(50)};
}

/// Single mode with constant data; every value is known in closed form.
inline Named single_mode(double terminal = 1.0, double f = 0.0, double g = 0.0, double rho = 1.0,
                         double lambda = 1.0, int n_steps = 10) {
    SwitchingProblem p;
    p.horizon = 1.0;
    p.beta = 2.0;
    p.compensator = CompensatorSpec::constant(lambda, {"e"}, {1.0});
    ModeSpec m;
    m.name = "only";
    m.kernel = KernelField::constant(rho);
    m.terminal = constant_function(terminal);
    m.running_f = constant_function(f);
    m.running_g = constant_function(g);
    p.modes = {m};
    return {"single_mode", std::move(p), n_steps};
}

/// Two copies of the same mode with a positive switching cost.
inline Named identical_modes(double cost = 0.2, int n_steps = 10) {
    Named base = instance_a(n_steps);
    base.problem.modes[1] = base.problem.modes[0];
    base.problem.modes[1].name = "copy";
    base.problem.costs = CostStructure::uniform(cost);
    base.name = "identical_modes";
    return base;
}

/// Mode 1 earns far more than mode 0 from t = 0 on; a small cost separates them.
inline Named dominant_mode(double cost = 0.05, int n_steps = 10) {
    Named s = single_mode(0.0, 0.0, 0.0, 1.0, 1.0, n_steps);
    ModeSpec better = s.problem.modes[0];
    better.name = "better";
    better.running_g = constant_function(5.0);
    s.problem.modes[0].name = "worse";
    s.problem.modes.push_back(better);
    s.problem.costs = CostStructure::uniform(cost);
    s.name = "dominant_mode";
    return s;
}

/// Crafted instances that each break exactly one standing assumption.
inline Named invalid_self_cost() {
    Named s = instance_a(10);
    s.problem.costs = CostStructure::matrix({{1.0, 0.1}, {0.1, 0.0}});
    s.name = "invalid_self_cost";
    return s;
}

inline Named invalid_zero_slack() {
    Named s = three_mode_time_costs(10);
    s.problem.costs = CostStructure::matrix({{0.0, 0.1, 0.3}, {0.1, 0.0, 0.2}, {0.1, 0.1, 0.0}});
    s.name = "invalid_zero_slack";
    return s;
}

inline Named invalid_terminal() {
    Named s = single_mode(0.0, 0.0, 0.0, 1.0, 1.0, 10);
    ModeSpec rich = s.problem.modes[0];
    rich.name = "rich";
    rich.terminal = constant_function(5.0);
    s.problem.modes.push_back(rich);
    s.problem.costs = CostStructure::uniform(1.0);
    s.name = "invalid_terminal";
    return s;
}

inline Named invalid_kernel_bound() {
    Named s = instance_a(10);
    s.problem.modes[1].kernel.value = [](double, std::size_t m) { return m == 0 ? 2.5 : 0.0; };
    s.name = "invalid_kernel_bound";
    return s;
}

inline std::vector<Named> invalid_suite() {
    return {invalid_self_cost(), invalid_zero_slack(), invalid_terminal(), invalid_kernel_bound()};
}

}  // namespace swbsde::instances

#endif  // SWBSDE_INSTANCES_HPP
