// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <switchbsde/switchbsde.hpp>

#include "oracles.hpp"

using namespace swbsde;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

class Criterion {
public:
    explicit Criterion(std::ostringstream& os) : os_(os) {}
    void require(bool ok, const std::string& what) {
        if (!ok && pass_) {
            pass_ = false;
            os_ << "first failure: " << what << "; ";
        }
    }
    bool pass() const { return pass_; }

private:
    std::ostringstream& os_;
    bool pass_ = true;
};

int failures = 0;

void run(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
        r = body();
    } catch (const std::exception& e) {
        r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit_s > 0.0 && secs > limit_s) {
        r.pass = false;
        r.detail += " runtime limit exceeded;";
    }
    if (!r.pass) ++failures;
    std::printf("%s %d %s (%.1f s) %s\n", r.pass ? "PASS" : "FAIL", id, name, secs, r.detail.c_str());
    std::fflush(stdout);
}

template <class F>
void for_each_node(const ChainGrid& g, F&& f) {
    for (int k = 0; k <= g.n_steps; ++k) {
        for (std::size_t i = 0; i < g.slice_size(k); ++i) f(g.node(k, i), k, i);
    }
}

bool has_zero_kernel_mark(const SwitchingProblem& p, const ChainGrid& g) {
    for (const auto& m : p.modes) {
        for (std::size_t e = 0; e < g.n_marks; ++e) {
            bool zero = true;
            for (int k = 0; k < g.n_steps && zero; ++k) zero = m.kernel.value(g.times[static_cast<std::size_t>(k)], e) == 0.0;
            if (zero) return true;
        }
    }
    return false;
}

Outcome oracle_equivalence() {
    std::ostringstream os;
    Criterion c(os);
    double worst = 0.0;
    std::set<std::size_t> ms, marks;
    std::set<int> ns;
    bool zero_mark = false;
    const auto suite = instances::ci_suite();
    for (const auto& inst : suite) {
        const auto g = build_chain(inst.problem, inst.n_steps);
        const auto [sol, rep] = picard_solve(g, inst.problem);
        const auto dp = dp_value(g, inst.problem);
        for (std::size_t i = 0; i < inst.problem.n_modes(); ++i) worst = std::max(worst, sup_distance(sol.modes[i].y, dp.v[i]));
        ms.insert(inst.problem.n_modes());
        marks.insert(g.n_marks);
        ns.insert(inst.n_steps);
        zero_mark = zero_mark || has_zero_kernel_mark(inst.problem, g);
    }
    c.require(suite.size() >= 5, "fewer than 5 instances");
    c.require(ms == std::set<std::size_t>{2, 3}, "mode counts do not span {2, 3}");
    c.require(marks == std::set<std::size_t>{1, 2, 3}, "mark counts do not span {1, 2, 3}");
    c.require(ns == std::set<int>{20, 50}, "resolutions do not span {20, 50}");
    c.require(zero_mark, "no mode with a zero kernel on some mark");
    c.require(worst <= 1e-9, "Picard and DP differ");
    os << suite.size() << " instances, max |picard - dp| = " << worst;
    return {c.pass(), os.str()};
}

Outcome exhaustive_search() {
    std::ostringstream os;
    Criterion c(os);
    double worst = 0.0;
    std::size_t count = 0;
    auto check = [&](const SwitchingProblem& p, int N) {
        const auto g = build_chain(p, N);
        const auto dp = dp_value(g, p);
        for (std::size_t start = 0; start < 2; ++start) {
            const auto e = enumerate_strategies(g, p, N + 1, start);
            worst = std::max(worst, std::abs(e.best_value - dp.at(g, start, NodeState{})));
            c.require(e.best_open_loop_value <= e.best_value + 1e-12, "open-loop value above adapted value");
            ++count;
        }
    };
    for (int N : {4, 5, 6}) check(instances::instance_a(N).problem, N);
    oracle_test::Gen gen(2718);
    for (int trial = 0; trial < 6; ++trial) {
        const int N = gen.integer(3, 6);
        check(oracle_test::random_problem(gen, 2, static_cast<std::size_t>(gen.integer(1, 2)), N), N);
    }
    c.require(worst <= 1e-9, "enumeration differs from DP");
    os << count << " searches, max |best - dp| = " << worst;
    return {c.pass(), os.str()};
}

std::vector<instances::Named> solved_instances() {
    auto all = instances::ci_suite();
    all.push_back(instances::identical_modes());
    all.push_back(instances::dominant_mode());
    oracle_test::Gen gen(161);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = static_cast<std::size_t>(gen.integer(2, 3));
        const int N = gen.coin() ? 20 : 30;
        all.push_back({"random" + std::to_string(trial),
                       oracle_test::random_problem(gen, m, static_cast<std::size_t>(gen.integer(1, 3)), N), N});
    }
    return all;
}

Outcome monotone_picard() {
    std::ostringstream os;
    Criterion c(os);
    std::size_t violations = 0, bound_breaches = 0;
    int max_iter = 0;
    const auto all = solved_instances();
    for (const auto& inst : all) {
        const auto g = build_chain(inst.problem, inst.n_steps);
        const auto floor = solve_mode_floor(g, inst.problem);
        const auto upper = solve_upper_bound(g, inst.problem);
        const auto observer = [&](int, const std::vector<BsdeSolution>& cur) {
            for (std::size_t i = 0; i < cur.size(); ++i) {
                for (int k = 0; k <= g.n_steps; ++k) {
                    for (std::size_t n = 0; n < g.slice_size(k); ++n) {
                        const double y = cur[i].y.slice(k)[n];
                        if (y < floor[i].y.slice(k)[n] - 1e-12 || y > upper.y.slice(k)[n] + 1e-12) ++bound_breaches;
                    }
                }
            }
        };
        const auto [sol, rep] = picard_solve(g, inst.problem, 1e-10, 1000, observer);
        violations += rep.monotonicity_violations;
        max_iter = std::max(max_iter, rep.iterations);
        c.require(rep.iterations <= g.n_steps * static_cast<int>(inst.problem.n_modes()), inst.name + ": too many iterations");
    }
    c.require(violations == 0, "monotonicity violations");
    c.require(bound_breaches == 0, "iterate outside [floor, upper bound]");
    os << all.size() << " instances, violations = " << violations << ", bound breaches = " << bound_breaches
       << ", max iterations = " << max_iter;
    return {c.pass(), os.str()};
}

Outcome penalization() {
    std::ostringstream os;
    Criterion c(os);
    double worst_gap = 0.0, worst_root_gap = 0.0;
    for (const auto& inst : instances::ci_suite()) {
        const auto g = build_chain(inst.problem, inst.n_steps);
        const auto [sol, rep] = picard_solve(g, inst.problem);
        for (std::size_t i = 0; i < inst.problem.n_modes(); ++i) {
            BsdeSpec spec = mode_equation(inst.problem, i);
            const auto& modes = sol.modes;
            const auto& p = inst.problem;
            spec.obstacle = [&g, &p, &modes, i](const NodeState& s, const State&) {
                return interconnected_obstacle(g, p, modes, i, s);
            };
            const auto& refl = sol.modes[i].y;
            double prev_root = -std::numeric_limits<double>::infinity();
            double gap = 0.0;
            for (double n : {1.0, 10.0, 100.0, 1000.0, 10000.0}) {
                const auto pen = solve_penalized(g, spec, n);
                c.require(pen.y.root() >= prev_root - 1e-12, inst.name + ": root decreased in n");
                prev_root = pen.y.root();
                double above = 0.0;
                gap = 0.0;
                for (int k = 0; k <= g.n_steps; ++k) {
                    for (std::size_t q = 0; q < g.slice_size(k); ++q) {
                        const double d = pen.y.slice(k)[q] - refl.slice(k)[q];
                        above = std::max(above, d);
                        gap = std::max(gap, -d);
                    }
                }
                c.require(above <= 1e-12, inst.name + ": penalized above reflected");
            }
            const double root_gap = refl.root() - prev_root;
            worst_gap = std::max(worst_gap, gap);
            worst_root_gap = std::max(worst_root_gap, root_gap);
            c.require(root_gap <= 1e-3, inst.name + ": root gap at n = 1e4 too large");
        }
    }
    os << "max root gap at n = 1e4: " << worst_root_gap << " (nodewise sup " << worst_gap << ")";
    return {c.pass(), os.str()};
}

Outcome comparison() {
    std::ostringstream os;
    Criterion c(os);
    oracle_test::Gen gen(4242);
    std::size_t bad[2] = {0, 0};
    for (int reflected = 0; reflected < 2; ++reflected) {
        for (int trial = 0; trial < 100; ++trial) {
            const auto marks = static_cast<std::size_t>(gen.integer(1, 3));
            const int N = gen.integer(5, 30);
            const auto comp = CompensatorSpec::constant(gen.uniform(0.1, 0.45 * N), std::vector<std::string>(marks, "e"),
                                                        std::vector<double>(marks, 1.0 / static_cast<double>(marks)));
            const auto g = build_chain(comp, 1.0, N, {KernelField::constant(2.0)});
            const auto [a, b] = oracle_test::ordered_pair(gen, marks, reflected == 1);
            const auto r = check_comparison(g, a, b, reflected == 1);
            c.require(r.gamma_condition, "generated kernel outside [0, bound]");
            if (!r.ordered()) ++bad[reflected];
        }
    }
    c.require(bad[0] == 0 && bad[1] == 0, "ordering violated");
    os << "pairs with violations: standard " << bad[0] << "/100, reflected " << bad[1] << "/100";
    return {c.pass(), os.str()};
}

Outcome measure_change() {
    std::ostringstream os;
    Criterion c(os);
    constexpr std::size_t paths = 100000;
    const auto inst = instances::two_mode_three_marks(50);
    const auto& p = inst.problem;
    const auto g = build_chain(p, inst.n_steps);
    const QuadratureGrid grid{p.horizon, 200};

    double worst_l = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto strat = random_strategy(p, g, s % 2, 0.1, 606, s);
        const auto kernel = switched_kernel(strat, p);
        RunningStats l;
        for (std::size_t i = 0; i < paths; ++i) {
            l.add(doleans_exponential(simulate_path(p.compensator, p.horizon, 700 + s, i), p.compensator, kernel, p.horizon, grid));
        }
        const double z = std::abs(l.mean() - 1.0) / l.stderr_of_mean();
        worst_l = std::max(worst_l, z);
        c.require(z <= 3.0, "E[L_T] differs from 1 for strategy " + std::to_string(s));
    }

    double worst_q = 0.0;
    const std::vector<std::function<double(double, std::size_t)>> integrands{
        [](double, std::size_t) { return 1.0; },
        [](double t, std::size_t m) { return (1.0 + t) * (static_cast<double>(m) - 1.0); },
        [](double t, std::size_t m) { return m == 2 ? std::cos(3.0 * t) : t * t; },
    };
    for (std::size_t h = 0; h < integrands.size(); ++h) {
        RunningStats q;
        for (std::size_t i = 0; i < paths; ++i) {
            q.add(compensated_integral(simulate_path(p.compensator, p.horizon, 900 + h, i), p.compensator, integrands[h], grid));
        }
        const double z = std::abs(q.mean()) / q.stderr_of_mean();
        worst_q = std::max(worst_q, z);
        c.require(z <= 3.0, "compensated integral mean differs from 0");
    }

    double worst_e = 0.0;
    for (const auto& named : instances::ci_suite()) {
        const auto gg = build_chain(named.problem, named.n_steps);
        const auto strat = random_strategy(named.problem, gg, 0, 0.05, 31, 0);
        const auto a = estimate_J(named.problem, gg, strat, paths, 41, EstimatorMethod::reweighted);
        const auto b = estimate_J(named.problem, gg, strat, paths, 42, EstimatorMethod::direct);
        const double z = std::abs(a.mean - b.mean) / std::hypot(a.std_error, b.std_error);
        worst_e = std::max(worst_e, z);
        c.require(z <= 3.0, named.name + ": reweighted and direct disagree");
    }
    os << "max |z|: L_T " << worst_l << ", compensated " << worst_q << ", estimators " << worst_e;
    return {c.pass(), os.str()};
}

Outcome monte_carlo_verification() {
    std::ostringstream os;
    Criterion c(os);
    for (const auto& inst : {instances::instance_a(20), instances::three_mode_linear(50)}) {
        const auto g = build_chain(inst.problem, inst.n_steps);
        const auto [sol, rep] = picard_solve(g, inst.problem);
        const auto r = verify_representation(sol, inst.problem, g, 100000, 8080);
        c.require(r.extracted_within_3_stderr(), inst.name + ": extracted strategy off by > 3 stderr");
        c.require(r.random.size() == 50, inst.name + ": expected 50 random strategies");
        c.require(r.random_exceeding == 0, inst.name + ": a random strategy beats y(root)");
        os << inst.name << ": y = " << r.y_root << ", J = " << r.extracted.mean << " +- " << r.extracted.std_error
           << " (" << r.extracted_gap_in_stderr << " se), random above: " << r.random_exceeding << "/50; ";
    }
    return {c.pass(), os.str()};
}

Outcome skorohod_and_validation() {
    std::ostringstream os;
    Criterion c(os);
    double worst = 0.0;
    std::size_t contacts = 0;
    for (const auto& inst : solved_instances()) {
        const auto g = build_chain(inst.problem, inst.n_steps);
        const auto [sol, rep] = picard_solve(g, inst.problem);
        for (std::size_t i = 0; i < inst.problem.n_modes(); ++i) {
            for_each_node(g, [&](const NodeState& s, int k, std::size_t n) {
                if (sol.modes[i].dk.slice(k)[n] > 0.0) {
                    ++contacts;
                    const double h = interconnected_obstacle(g, inst.problem, sol.modes, i, s);
                    worst = std::max(worst, std::abs(sol.modes[i].y.slice(k)[n] - h));
                }
            });
        }
    }
    c.require(worst <= 1e-9, "push away from the obstacle");
    std::size_t rejected = 0;
    for (const auto& inst : instances::invalid_suite()) {
        const auto r = validate_problem(inst.problem, build_chain(inst.problem, inst.n_steps));
        if (!r.ok()) ++rejected;
        else c.require(false, inst.name + " accepted");
    }
    os << contacts << " contact nodes, max |y - h| = " << worst << ", rejected " << rejected << "/4 invalid instances";
    return {c.pass() && rejected == 4, os.str()};
}

Outcome refinement() {
    std::ostringstream os;
    Criterion c(os);
    std::vector<double> roots;
    for (int N : {20, 40, 80}) {
        const auto inst = instances::instance_a(N);
        const auto g = build_chain(inst.problem, N);
        roots.push_back(picard_solve(g, inst.problem).first.y(g, 0, NodeState{}));
    }
    const double d1 = roots[1] - roots[0], d2 = roots[2] - roots[1];
    c.require((d1 > 0.0 && d2 > 0.0) || (d1 < 0.0 && d2 < 0.0), "roots not monotone in N");
    c.require(std::abs(d2) < std::abs(d1), "differences do not shrink");
    os.precision(12);
    os << "y20 = " << roots[0] << ", y40 = " << roots[1] << ", y80 = " << roots[2] << ", |d| = " << std::abs(d1)
       << " then " << std::abs(d2);
    return {c.pass(), os.str()};
}

}  // namespace

int main() {
    run(1, "oracle equivalence", 60.0, oracle_equivalence);
    run(2, "exhaustive-search equivalence", 30.0, exhaustive_search);
    run(3, "monotone Picard iteration", 0.0, monotone_picard);
    run(4, "penalization", 0.0, penalization);
    run(5, "comparison", 0.0, comparison);
    run(6, "measure-change statistics", 120.0, measure_change);
    run(7, "Monte Carlo verification", 300.0, monte_carlo_verification);
    run(8, "contact set and validation", 0.0, skorohod_and_validation);
    run(9, "refinement self-consistency", 0.0, refinement);
    std::printf("%s\n", failures == 0 ? "acceptance passed" : "acceptance failed");
    return failures == 0 ? 0 : 1;
}
