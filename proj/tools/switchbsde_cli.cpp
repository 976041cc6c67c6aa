#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <switchbsde/output.hpp>
#include <switchbsde/problem_file.hpp>
#include <switchbsde/switchbsde.hpp>

namespace {

using namespace swbsde;

enum ExitCode : int { ok = 0, usage = 1, invalid = 2, no_convergence = 3 };

/// Loading failed in a way that maps to a specific exit code; the message is already printed.
struct Exit {
    int code;
};

struct Loaded {
    ProblemFile file;
    ChainGrid grid;
};

Loaded load(const std::string& path, std::optional<int> n_steps_override) {
    Loaded l;
    try {
        l.file = load_problem_file(path);
    } catch (const ProblemFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        throw Exit{usage};
    }
    if (n_steps_override) l.file.n_steps = *n_steps_override;
    try {
        l.grid = build_chain(l.file.problem, l.file.n_steps, l.file.max_jumps);
    } catch (const StabilityViolation& e) {
        nlohmann::json j;
        j["schema"] = validation_report_schema;
        j["ok"] = false;
        j["violations"] = {{{"kind", "stability"},
                            {"step", e.step},
                            {"mode", e.mode == StabilityViolation::reference ? -1 : static_cast<long long>(e.mode)},
                            {"value", e.value},
                            {"suggested_steps", e.suggested_steps},
                            {"message", e.what()}}};
        std::cerr << j.dump(2) << "\n";
        throw Exit{invalid};
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        throw Exit{invalid};
    }
    const ValidationReport report = validate_problem(l.file.problem, l.grid);
    if (!report.ok()) {
        std::cerr << to_json(report).dump(2) << "\n";
        throw Exit{invalid};
    }
    return l;
}

/// Writes to `path`, or to stdout when it is empty.
void emit(const std::string& path, const std::function<void(std::ostream&)>& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out) {
        std::cerr << "error: cannot write " << path << "\n";
        throw Exit{usage};
    }
    write(out);
}

int cmd_solve(const std::string& file, std::optional<int> n_steps, double tol, int max_iter, const std::string& out,
              const std::string& report_path) {
    const Loaded l = load(file, n_steps);
    try {
        auto [sol, report] = picard_solve(l.grid, l.file.problem, tol, max_iter);
        emit(out, [&](std::ostream& os) { write_solution_csv(os, l.grid, sol); });
        if (!report_path.empty()) {
            emit(report_path, [&](std::ostream& os) { os << to_json(report, sol).dump(2) << "\n"; });
        }
        return ok;
    } catch (const PicardNonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        SystemSolution empty;
        if (!report_path.empty()) {
            emit(report_path, [&](std::ostream& os) { os << to_json(e.report, empty).dump(2) << "\n"; });
        }
        return no_convergence;
    }
}

int cmd_oracle(const std::string& file, std::optional<int> n_steps, const std::string& out) {
    const Loaded l = load(file, n_steps);
    const ValueTable t = dp_value(l.grid, l.file.problem);
    emit(out, [&](std::ostream& os) { write_value_table_csv(os, l.grid, t); });
    return ok;
}

int cmd_simulate(const std::string& file, long long paths, std::uint64_t seed, std::optional<int> kernel_mode,
                 const std::string& out) {
    if (paths < 1) {
        std::cerr << "error: --paths must be at least 1\n";
        return usage;
    }
    const Loaded l = load(file, std::nullopt);
    const auto& p = l.file.problem;
    if (kernel_mode && (*kernel_mode < 0 || static_cast<std::size_t>(*kernel_mode) >= p.n_modes())) {
        std::cerr << "error: --kernel-mode out of range\n";
        return usage;
    }
    emit(out, [&](std::ostream& os) {
        os << "# schema=" << paths_csv_schema << "\n";
        os << "path,time,mark\n";
        for (long long i = 0; i < paths; ++i) {
            const auto idx = static_cast<std::uint64_t>(i);
            const MarkedPath mp =
                kernel_mode ? simulate_path_under_kernel(p.compensator, p.modes[static_cast<std::size_t>(*kernel_mode)].kernel,
                                                         p.horizon, seed, idx)
                            : simulate_path(p.compensator, p.horizon, seed, idx);
            for (const auto& e : mp.events) os << i << ',' << fmt_double(e.time) << ',' << p.compensator.marks[e.mark] << '\n';
        }
    });
    return ok;
}

int cmd_evaluate(const std::string& file, const std::string& strategy_file, long long paths, std::uint64_t seed,
                 const std::string& method) {
    if (paths < 2) {
        std::cerr << "error: --paths must be at least 2\n";
        return usage;
    }
    const Loaded l = load(file, std::nullopt);
    StrategyFileResult s;
    try {
        s = parse_strategy(read_json_file(strategy_file), l.grid);
    } catch (const ProblemFileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    }
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";
    const ValidationReport rep = validate_strategy(s.strategy, l.file.problem);
    for (const auto& v : rep.violations) {
        if (v.warning) std::cerr << "warning: " << v.message << "\n";
    }
    if (!rep.ok()) {
        std::cerr << to_json(rep).dump(2) << "\n";
        return invalid;
    }
    nlohmann::json j;
    j["schema"] = estimate_schema;
    const auto n = static_cast<std::size_t>(paths);
    if (method == "reweighted" || method == "both") {
        j["reweighted"] = to_json(estimate_J(l.file.problem, l.grid, s.strategy, n, seed, EstimatorMethod::reweighted));
    }
    if (method == "direct" || method == "both") {
        j["direct"] = to_json(estimate_J(l.file.problem, l.grid, s.strategy, n, seed, EstimatorMethod::direct));
    }
    std::cout << j.dump(2) << "\n";
    return ok;
}

int cmd_verify(const std::string& file, long long paths, std::uint64_t seed, std::size_t start_mode,
               std::size_t n_random, double tol, int max_iter) {
    if (paths < 2) {
        std::cerr << "error: --paths must be at least 2\n";
        return usage;
    }
    const Loaded l = load(file, std::nullopt);
    if (start_mode >= l.file.problem.n_modes()) {
        std::cerr << "error: --start-mode out of range\n";
        return usage;
    }
    try {
        const auto [sol, report] = picard_solve(l.grid, l.file.problem, tol, max_iter);
        VerificationOptions opt;
        opt.start_mode = start_mode;
        opt.n_random = n_random;
        const VerificationReport r =
            verify_representation(sol, l.file.problem, l.grid, static_cast<std::size_t>(paths), seed, opt);
        nlohmann::json j = to_json(r);
        j["picard_iterations"] = report.iterations;
        std::cout << j.dump(2) << "\n";
        return ok;
    } catch (const PicardNonConvergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return no_convergence;
    }
}

/// Closed-form checks on tiny instances; one line per check.
int cmd_selftest() {
    int failures = 0;
    auto check = [&](const std::string& name, bool pass) {
        std::cout << (pass ? "PASS " : "FAIL ") << name << "\n";
        failures += pass ? 0 : 1;
    };
    auto close = [](double a, double b, double tol) { return std::abs(a - b) <= tol; };

    {
        const auto s = instances::single_mode(1.5);
        const auto g = build_chain(s.problem, s.n_steps);
        const auto y = solve_mode_floor(g, s.problem)[0];
        bool all = true;
        for (int k = 0; k <= g.n_steps; ++k) {
            for (double v : y.y.slice(k)) all = all && v == 1.5;
        }
        check("constant terminal gives constant value", all);
    }
    {
        const auto s = instances::single_mode(0.0, 0.0, 1.0);
        const auto g = build_chain(s.problem, s.n_steps);
        check("unit dt-driver integrates to the horizon", close(solve_mode_floor(g, s.problem)[0].y.root(), 1.0, 1e-12));
    }
    {
        const auto comp = CompensatorSpec::constant(2.0, {"e"}, {1.0});
        MarkedPath empty;
        empty.horizon = 1.0;
        const double v = compensated_integral(empty, comp, [](double, std::size_t) { return 1.0; }, QuadratureGrid{1.0, 10});
        check("compensated integral of 1 without events is -A_T", close(v, -2.0, 1e-12));
        const MarkedPath path = simulate_path(comp, 1.0, 7);
        check("identity kernel has unit exponential",
              doleans_exponential(path, comp, KernelField::constant(1.0), 1.0, QuadratureGrid{1.0, 10}) == 1.0);
    }
    {
        bool thrown = false;
        int suggested = 0;
        try {
            build_chain(CompensatorSpec::constant(20.0, {"e"}, {1.0}), 1.0, 10, {KernelField::constant(2.0)});
        } catch (const StabilityViolation& e) {
            thrown = true;
            suggested = e.suggested_steps;
        }
        check("unstable chain reports the required step count", thrown && suggested == 40);
    }
    for (const auto& bad : instances::invalid_suite()) {
        const auto g = build_chain(bad.problem, bad.n_steps);
        check("validator rejects " + bad.name, !validate_problem(bad.problem, g).ok());
    }
    {
        const auto s = instances::single_mode(0.7, 0.2, 0.1, 1.5);
        const auto g = build_chain(s.problem, s.n_steps);
        const auto [sol, report] = picard_solve(g, s.problem);
        check("single mode converges in one iteration", report.iterations == 1 &&
                                                            sol.modes[0].y.root() == solve_mode_floor(g, s.problem)[0].y.root());
    }
    {
        const auto s = instances::identical_modes();
        const auto g = build_chain(s.problem, s.n_steps);
        const auto [sol, report] = picard_solve(g, s.problem);
        double dk = 0.0;
        for (const auto& m : sol.modes) {
            for (int k = 0; k <= g.n_steps; ++k) {
                for (double v : m.dk.slice(k)) dk = std::max(dk, v);
            }
        }
        check("identical modes never switch", sup_distance(sol.modes[0].y, sol.modes[1].y) == 0.0 && dk == 0.0);
    }
    {
        Strategy s;
        s.start_mode = 1;
        s.switches = {{0.5, 3}};
        check("mode process keeps the old mode at the switch time", mode_process(s, 0.5) == 1 && mode_process(s, 0.5001) == 3);
        SwitchingProblem p;
        p.horizon = 1.0;
        p.costs = CostStructure::uniform(1.0);
        p.modes.resize(4);
        check("cost is charged at the switch time", cumulated_cost(s, p, 0.4) == 0.0 && cumulated_cost(s, p, 0.5) == 1.0);
    }
    {
        const auto s = instances::single_mode(2.5);
        const auto g = build_chain(s.problem, s.n_steps);
        Strategy none;
        const Estimate e = estimate_J(s.problem, g, none, 100, 1, EstimatorMethod::direct);
        check("degenerate payoff has exact mean and zero error", e.mean == 2.5 && e.std_error == 0.0);
    }
    std::cout << (failures == 0 ? "selftest passed" : "selftest failed") << "\n";
    return failures == 0 ? ok : usage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal switching with marked point processes: lattice solver, oracle and verification"};
    app.require_subcommand(1);

    std::string file, out, report_path, strategy_file, method = "both";
    std::optional<int> n_steps;
    double tol = 1e-10;
    int max_iter = 1000;
    long long paths = 0;
    std::uint64_t seed = 0;
    std::optional<int> kernel_mode;
    std::size_t start_mode = 0, n_random = 50;

    auto* solve = app.add_subcommand("solve", "Picard solve of the interconnected system; CSV of y and dK");
    solve->add_option("file", file, "problem JSON")->required()->check(CLI::ExistingFile);
    solve->add_option("--n-steps", n_steps, "override the chain resolution");
    solve->add_option("--tol", tol, "sup-norm stopping tolerance")->check(CLI::PositiveNumber);
    solve->add_option("--max-iter", max_iter, "iteration cap")->check(CLI::PositiveNumber);
    solve->add_option("--out", out, "CSV output (stdout when omitted)");
    solve->add_option("--report", report_path, "iteration report JSON");

    auto* oracle = app.add_subcommand("oracle", "dynamic programming value table as CSV");
    oracle->add_option("file", file, "problem JSON")->required()->check(CLI::ExistingFile);
    oracle->add_option("--n-steps", n_steps, "override the chain resolution");
    oracle->add_option("--out", out, "CSV output (stdout when omitted)");

    auto* simulate = app.add_subcommand("simulate", "marked point process paths by thinning");
    simulate->add_option("file", file, "problem JSON")->required()->check(CLI::ExistingFile);
    simulate->add_option("--paths", paths, "number of paths")->required();
    simulate->add_option("--seed", seed, "RNG seed")->required();
    simulate->add_option("--kernel-mode", kernel_mode, "simulate under this mode's kernel");
    simulate->add_option("--out", out, "CSV output (stdout when omitted)");

    auto* evaluate = app.add_subcommand("evaluate", "Monte Carlo value of a fixed strategy");
    evaluate->add_option("file", file, "problem JSON")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--strategy-file", strategy_file, "strategy JSON")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--paths", paths, "number of paths")->required();
    evaluate->add_option("--seed", seed, "RNG seed")->required();
    evaluate->add_option("--method", method, "reweighted, direct or both")
        ->check(CLI::IsMember({"reweighted", "direct", "both"}));

    auto* verify = app.add_subcommand("verify", "solver value against extracted, random and DP strategies");
    verify->add_option("file", file, "problem JSON")->required()->check(CLI::ExistingFile);
    verify->add_option("--paths", paths, "paths per estimate")->required();
    verify->add_option("--seed", seed, "RNG seed")->required();
    verify->add_option("--start-mode", start_mode, "initial mode");
    verify->add_option("--random", n_random, "number of random strategies");
    verify->add_option("--tol", tol, "Picard tolerance")->check(CLI::PositiveNumber);
    verify->add_option("--max-iter", max_iter, "Picard iteration cap")->check(CLI::PositiveNumber);

    auto* selftest = app.add_subcommand("selftest", "closed-form checks on built-in instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : usage;
    }

    try {
        if (*solve) return cmd_solve(file, n_steps, tol, max_iter, out, report_path);
        if (*oracle) return cmd_oracle(file, n_steps, out);
        if (*simulate) return cmd_simulate(file, paths, seed, kernel_mode, out);
        if (*evaluate) return cmd_evaluate(file, strategy_file, paths, seed, method);
        if (*verify) return cmd_verify(file, paths, seed, start_mode, n_random, tol, max_iter);
        if (*selftest) return cmd_selftest();
    } catch (const Exit& e) {
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return usage;
    }
    return usage;
}
