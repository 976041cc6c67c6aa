#ifndef SWBSDE_PROBLEM_FILE_HPP
#define SWBSDE_PROBLEM_FILE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lattice.hpp"
#include "mpp.hpp"
#include "problem.hpp"

namespace swbsde {

using json = nlohmann::json;

inline constexpr int problem_schema_version = 1;

/// Malformed document: bad JSON, missing field, unknown expression form.
class ProblemFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ProblemFile {
    SwitchingProblem problem;
    int n_steps = 20;
    int max_jumps = -1;
};

namespace file_detail {

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
    throw ProblemFileError(where + ": " + what);
}

inline double number(const json& j, const std::string& where) {
    if (!j.is_number()) fail(where, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(where, "expected a finite number");
    return v;
}

inline const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) fail(where, std::string("missing field '") + key + "'");
    return j.at(key);
}

inline std::vector<double> number_list(const json& j, const std::string& where) {
    if (!j.is_array()) fail(where, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

/// Index of the piece containing t for increasing breakpoints starting at 0: last b with times[b] <= t.
inline std::size_t piece(const std::vector<double>& times, double t) {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin() - 1);
}

inline std::vector<double> breakpoints(const json& j, const std::string& where) {
    std::vector<double> t = number_list(j, where);
    if (t.empty() || t.front() != 0.0) fail(where, "breakpoints must start at 0");
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (!(t[i] > t[i - 1])) fail(where, "breakpoints must be strictly increasing");
    }
    return t;
}

inline double state_variable(const State& s, const std::string& var) {
    if (var == "t") return s.t;
    if (var == "w") return s.w;
    return static_cast<double>(s.n);
}

/**
 * Whitelisted data expressions over (t, w, n):
 *   number                                     constant
 *   {"affine": {"c":..,"t":..,"w":..,"n":..}}   c + a_t t + a_w w + a_n n
 *   {"max": [e, ...]}, {"min": [e, ...]}
 *   {"abs": e}
 *   {"indicator": {"var": "w", "threshold": x, "above": true}}  1 if var >= x (var < x when above is false)
 *   {"product": [e1, e2]}
 */
inline StateFunction expression(const json& j, const std::string& where) {
    if (j.is_number()) return constant_function(number(j, where));
    if (!j.is_object() || j.size() != 1) fail(where, "expression must be a number or a single-key object");
    const std::string kind = j.begin().key();
    const json& arg = j.begin().value();
    const std::string at = where + "." + kind;

    if (kind == "affine") {
        if (!arg.is_object()) fail(at, "expected an object of coefficients");
        double c = 0.0, at_ = 0.0, aw = 0.0, an = 0.0;
        for (const auto& [key, value] : arg.items()) {
            const double v = number(value, at + "." + key);
            if (key == "c") c = v;
            else if (key == "t") at_ = v;
            else if (key == "w") aw = v;
            else if (key == "n") an = v;
            else fail(at, "unknown coefficient '" + key + "'");
        }
        return [c, at_, aw, an](const State& s) { return c + at_ * s.t + aw * s.w + an * s.n; };
    }
    if (kind == "max" || kind == "min") {
        if (!arg.is_array() || arg.empty()) fail(at, "expected a non-empty array");
        std::vector<StateFunction> parts;
        for (std::size_t i = 0; i < arg.size(); ++i) parts.push_back(expression(arg[i], at + "[" + std::to_string(i) + "]"));
        const bool is_max = kind == "max";
        return [parts, is_max](const State& s) {
            double v = parts.front()(s);
            for (std::size_t i = 1; i < parts.size(); ++i) v = is_max ? std::max(v, parts[i](s)) : std::min(v, parts[i](s));
            return v;
        };
    }
    if (kind == "abs") {
        StateFunction inner = expression(arg, at);
        return [inner](const State& s) { return std::abs(inner(s)); };
    }
    if (kind == "indicator") {
        const json& v = field(arg, "var", at);
        if (!v.is_string()) fail(at + ".var", "expected \"t\", \"w\" or \"n\"");
        const std::string var = v.get<std::string>();
        if (var != "t" && var != "w" && var != "n") fail(at + ".var", "expected \"t\", \"w\" or \"n\"");
        const double x = number(field(arg, "threshold", at), at + ".threshold");
        bool above = true;
        if (arg.contains("above")) {
            if (!arg.at("above").is_boolean()) fail(at + ".above", "expected a boolean");
            above = arg.at("above").get<bool>();
        }
        return [var, x, above](const State& s) {
            const bool hit = state_variable(s, var) >= x;
            return (hit == above) ? 1.0 : 0.0;
        };
    }
    if (kind == "product") {
        if (!arg.is_array() || arg.empty() || arg.size() > 2) fail(at, "expected one or two factors");
        StateFunction a = expression(arg[0], at + "[0]");
        if (arg.size() == 1) return a;
        StateFunction b = expression(arg[1], at + "[1]");
        return [a, b](const State& s) { return a(s) * b(s); };
    }
    fail(where, "unknown expression form '" + kind + "'");
}

inline CompensatorSpec compensator(const json& doc, double horizon) {
    CompensatorSpec c;
    const json& marks = field(doc, "marks", "problem");
    if (!marks.is_array() || marks.empty()) fail("marks", "expected a non-empty array of labels");
    for (const auto& m : marks) {
        if (!m.is_string()) fail("marks", "labels must be strings");
        c.marks.push_back(m.get<std::string>());
    }
    const std::size_t M = c.marks.size();

    const json& lam = field(doc, "lambda", "problem");
    const json& kind_j = field(lam, "kind", "lambda");
    if (!kind_j.is_string()) fail("lambda.kind", "expected a string");
    const std::string kind = kind_j.get<std::string>();
    double bound = 0.0;
    if (kind == "constant") {
        const double v = number(field(lam, "value", "lambda"), "lambda.value");
        c.lambda = [v](double) { return v; };
        bound = v;
    } else if (kind == "linear") {
        const double a = number(field(lam, "a", "lambda"), "lambda.a");
        const double b = number(field(lam, "b", "lambda"), "lambda.b");
        c.lambda = [a, b](double t) { return a + b * t; };
        bound = std::max(a, a + b * horizon);
    } else if (kind == "table") {
        const auto times = breakpoints(field(lam, "times", "lambda"), "lambda.times");
        const auto values = number_list(field(lam, "values", "lambda"), "lambda.values");
        if (values.size() != times.size()) fail("lambda", "one value per breakpoint required");
        c.lambda = [times, values](double t) { return values[piece(times, t)]; };
        for (double v : values) bound = std::max(bound, v);
    } else {
        fail("lambda.kind", "expected constant, linear or table");
    }
    c.lambda_bound = lam.contains("bound") ? number(lam.at("bound"), "lambda.bound") : bound;

    const json& phi = field(doc, "phi", "problem");
    std::vector<double> times{0.0};
    std::vector<std::vector<double>> weights;
    if (phi.is_array()) {
        weights.push_back(number_list(phi, "phi"));
    } else {
        times = breakpoints(field(phi, "times", "phi"), "phi.times");
        const json& w = field(phi, "weights", "phi");
        if (!w.is_array() || w.size() != times.size()) fail("phi.weights", "one row per breakpoint required");
        for (std::size_t r = 0; r < w.size(); ++r) weights.push_back(number_list(w[r], "phi.weights[" + std::to_string(r) + "]"));
    }
    for (const auto& row : weights) {
        if (row.size() != M) fail("phi", "each row needs one weight per mark");
    }
    c.phi = [times, weights](double t, std::size_t m) { return weights[piece(times, t)][m]; };
    return c;
}

inline KernelField kernel(const json& j, std::size_t n_marks, const std::string& where) {
    KernelField k;
    std::vector<double> times{0.0};
    std::vector<std::vector<double>> rows;
    if (j.is_number()) {
        rows.push_back(std::vector<double>(n_marks, number(j, where)));
    } else if (j.is_array()) {
        rows.push_back(number_list(j, where));
    } else if (j.is_object()) {
        times = breakpoints(field(j, "times", where), where + ".times");
        const json& v = field(j, "values", where);
        if (!v.is_array() || v.size() != times.size()) fail(where + ".values", "one row per breakpoint required");
        for (std::size_t r = 0; r < v.size(); ++r) {
            const json& row = v[r];
            rows.push_back(row.is_number() ? std::vector<double>(n_marks, number(row, where))
                                           : number_list(row, where + ".values[" + std::to_string(r) + "]"));
        }
    } else {
        fail(where, "kernel must be a number, a per-mark array or a table");
    }
    double b = 0.0;
    for (const auto& row : rows) {
        if (row.size() != n_marks) fail(where, "kernel needs one value per mark");
        for (double r : row) b = std::max(b, r);
    }
    k.bound = b;
    k.eta = 4.0 + std::pow(b, 4);
    if (j.is_object()) {
        if (j.contains("bound")) k.bound = number(j.at("bound"), where + ".bound");
        if (j.contains("eta")) k.eta = number(j.at("eta"), where + ".eta");
    }
    k.value = [times, rows](double t, std::size_t m) { return rows[piece(times, t)][m]; };
    return k;
}

inline CostStructure costs(const json& j, std::size_t m) {
    // Dense matrix of numbers or {"a":..,"b":..} entries meaning a + b t.
    if (!j.is_array() || j.size() != m) fail("costs", "expected an m x m matrix");
    std::vector<std::vector<double>> a(m, std::vector<double>(m)), b(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
        if (!j[i].is_array() || j[i].size() != m) fail("costs", "expected an m x m matrix");
        for (std::size_t k = 0; k < m; ++k) {
            const json& e = j[i][k];
            const std::string at = "costs[" + std::to_string(i) + "][" + std::to_string(k) + "]";
            if (e.is_number()) {
                a[i][k] = number(e, at);
            } else {
                a[i][k] = number(field(e, "a", at), at + ".a");
                b[i][k] = e.contains("b") ? number(e.at("b"), at + ".b") : 0.0;
            }
        }
    }
    return CostStructure{[a, b](double t, std::size_t i, std::size_t k) { return a[i][k] + b[i][k] * t; }};
}

}  // namespace file_detail

inline ProblemFile parse_problem(const json& doc) {
    using namespace file_detail;
    if (!doc.is_object()) fail("problem", "expected a JSON object");
    if (doc.contains("schema_version")) {
        const json& v = doc.at("schema_version");
        if (!v.is_number_integer() || v.get<int>() != problem_schema_version) {
            fail("schema_version", "unsupported version (expected " + std::to_string(problem_schema_version) + ")");
        }
    }
    ProblemFile out;
    SwitchingProblem& p = out.problem;
    p.horizon = number(field(doc, "horizon", "problem"), "horizon");
    if (!(p.horizon > 0.0)) fail("horizon", "must be positive");
    const json& n = field(doc, "n_steps", "problem");
    if (!n.is_number_integer() || n.get<long long>() < 1) fail("n_steps", "expected a positive integer");
    out.n_steps = n.get<int>();
    if (doc.contains("max_jumps")) {
        if (!doc.at("max_jumps").is_number_integer()) fail("max_jumps", "expected an integer");
        out.max_jumps = doc.at("max_jumps").get<int>();
    }
    p.beta = doc.contains("beta") ? number(doc.at("beta"), "beta") : 2.0;
    p.compensator = compensator(doc, p.horizon);

    const json& modes = field(doc, "modes", "problem");
    if (!modes.is_array() || modes.empty()) fail("modes", "expected a non-empty array");
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const std::string where = "modes[" + std::to_string(i) + "]";
        const json& mj = modes[i];
        ModeSpec m;
        m.name = mj.contains("name") && mj.at("name").is_string() ? mj.at("name").get<std::string>() : "mode" + std::to_string(i);
        m.kernel = mj.contains("kernel") ? kernel(mj.at("kernel"), p.compensator.n_marks(), where + ".kernel")
                                         : kernel(json(1.0), p.compensator.n_marks(), where + ".kernel");
        if (mj.contains("terminal")) m.terminal = expression(mj.at("terminal"), where + ".terminal");
        if (mj.contains("running_f")) m.running_f = expression(mj.at("running_f"), where + ".running_f");
        if (mj.contains("running_g")) m.running_g = expression(mj.at("running_g"), where + ".running_g");
        p.modes.push_back(std::move(m));
    }
    if (doc.contains("costs")) {
        p.costs = costs(doc.at("costs"), p.modes.size());
    } else if (p.modes.size() > 1) {
        fail("costs", "required when there is more than one mode");
    }
    return out;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ProblemFileError(path + ": cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ProblemFileError(path + ": " + e.what());
    }
}

inline ProblemFile load_problem_file(const std::string& path) { return parse_problem(read_json_file(path)); }

struct StrategyFileResult {
    Strategy strategy;
    std::vector<std::string> warnings;
};

/**
 * Strategy document: either a list of [time, mode] pairs or
 * {"start_mode": i, "switches": [[time, mode], ...]}. Times are snapped to the
 * nearest grid time; a time outside [0, T] by more than dt / 2 is rejected,
 * any other adjustment beyond 1e-12 is reported as a warning.
 */
inline StrategyFileResult parse_strategy(const json& doc, const ChainGrid& g) {
    using namespace file_detail;
    StrategyFileResult r;
    const json* list = &doc;
    if (doc.is_object()) {
        if (doc.contains("start_mode")) {
            const json& s = doc.at("start_mode");
            if (!s.is_number_integer() || s.get<long long>() < 0) fail("start_mode", "expected a nonnegative integer");
            r.strategy.start_mode = s.get<std::size_t>();
        }
        list = &field(doc, "switches", "strategy");
    }
    if (!list->is_array()) fail("strategy", "expected a list of [time, mode] pairs");
    for (std::size_t i = 0; i < list->size(); ++i) {
        const std::string at = "switches[" + std::to_string(i) + "]";
        const json& e = (*list)[i];
        double t;
        long long mode;
        if (e.is_array() && e.size() == 2) {
            t = number(e[0], at + "[0]");
            if (!e[1].is_number_integer()) fail(at + "[1]", "expected an integer mode");
            mode = e[1].get<long long>();
        } else if (e.is_object()) {
            t = number(field(e, "time", at), at + ".time");
            const json& mj = field(e, "mode", at);
            if (!mj.is_number_integer()) fail(at + ".mode", "expected an integer mode");
            mode = mj.get<long long>();
        } else {
            fail(at, "expected [time, mode]");
        }
        if (mode < 0) fail(at, "negative mode");
        if (t < -0.5 * g.dt || t > g.horizon + 0.5 * g.dt) fail(at, "time outside [0, T]");
        const long long k = std::clamp(std::llround(t / g.dt), 0LL, static_cast<long long>(g.n_steps));
        const double snapped = g.times[static_cast<std::size_t>(k)];
        if (std::abs(snapped - t) > 1e-12) {
            std::ostringstream os;
            os.precision(17);
            os << at << ": time " << t << " snapped to grid time " << snapped;
            r.warnings.push_back(os.str());
        }
        r.strategy.switches.push_back(Switch{snapped, static_cast<std::size_t>(mode)});
    }
    return r;
}

}  // namespace swbsde

#endif  // SWBSDE_PROBLEM_FILE_HPP
